//! Periodic-grid Fourier machinery: transforms, spectral derivatives,
//! two-thirds de-aliasing and Hann windowing.
//!
//! Normalization: the forward transform is unnormalized (a constant field `c`
//! maps to `c * n^3` at the zero mode) and the inverse carries `1/n^3`.
//! Odd derivatives zero the Nyquist mode so real inputs stay real.

mod fft;
mod field;
mod grid;

use num_complex::Complex;
use thiserror::Error;

pub use field::{Field, SpectralField};
pub use grid::{mode_index, Grid3};

use crate::real::Real;
use fft::Fft3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("resolution must be even and at least 4, got {0}")]
    InvalidResolution(usize),
    #[error("domain extent must be positive and finite, got {0}")]
    InvalidExtent(f64),
    #[error("array length {actual} does not match expected {expected}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("field grid does not match the transform grid")]
    GridMismatch,
    #[error("non-finite value in input at flat index {0}")]
    NonFinite(usize),
    #[error("inverse transform left imaginary residue {max_imag:e} (real scale {max_real:e})")]
    ImaginaryResidue { max_imag: f64, max_real: f64 },
    #[error("axis must be 0, 1 or 2, got {0}")]
    InvalidAxis(usize),
}

/// Physical wavenumbers `k = 2*pi*m/L` of a grid, per axis and per voxel.
#[derive(Debug, Clone)]
pub struct WaveNumbers {
    modes: Vec<i64>,
    k: Vec<f64>,
    k_odd: Vec<f64>,
    k2: Vec<f64>,
}

impl WaveNumbers {
    pub fn new(grid: &Grid3) -> Self {
        let n = grid.n();
        let two_pi_over_l = 2.0 * std::f64::consts::PI / grid.extent();
        let modes: Vec<i64> = (0..n).map(|i| grid.mode(i)).collect();
        let k: Vec<f64> = modes.iter().map(|&m| two_pi_over_l * m as f64).collect();
        let nyquist = -(n as i64) / 2;
        let k_odd = modes.iter().zip(&k).map(|(&m, &kk)| if m == nyquist { 0.0 } else { kk }).collect();
        let mut k2 = Vec::with_capacity(grid.len());
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    k2.push(k[x] * k[x] + k[y] * k[y] + k[z] * k[z]);
                }
            }
        }
        Self { modes, k, k_odd, k2 }
    }

    /// Signed integer mode per FFT slot.
    pub fn modes(&self) -> &[i64] {
        &self.modes
    }

    /// Physical wavenumber per FFT slot.
    pub fn axis(&self) -> &[f64] {
        &self.k
    }

    /// Wavenumber used by odd-order derivatives (Nyquist slot zeroed).
    pub fn axis_odd(&self) -> &[f64] {
        &self.k_odd
    }

    /// `|k|^2` per voxel.
    pub fn k2(&self) -> &[f64] {
        &self.k2
    }
}

/// Transform plans and precomputed tables for one grid.
pub struct Spectral<T: Real> {
    grid: Grid3,
    fft: Fft3<T>,
    wavenumbers: WaveNumbers,
    mask: Vec<bool>,
}

impl<T: Real> Spectral<T> {
    pub fn new(grid: Grid3) -> Self {
        let mask = dealias_mask(&grid);
        Self { grid, fft: Fft3::new(grid.n()), wavenumbers: WaveNumbers::new(&grid), mask }
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn wavenumbers(&self) -> &WaveNumbers {
        &self.wavenumbers
    }

    /// Two-thirds mask, `true` where a mode is retained.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn forward(&self, field: &Field<T>) -> Result<SpectralField<T>, SpectralError> {
        if *field.grid() != self.grid {
            return Err(SpectralError::GridMismatch);
        }
        if let Some(i) = field.data().iter().position(|v| !v.is_finite()) {
            return Err(SpectralError::NonFinite(i));
        }
        Ok(self.forward_unchecked(field))
    }

    pub(crate) fn forward_unchecked(&self, field: &Field<T>) -> SpectralField<T> {
        let coeffs: Vec<Complex<T>> = field.data().iter().map(|&v| Complex::new(v, T::zero())).collect();
        let mut spec = SpectralField::from_vec(self.grid, field.channels(), coeffs).expect("shape");
        for c in 0..spec.channels() {
            self.fft.forward(spec.channel_mut(c));
        }
        spec
    }

    /// Inverse transform; fails if the result carries a non-negligible imaginary part.
    pub fn inverse(&self, spec: &SpectralField<T>) -> Result<Field<T>, SpectralError> {
        if *spec.grid() != self.grid {
            return Err(SpectralError::GridMismatch);
        }
        if let Some(i) = spec.coeffs().iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(SpectralError::NonFinite(i));
        }
        let complex = self.inverse_complex(spec);
        let (max_real, max_imag) =
            complex.iter().fold((0.0f64, 0.0f64), |(r, i), z| (r.max(z.re.abs().as_f64()), i.max(z.im.abs().as_f64())));
        let tol = T::epsilon().as_f64().sqrt();
        if max_imag > tol * max_real.max(f64::MIN_POSITIVE) && max_imag > f64::MIN_POSITIVE {
            return Err(SpectralError::ImaginaryResidue { max_imag, max_real });
        }
        Ok(Field::from_vec(self.grid, spec.channels(), complex.into_iter().map(|z| z.re).collect()).expect("shape"))
    }

    /// Inverse transform keeping the real part without inspection; hot path of the steppers.
    pub(crate) fn inverse_real(&self, spec: &SpectralField<T>) -> Field<T> {
        let complex = self.inverse_complex(spec);
        Field::from_vec(self.grid, spec.channels(), complex.into_iter().map(|z| z.re).collect()).expect("shape")
    }

    fn inverse_complex(&self, spec: &SpectralField<T>) -> Vec<Complex<T>> {
        let mut buf = spec.coeffs().to_vec();
        let len = self.grid.len();
        for block in buf.chunks_exact_mut(len) {
            self.fft.inverse(block);
        }
        buf
    }

    /// Spectral first derivative along `axis` (0 = x, 1 = y, 2 = z).
    pub fn gradient(&self, spec: &SpectralField<T>, axis: usize) -> Result<SpectralField<T>, SpectralError> {
        if axis > 2 {
            return Err(SpectralError::InvalidAxis(axis));
        }
        if *spec.grid() != self.grid {
            return Err(SpectralError::GridMismatch);
        }
        let mut out = spec.clone();
        self.gradient_into(spec, axis, &mut out);
        Ok(out)
    }

    pub(crate) fn gradient_into(&self, spec: &SpectralField<T>, axis: usize, out: &mut SpectralField<T>) {
        let k: Vec<T> = self.wavenumbers.axis_odd().iter().map(|&v| T::of(v)).collect();
        let n = self.grid.n();
        let src = spec.coeffs().chunks_exact(n);
        let dst = out.coeffs_mut().chunks_exact_mut(n);
        // each chunk is one z-line at fixed (x, y)
        for (line, (s, d)) in src.zip(dst).enumerate() {
            let (x, y) = ((line / n) % n, line % n);
            for (z, (a, b)) in s.iter().zip(d.iter_mut()).enumerate() {
                let kk = match axis {
                    0 => k[x],
                    1 => k[y],
                    _ => k[z],
                };
                // i*k*u
                *b = Complex::new(-a.im * kk, a.re * kk);
            }
        }
    }

    /// Per-mode symbol of the Laplacian, `-|k|^2`.
    pub fn laplacian_symbol(&self) -> Vec<f64> {
        laplacian_symbol(&self.grid)
    }

    /// Per-mode symbol of the bi-Laplacian, `|k|^4`.
    pub fn bilaplacian_symbol(&self) -> Vec<f64> {
        bilaplacian_symbol(&self.grid)
    }

    /// Zeroes every mode outside the two-thirds mask, in place.
    pub fn dealias(&self, spec: &mut SpectralField<T>) {
        let len = self.grid.len();
        let zero = Complex::new(T::zero(), T::zero());
        for block in spec.coeffs_mut().chunks_exact_mut(len) {
            for (z, &keep) in block.iter_mut().zip(&self.mask) {
                if !keep {
                    *z = zero;
                }
            }
        }
    }
}

pub fn laplacian_symbol(grid: &Grid3) -> Vec<f64> {
    WaveNumbers::new(grid).k2().iter().map(|&k2| -k2).collect()
}

pub fn bilaplacian_symbol(grid: &Grid3) -> Vec<f64> {
    WaveNumbers::new(grid).k2().iter().map(|&k2| k2 * k2).collect()
}

/// Two-thirds rule: keep a mode iff `|m_j| < n/3` on every axis.
pub fn dealias_mask(grid: &Grid3) -> Vec<bool> {
    let n = grid.n();
    let keep_axis: Vec<bool> = (0..n).map(|i| 3 * grid.mode(i).unsigned_abs() < n as u64).collect();
    let mut mask = Vec::with_capacity(grid.len());
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                mask.push(keep_axis[x] && keep_axis[y] && keep_axis[z]);
            }
        }
    }
    mask
}

/// Hann weights `0.5 - 0.5*cos(2*pi*i/(len-1))` for `i in 0..len`.
pub fn hann_weights(len: usize) -> Vec<f64> {
    if len < 2 {
        return vec![1.0; len];
    }
    let denom = (len - 1) as f64;
    (0..len).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / denom).cos()).collect()
}

/// Applies the separable Hann window along all three axes of every channel.
pub fn hann_window_3d<T: Real>(field: &Field<T>) -> Field<T> {
    let grid = *field.grid();
    let n = grid.n();
    let w = hann_weights(n);
    let mut out = field.clone();
    let len = grid.len();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let (x, y, z) = grid.coords(i % len);
        *v = T::of(v.as_f64() * w[x] * w[y] * w[z]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn noise<T: Real>(grid: Grid3, channels: usize, seed: u64) -> Field<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field::from_fn(grid, channels, |_, _, _, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn round_trip_single_precision() {
        let g = Grid3::new(32, 1.0).unwrap();
        let sp = Spectral::<f32>::new(g);
        let f = noise::<f32>(g, 2, 1);
        let back = sp.inverse(&sp.forward(&f).unwrap()).unwrap();
        let err = f.data().iter().zip(back.data()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
        assert!(err < 1e-5, "max error {err}");
    }

    #[test]
    fn round_trip_all_sizes() {
        for n in [8, 16, 32, 64] {
            let g = Grid3::new(n, 1.0).unwrap();
            let sp = Spectral::<f64>::new(g);
            let f = noise::<f64>(g, 1, n as u64);
            let back = sp.inverse(&sp.forward(&f).unwrap()).unwrap();
            let err = f.data().iter().zip(back.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12, "n={n} error {err}");

            let sp32 = Spectral::<f32>::new(g);
            let f32f = f.cast::<f32>();
            let back = sp32.inverse(&sp32.forward(&f32f).unwrap()).unwrap();
            let err = f32f.data().iter().zip(back.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
            assert!(err < 1e-5, "n={n} f32 error {err}");
        }
    }

    #[test]
    fn constant_field_hits_zero_mode() {
        let g = Grid3::new(8, 1.0).unwrap();
        let sp = Spectral::<f64>::new(g);
        let f = Field::<f64>::from_fn(g, 1, |_, _, _, _| 2.5);
        let s = sp.forward(&f).unwrap();
        assert!((s.coeffs()[0].re - 2.5 * 512.0).abs() < 1e-9);
        assert!(s.coeffs()[1..].iter().all(|z| z.norm() < 1e-9));
    }

    #[test]
    fn single_harmonic_two_modes() {
        let g = Grid3::new(16, 1.0).unwrap();
        let sp = Spectral::<f64>::new(g);
        let f = Field::<f64>::from_fn(g, 1, |_, x, _, _| (2.0 * PI * x).sin());
        let s = sp.forward(&f).unwrap();
        let nonzero: Vec<usize> =
            s.coeffs().iter().enumerate().filter(|(_, z)| z.norm() > 1e-8).map(|(i, _)| i).collect();
        assert_eq!(nonzero, vec![g.index(1, 0, 0), g.index(15, 0, 0)]);
    }

    #[test]
    fn derivative_of_sine() {
        let g = Grid3::new(32, 1.0).unwrap();
        let sp = Spectral::<f32>::new(g);
        let f = Field::<f32>::from_fn(g, 1, |_, x, _, _| (2.0 * PI * x).sin());
        let d = sp.inverse(&sp.gradient(&sp.forward(&f).unwrap(), 0).unwrap()).unwrap();
        let exact = Field::<f32>::from_fn(g, 1, |_, x, _, _| 2.0 * PI * (2.0 * PI * x).cos());
        let err = d.data().iter().zip(exact.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        assert!(err < 1e-4, "error {err}");
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let g = Grid3::new(8, 1.0).unwrap();
        let sp = Spectral::<f64>::new(g);
        let s = sp.forward(&Field::from_fn(g, 1, |_, _, _, _| 3.0)).unwrap();
        for axis in 0..3 {
            let d = sp.inverse(&sp.gradient(&s, axis).unwrap()).unwrap();
            assert!(d.max_abs() < 1e-12);
        }
        assert_eq!(sp.gradient(&s, 3).unwrap_err(), SpectralError::InvalidAxis(3));
    }

    #[test]
    fn laplacian_matches_closed_form() {
        let g = Grid3::new(32, 1.0).unwrap();
        let sp = Spectral::<f64>::new(g);
        let f = Field::<f64>::from_fn(g, 1, |_, x, y, _| (2.0 * PI * x).sin() + (4.0 * PI * y).sin());
        let mut s = sp.forward(&f).unwrap();
        let sym = sp.laplacian_symbol();
        for (z, &l) in s.coeffs_mut().iter_mut().zip(&sym) {
            *z = *z * l;
        }
        let lap = sp.inverse(&s).unwrap();
        let oracle = Field::<f64>::from_fn(g, 1, |_, x, y, _| {
            -(2.0 * PI).powi(2) * (2.0 * PI * x).sin() - (4.0 * PI).powi(2) * (4.0 * PI * y).sin()
        });
        let err = lap.data().iter().zip(oracle.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "error {err}");
        let bi = sp.bilaplacian_symbol();
        assert!((bi[g.index(1, 0, 0)] - (2.0 * PI).powi(4)).abs() < 1e-9);
    }

    #[test]
    fn mask_two_thirds_n32() {
        let g = Grid3::new(32, 1.0).unwrap();
        let mask = dealias_mask(&g);
        // brute enumeration along one axis
        let kept: Vec<i64> = (0..32).filter(|&i| mask[g.index(i, 0, 0)]).map(|i| g.mode(i)).collect();
        assert_eq!(kept.iter().map(|m| m.abs()).max(), Some(10));
        assert_eq!(kept.len(), 21);
        assert!(mask[0]);
        assert!(!mask[g.index(16, 0, 0)]);
        assert!(!mask[g.index(0, 16, 16)]);
        for i in 0..32 {
            assert_eq!(mask[g.index(i, 0, 0)], mask[g.index((32 - i) % 32, 0, 0)]);
        }
    }

    #[test]
    fn dealias_is_idempotent() {
        let g = Grid3::new(16, 1.0).unwrap();
        let sp = Spectral::<f64>::new(g);
        let mut s = sp.forward(&noise::<f64>(g, 1, 3)).unwrap();
        sp.dealias(&mut s);
        let once = s.clone();
        sp.dealias(&mut s);
        assert_eq!(once, s);
    }

    #[test]
    fn hann_values() {
        let w = hann_weights(5);
        assert_eq!(w[0], 0.0);
        assert!(w[4].abs() < 1e-15);
        assert!((w[2] - 1.0).abs() < 1e-15);
        let g = Grid3::new(4, 1.0).unwrap();
        let out = hann_window_3d(&Field::<f64>::from_fn(g, 1, |_, _, _, _| 1.0));
        for (x, y, z) in [(0, 0, 0), (3, 3, 3), (0, 3, 0), (3, 0, 3)] {
            assert!(out.data()[g.index(x, y, z)].abs() < 1e-15);
        }
    }
}
