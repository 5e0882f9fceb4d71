//! Shell spectra, spectral vorticity, enstrophy spectra and NRMSE metrics.
//!
//! Shell radii use integer mode indices `|m|`, not physical wavenumbers.
//! Two binnings are in use:
//!
//! * [`shell_spectrum`]: bin `b` holds modes with `|m|` in `[b - 0.5, b + 0.5)`.
//! * [`enstrophy_spectrum`]: bin `k` holds modes with `|m|` in `(k, k + 1]`,
//!   so the mean mode is never counted.
//!
//! Coefficients are the unnormalized forward transform. All work is done in f64.

use std::fmt::Write as _;

use thiserror::Error;

use crate::real::Real;
use crate::spectral::{hann_window_3d, Field, Grid3, Spectral, SpectralField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("expected {expected} channels, got {actual}")]
    ChannelCount { expected: usize, actual: usize },
    #[error("empty input sequence")]
    Empty,
    #[error("sequence lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("fields live on different grids or channel counts")]
    GridMismatch,
    #[error("reference is identically zero")]
    ZeroReference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShellSpectrum {
    pub bins: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnstrophySpectrum {
    /// `s[k]` collects modes with `|m|` in `(k, k + 1]`.
    pub s: Vec<f64>,
}

fn to_csv(header: &str, values: &[f64]) -> String {
    let mut out = format!("{header}\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{i},{v:e}");
    }
    out
}

impl ShellSpectrum {
    pub fn to_csv(&self) -> String {
        to_csv("shell,magnitude", &self.bins)
    }
}

impl EnstrophySpectrum {
    pub fn to_csv(&self) -> String {
        to_csv("k,enstrophy", &self.s)
    }
}

fn mode_radius(grid: &Grid3, idx: usize) -> f64 {
    let (x, y, z) = grid.coords(idx);
    let (a, b, c) = (grid.mode(x) as f64, grid.mode(y) as f64, grid.mode(z) as f64);
    (a * a + b * b + c * c).sqrt()
}

/// Bin of `[b - 0.5, b + 0.5)`.
fn centered_bin(r: f64) -> usize {
    (r + 0.5).floor() as usize
}

/// Bin of `(k, k + 1]`; `None` for the mean mode.
fn upper_bin(r: f64) -> Option<usize> {
    (r > 0.0).then(|| r.ceil() as usize - 1)
}

fn max_radius(grid: &Grid3) -> f64 {
    (3.0f64).sqrt() * (grid.n() / 2) as f64
}

/// Number of centered bins; every mode on the grid lands in one.
pub fn shell_bin_count(grid: &Grid3) -> usize {
    centered_bin(max_radius(grid)) + 1
}

fn transform<T: Real>(field: &Field<T>, windowed: bool) -> SpectralField<f64> {
    let f = field.cast::<f64>();
    let f = if windowed { hann_window_3d(&f) } else { f };
    Spectral::<f64>::new(*f.grid()).forward_unchecked(&f)
}

fn require_channels<T: Real>(field: &Field<T>, expected: usize) -> Result<(), AnalysisError> {
    if field.channels() != expected {
        return Err(AnalysisError::ChannelCount { expected, actual: field.channels() });
    }
    Ok(())
}

fn binned_shells<T: Real>(
    field: &Field<T>,
    windowed: bool,
    weight: impl Fn(f64) -> f64,
) -> Result<Vec<f64>, AnalysisError> {
    require_channels(field, 1)?;
    let grid = *field.grid();
    let spec = transform(field, windowed);
    let mut bins = vec![0.0; shell_bin_count(&grid)];
    for (idx, z) in spec.coeffs().iter().enumerate() {
        bins[centered_bin(mode_radius(&grid, idx))] += weight(z.norm());
    }
    Ok(bins)
}

/// Sum of `|coeff|` per centered shell of a single-channel field.
pub fn shell_spectrum<T: Real>(field: &Field<T>, windowed: bool) -> Result<ShellSpectrum, AnalysisError> {
    Ok(ShellSpectrum { bins: binned_shells(field, windowed, |a| a)? })
}

/// Sum of `|coeff|^2` per centered shell.
pub fn shell_energy<T: Real>(field: &Field<T>, windowed: bool) -> Result<ShellSpectrum, AnalysisError> {
    Ok(ShellSpectrum { bins: binned_shells(field, windowed, |a| a * a)? })
}

fn spectral_derivative(
    spectral: &Spectral<f64>,
    spec: &SpectralField<f64>,
    channel: usize,
    axis: usize,
) -> Vec<num_complex::Complex64> {
    let grid = *spectral.grid();
    let k = spectral.wavenumbers().axis_odd();
    spec.channel(channel)
        .iter()
        .enumerate()
        .map(|(idx, z)| {
            let (x, y, w) = grid.coords(idx);
            let kk = [k[x], k[y], k[w]][axis];
            num_complex::Complex64::new(-z.im * kk, z.re * kk)
        })
        .collect()
}

/// Spectral curl of a 3-channel velocity field.
pub fn vorticity<T: Real>(velocity: &Field<T>) -> Result<Field<T>, AnalysisError> {
    require_channels(velocity, 3)?;
    let grid = *velocity.grid();
    let sp = Spectral::<f64>::new(grid);
    let spec = sp.forward_unchecked(&velocity.cast::<f64>());
    let d = |c, a| spectral_derivative(&sp, &spec, c, a);
    let mut coeffs = Vec::with_capacity(3 * grid.len());
    // (dy uz - dz uy, dz ux - dx uz, dx uy - dy ux)
    for (c1, a1, c2, a2) in [(2, 1, 1, 2), (0, 2, 2, 0), (1, 0, 0, 1)] {
        coeffs.extend(d(c1, a1).into_iter().zip(d(c2, a2)).map(|(p, q)| p - q));
    }
    let omega = SpectralField::from_vec(grid, 3, coeffs).expect("shape");
    Ok(sp.inverse_real(&omega).cast())
}

/// Spectral divergence of a 3-channel field.
pub fn divergence<T: Real>(field: &Field<T>) -> Result<Field<T>, AnalysisError> {
    require_channels(field, 3)?;
    let grid = *field.grid();
    let sp = Spectral::<f64>::new(grid);
    let spec = sp.forward_unchecked(&field.cast::<f64>());
    let mut acc = spectral_derivative(&sp, &spec, 0, 0);
    for a in 1..3 {
        for (s, v) in acc.iter_mut().zip(spectral_derivative(&sp, &spec, a, a)) {
            *s += v;
        }
    }
    let div = SpectralField::from_vec(grid, 1, acc).expect("shape");
    Ok(sp.inverse_real(&div).cast())
}

pub fn enstrophy_bin_count(grid: &Grid3) -> usize {
    max_radius(grid).ceil() as usize
}

/// `S(k) = sum over (k, k+1] of 1/2 (|w_x|^2 + |w_y|^2 + |w_z|^2)`.
pub fn enstrophy_spectrum<T: Real>(vorticity: &Field<T>, windowed: bool) -> Result<EnstrophySpectrum, AnalysisError> {
    require_channels(vorticity, 3)?;
    let grid = *vorticity.grid();
    let spec = transform(vorticity, windowed);
    let len = grid.len();
    let mut s = vec![0.0; enstrophy_bin_count(&grid)];
    for idx in 0..len {
        let Some(k) = upper_bin(mode_radius(&grid, idx)) else { continue };
        let e: f64 = (0..3).map(|c| spec.coeffs()[c * len + idx].norm_sqr()).sum();
        s[k] += 0.5 * e;
    }
    Ok(EnstrophySpectrum { s })
}

/// Sequence-averaged, Hann-windowed enstrophy spectrum of velocity fields.
pub fn mean_enstrophy_spectrum<T: Real>(velocities: &[Field<T>]) -> Result<EnstrophySpectrum, AnalysisError> {
    let first = velocities.first().ok_or(AnalysisError::Empty)?;
    let mut acc = vec![0.0; enstrophy_bin_count(first.grid())];
    for u in velocities {
        if u.grid() != first.grid() || u.channels() != first.channels() {
            return Err(AnalysisError::GridMismatch);
        }
        let s = enstrophy_spectrum(&vorticity(u)?, true)?;
        for (a, v) in acc.iter_mut().zip(s.s) {
            *a += v;
        }
    }
    let count = velocities.len() as f64;
    Ok(EnstrophySpectrum { s: acc.into_iter().map(|v| v / count).collect() })
}

/// `sqrt(mean_k (S_pred - S_ref)^2 / mean_k S_ref^2)` on sequence-averaged spectra.
pub fn nrmse_es<T: Real>(pred: &[Field<T>], reference: &[Field<T>]) -> Result<f64, AnalysisError> {
    if pred.len() != reference.len() {
        return Err(AnalysisError::LengthMismatch(pred.len(), reference.len()));
    }
    let sp = mean_enstrophy_spectrum(pred)?;
    let sr = mean_enstrophy_spectrum(reference)?;
    if pred[0].grid() != reference[0].grid() {
        return Err(AnalysisError::GridMismatch);
    }
    spectrum_nrmse(&sp.s, &sr.s)
}

/// Relative RMS difference of two equally binned spectra.
pub fn spectrum_nrmse(pred: &[f64], reference: &[f64]) -> Result<f64, AnalysisError> {
    if pred.len() != reference.len() {
        return Err(AnalysisError::LengthMismatch(pred.len(), reference.len()));
    }
    let num: f64 = pred.iter().zip(reference).map(|(p, r)| (p - r) * (p - r)).sum();
    let den: f64 = reference.iter().map(|r| r * r).sum();
    if den == 0.0 {
        return Err(AnalysisError::ZeroReference);
    }
    Ok((num / den).sqrt())
}

fn slice_nrmse<T: Real>(pred: &[T], reference: &[T]) -> Result<f64, AnalysisError> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, r) in pred.iter().zip(reference) {
        let (p, r) = (p.as_f64(), r.as_f64());
        num += (p - r) * (p - r);
        den += r * r;
    }
    if den == 0.0 {
        return Err(AnalysisError::ZeroReference);
    }
    Ok((num / den).sqrt())
}

fn same_shape<T: Real>(a: &Field<T>, b: &Field<T>) -> Result<(), AnalysisError> {
    if a.grid() != b.grid() || a.channels() != b.channels() {
        return Err(AnalysisError::GridMismatch);
    }
    Ok(())
}

/// `sqrt(mean (p - r)^2 / mean r^2)` over all voxels and channels.
pub fn nrmse<T: Real>(pred: &Field<T>, reference: &Field<T>) -> Result<f64, AnalysisError> {
    same_shape(pred, reference)?;
    slice_nrmse(pred.data(), reference.data())
}

pub fn nrmse_per_channel<T: Real>(pred: &Field<T>, reference: &Field<T>) -> Result<Vec<f64>, AnalysisError> {
    same_shape(pred, reference)?;
    (0..pred.channels()).map(|c| slice_nrmse(pred.channel(c), reference.channel(c))).collect()
}
