use num_complex::Complex;

use super::{Grid3, SpectralError};
use crate::real::Real;

/// Real multi-channel voxel state, layout `[channel][x][y][z]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    grid: Grid3,
    channels: usize,
    data: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn zeros(grid: Grid3, channels: usize) -> Self {
        Self { grid, channels, data: vec![T::zero(); channels * grid.len()] }
    }

    pub fn from_vec(grid: Grid3, channels: usize, data: Vec<T>) -> Result<Self, SpectralError> {
        if channels == 0 || data.len() != channels * grid.len() {
            return Err(SpectralError::ShapeMismatch { expected: channels.max(1) * grid.len(), actual: data.len() });
        }
        Ok(Self { grid, channels, data })
    }

    /// Builds a field by evaluating `f(channel, x, y, z)` at every node position.
    pub fn from_fn(grid: Grid3, channels: usize, mut f: impl FnMut(usize, f64, f64, f64) -> f64) -> Self {
        let pos = grid.positions();
        let n = grid.n();
        let mut data = Vec::with_capacity(channels * grid.len());
        for c in 0..channels {
            for x in 0..n {
                for y in 0..n {
                    for z in 0..n {
                        data.push(T::of(f(c, pos[x], pos[y], pos[z])));
                    }
                }
            }
        }
        Self { grid, channels, data }
    }

    /// Stacks single-channel fields along the channel axis.
    pub fn stack(parts: Vec<Field<T>>) -> Result<Self, SpectralError> {
        let first = parts.first().ok_or(SpectralError::ShapeMismatch { expected: 1, actual: 0 })?;
        let grid = first.grid;
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
        let mut channels = 0;
        for p in parts {
            if p.grid != grid {
                return Err(SpectralError::GridMismatch);
            }
            channels += p.channels;
            data.extend(p.data);
        }
        Ok(Self { grid, channels, data })
    }

    #[inline]
    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let len = self.grid.len();
        &self.data[c * len..(c + 1) * len]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let len = self.grid.len();
        &mut self.data[c * len..(c + 1) * len]
    }

    /// Copies channel `c` out as a single-channel field.
    pub fn extract_channel(&self, c: usize) -> Field<T> {
        Field { grid: self.grid, channels: 1, data: self.channel(c).to_vec() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn min_max(&self) -> (T, T) {
        self.data.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Field<T> {
        Field { grid: self.grid, channels: self.channels, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Converts the scalar type, e.g. a double-precision run to `f32` output.
    pub fn cast<U: Real>(&self) -> Field<U> {
        Field { grid: self.grid, channels: self.channels, data: self.data.iter().map(|v| U::of(v.as_f64())).collect() }
    }
}

/// Fourier coefficients of a [`Field`] in standard FFT ordering per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField<T> {
    grid: Grid3,
    channels: usize,
    coeffs: Vec<Complex<T>>,
}

impl<T: Real> SpectralField<T> {
    pub fn zeros(grid: Grid3, channels: usize) -> Self {
        Self { grid, channels, coeffs: vec![Complex::new(T::zero(), T::zero()); channels * grid.len()] }
    }

    pub fn from_vec(grid: Grid3, channels: usize, coeffs: Vec<Complex<T>>) -> Result<Self, SpectralError> {
        if channels == 0 || coeffs.len() != channels * grid.len() {
            return Err(SpectralError::ShapeMismatch { expected: channels.max(1) * grid.len(), actual: coeffs.len() });
        }
        Ok(Self { grid, channels, coeffs })
    }

    #[inline]
    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    #[inline]
    pub fn coeffs_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.coeffs
    }

    pub fn into_vec(self) -> Vec<Complex<T>> {
        self.coeffs
    }

    pub fn channel(&self, c: usize) -> &[Complex<T>] {
        let len = self.grid.len();
        &self.coeffs[c * len..(c + 1) * len]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [Complex<T>] {
        let len = self.grid.len();
        &mut self.coeffs[c * len..(c + 1) * len]
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Largest deviation from `coeffs[k] == conj(coeffs[-k])`, relative to the largest magnitude.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.grid.n();
        let neg = |i: usize| (n - i) % n;
        let scale = self.coeffs.iter().fold(0.0f64, |m, z| m.max(z.norm().as_f64())).max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for c in 0..self.channels {
            let ch = self.channel(c);
            for (idx, z) in ch.iter().enumerate() {
                let (x, y, w) = self.grid.coords(idx);
                let mirror = ch[self.grid.index(neg(x), neg(y), neg(w))].conj();
                worst = worst.max((*z - mirror).norm().as_f64());
            }
        }
        worst / scale
    }
}
