use serde::{Deserialize, Serialize};

use super::SpectralError;

/// Uniform periodic grid on the cube `[0, extent)^3`.
///
/// Node `j` sits at `j * dx`, the left end of its interval; the right boundary
/// `extent` is not a degree of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid3 {
    n: usize,
    extent: f64,
}

impl Grid3 {
    pub fn new(n: usize, extent: f64) -> Result<Self, SpectralError> {
        if n < 4 || n % 2 != 0 {
            return Err(SpectralError::InvalidResolution(n));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(SpectralError::InvalidExtent(extent));
        }
        Ok(Self { n, extent })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn extent(&self) -> f64 {
        self.extent
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.extent / self.n as f64
    }

    /// Number of voxels per channel.
    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node coordinates along one axis.
    pub fn positions(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n).map(|j| j as f64 * dx).collect()
    }

    /// Row-major flat index of voxel `(x, y, z)` within one channel.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.n + y) * self.n + z
    }

    /// Inverse of [`Grid3::index`].
    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let n = self.n;
        (idx / (n * n), (idx / n) % n, idx % n)
    }

    /// Signed integer mode for FFT slot `i`: `0..n/2-1` then `-n/2..-1`.
    #[inline]
    pub fn mode(&self, i: usize) -> i64 {
        mode_index(i, self.n)
    }
}

/// Signed FFT mode number of slot `i` on an `n`-point axis.
#[inline]
pub fn mode_index(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}
