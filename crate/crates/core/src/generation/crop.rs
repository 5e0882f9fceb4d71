use rand::Rng;

use crate::real::Real;
use crate::spectral::Field;

/// Default transport crop edge.
pub const TRANSPORT_CROP: usize = 96;

#[derive(Debug, Clone, PartialEq)]
pub struct Crop<T> {
    pub offset: [usize; 3],
    pub dims: [usize; 3],
    pub data: Vec<T>,
}

/// Contiguous `h^3` window of a single-channel field at uniform offsets in
/// `[0, n - h]`. Returns the whole frame when `n <= h`; no rng draws then.
pub fn random_crop<T: Real, R: Rng + ?Sized>(field: &Field<T>, h: usize, rng: &mut R) -> Crop<T> {
    assert_eq!(field.channels(), 1, "random_crop takes a single channel");
    let n = field.grid().n();
    if n <= h {
        return Crop { offset: [0; 3], dims: [n; 3], data: field.data().to_vec() };
    }
    let span = n - h;
    let offset = [rng.random_range(0..=span), rng.random_range(0..=span), rng.random_range(0..=span)];
    Crop { offset, dims: [h; 3], data: crop_at(field.data(), n, offset, h) }
}

/// Extracts the `h^3` block starting at `offset` from an `n^3` row-major cube.
pub fn crop_at<T: Copy>(data: &[T], n: usize, offset: [usize; 3], h: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(h * h * h);
    for x in offset[0]..offset[0] + h {
        for y in offset[1]..offset[1] + h {
            let start = (x * n + y) * n + offset[2];
            out.extend_from_slice(&data[start..start + h]);
        }
    }
    out
}

/// `true` when every voxel is finite.
pub fn guardrail_scan<T: Real>(field: &Field<T>) -> bool {
    field.is_finite()
}
