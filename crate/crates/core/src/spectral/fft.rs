use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::real::Real;

/// Planned full complex 3D transform on an `n^3` block.
///
/// Forward is unnormalized; inverse carries the `1/n^3` factor. Plans are
/// immutable after construction, scratch is allocated per call.
pub(crate) struct Fft3<T: Real> {
    n: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> Fft3<T> {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    pub fn forward(&self, block: &mut [Complex<T>]) {
        self.run(block, &*self.forward);
    }

    pub fn inverse(&self, block: &mut [Complex<T>]) {
        self.run(block, &*self.inverse);
        let scale = T::one() / T::of((self.n * self.n * self.n) as f64);
        for z in block.iter_mut() {
            *z = *z * scale;
        }
    }

    fn run(&self, block: &mut [Complex<T>], fft: &dyn Fft<T>) {
        let n = self.n;
        let plane = n * n;
        debug_assert_eq!(block.len(), plane * n);
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];
        let mut lines = vec![Complex::new(T::zero(), T::zero()); plane];

        // z: contiguous lines
        fft.process_with_scratch(block, &mut scratch);

        // y: transpose each x-slab so y becomes contiguous
        for slab in block.chunks_exact_mut(plane) {
            for y in 0..n {
                for z in 0..n {
                    lines[z * n + y] = slab[y * n + z];
                }
            }
            fft.process_with_scratch(&mut lines, &mut scratch);
            for y in 0..n {
                for z in 0..n {
                    slab[y * n + z] = lines[z * n + y];
                }
            }
        }

        // x: gather one y-row at a time
        for y in 0..n {
            for x in 0..n {
                let src = x * plane + y * n;
                for z in 0..n {
                    lines[z * n + x] = block[src + z];
                }
            }
            fft.process_with_scratch(&mut lines, &mut scratch);
            for x in 0..n {
                let dst = x * plane + y * n;
                for z in 0..n {
                    block[dst + z] = lines[z * n + x];
                }
            }
        }
    }
}
