use serde::{Deserialize, Serialize};

use crate::ic::InitializerConfig;
use crate::pde::EquationKind;

/// Provenance of one emitted crop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMetadata {
    pub equation: EquationKind,
    pub initializer: InitializerConfig,
    pub resolution: u16,
    pub run: u16,
    /// Index of the recorded frame within its run.
    pub frame: u16,
    pub channel: u8,
    pub canonical: bool,
    /// Payload was mapped from the value range onto `[-1, 1]`.
    pub normalized: bool,
    /// PDE parameters in catalog order, as transmitted.
    pub pde_params: Vec<f32>,
    /// Initializer parameters `[hyperparameter, c_min, c_max]`, empty for GN.
    pub ic_params: Vec<f32>,
}

/// A single-channel crop with its metadata. Payload is row-major `[x][y][z]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSample {
    pub meta: FrameMetadata,
    pub dims: [u16; 3],
    pub payload: Vec<f32>,
}

impl FrameSample {
    pub fn voxel_count(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }

    pub fn is_well_formed(&self) -> bool {
        self.payload.len() == self.voxel_count()
    }

    /// Bitwise payload equality, so NaN payloads compare by bits too.
    pub fn bit_eq(&self, other: &FrameSample) -> bool {
        self.meta == other.meta
            && self.dims == other.dims
            && self.payload.len() == other.payload.len()
            && self.payload.iter().zip(&other.payload).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("frame sink closed")]
pub struct SinkClosed;

/// Destination for emitted frames. `push` may block to apply back-pressure.
pub trait FrameSink {
    fn push(&mut self, sample: FrameSample) -> Result<(), SinkClosed>;
}

impl FrameSink for Vec<FrameSample> {
    fn push(&mut self, sample: FrameSample) -> Result<(), SinkClosed> {
        Vec::push(self, sample);
        Ok(())
    }
}

impl<S: FrameSink + ?Sized> FrameSink for &mut S {
    fn push(&mut self, sample: FrameSample) -> Result<(), SinkClosed> {
        (**self).push(sample)
    }
}

/// Counts frames without keeping them.
#[derive(Debug, Default, Clone)]
pub struct CountingSink {
    pub frames: usize,
    pub bytes: usize,
}

impl FrameSink for CountingSink {
    fn push(&mut self, sample: FrameSample) -> Result<(), SinkClosed> {
        self.frames += 1;
        self.bytes += sample.payload.len() * 4;
        Ok(())
    }
}
