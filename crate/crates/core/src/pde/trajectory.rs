//! One standalone trajectory with the tabulated discretization and recording schedule.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{
    discretization_for, linear_symbol, sample_params, stepper_for, trajectory_for, EquationKind, NonlinearOperator,
    PdeParams,
};
use crate::etdrk::{integrate, IntegrateError, SaveSchedule};
use crate::ic::{sample_initializer_for, IcError, InitializerConfig, InitializerSpec};
use crate::real::Real;
use crate::spectral::{Field, Grid3, Spectral, SpectralError};

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error(transparent)]
    Grid(#[from] SpectralError),
    #[error(transparent)]
    Initializer(#[from] IcError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error("{kind} needs n >= {min}, got {n}")]
    Resolution { kind: EquationKind, n: usize, min: usize },
    #[error("frame count must be positive")]
    NoFrames,
}

#[derive(Debug, Clone)]
pub struct TrajectoryRequest {
    pub equation: EquationKind,
    pub n: usize,
    pub seed: u64,
    /// Recorded frames; the tabulated length when `None`.
    pub frames: Option<usize>,
    /// Forces one initializer configuration for every channel.
    pub initializer: Option<InitializerConfig>,
    pub params: Option<PdeParams>,
}

impl TrajectoryRequest {
    pub fn new(equation: EquationKind, n: usize, seed: u64) -> Self {
        TrajectoryRequest { equation, n, seed, frames: None, initializer: None, params: None }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub equation: EquationKind,
    pub grid: Grid3,
    pub params: PdeParams,
    pub initializers: Vec<InitializerSpec>,
    /// Raw solver output after warmup, one field per recorded frame, not clamped.
    pub frames: Vec<Field<T>>,
}

/// Samples parameters and initial channels from `seed`, discards the tabulated
/// warmup, and records every `save_frequency`-th step.
pub fn simulate_trajectory<T: Real>(req: &TrajectoryRequest) -> Result<Trajectory<T>, SimulateError> {
    let kind = req.equation;
    if req.n < kind.min_resolution() {
        return Err(SimulateError::Resolution { kind, n: req.n, min: kind.min_resolution() });
    }
    let disc = discretization_for(kind, req.n);
    let traj = trajectory_for(kind, req.n);
    let length = req.frames.unwrap_or(traj.length);
    if length == 0 {
        return Err(SimulateError::NoFrames);
    }
    let grid = Grid3::new(req.n, disc.extent)?;
    let spectral = Arc::new(Spectral::<T>::new(grid));
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let params = req.params.unwrap_or_else(|| sample_params(kind, &mut rng));

    let mut initializers = Vec::new();
    let mut parts = Vec::new();
    for _ in 0..kind.sim_channels() {
        let spec = match req.initializer {
            Some(c) => InitializerSpec::sample(c, &mut rng),
            None => sample_initializer_for(kind, &mut rng),
        };
        parts.push(spec.generate(&spectral, &mut rng)?);
        initializers.push(spec);
    }
    let u0 = Field::stack(parts)?;

    let symbol = linear_symbol(kind, &params, &grid);
    let stepper = stepper_for::<T>(kind, &symbol, disc.dt)?;
    let op = NonlinearOperator::new(kind, params, spectral.clone());
    let schedule = SaveSchedule { warmup: traj.warmup, every: disc.save_frequency };
    let steps = traj.warmup + length * disc.save_frequency;
    let frames = integrate(&spectral, &u0, stepper.as_ref(), &mut |s| op.eval(s), steps, schedule)?;
    Ok(Trajectory { equation: kind, grid, params, initializers, frames })
}
