//! Storage-free synthesis of 3D semi-linear PDE trajectories.
//!
//! The crate covers the numerical side of the pipeline: Fourier
//! pseudo-spectral operators, exponential time differencing steppers, the
//! equation catalog, randomized initial conditions, the procedural generation
//! loop, spectral diagnostics and an on-disk trajectory container.

pub mod analysis;
pub mod container;
pub mod etdrk;
pub mod generation;
pub mod ic;
pub mod pde;
pub mod real;
pub mod spectral;

pub use real::Real;
