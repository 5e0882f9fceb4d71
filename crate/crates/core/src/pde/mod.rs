//! The seven semi-linear systems `du/dt = L u + N(u)` on a periodic cube.
//!
//! | equation        | linear symbol                  | nonlinearity        |
//! |-----------------|--------------------------------|---------------------|
//! | diffusion       | `-nu |k|^2`                    | 0                   |
//! | hyper-diffusion | `-zeta |k|^4`                  | 0                   |
//! | burgers         | `-nu |k|^2`                    | `-(u.grad) u`       |
//! | kdv             | `xi * i(kx+ky+kz) * (-|k|^2)`  | `-(u.grad) u`       |
//! | ks              | `|k|^2 - |k|^4`                | `-1/2 |grad u|^2`   |
//! | fisher-kpp      | `-nu |k|^2 + r`                | `-r u^2`            |
//! | swift-hohenberg | `r - (1 - |k|^2)^2`            | `u^2 - u^3`         |

mod nonlinear;
mod tables;
mod trajectory;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use nonlinear::{nonlinear_eval, NonlinearOperator};
pub use tables::{
    discretization_for, export_tables, is_canonical, trajectory_for, DiscretizationConfig, TrajectoryConfig,
    ValueRange, CANONICAL_RESOLUTIONS,
};
pub use trajectory::{simulate_trajectory, SimulateError, Trajectory, TrajectoryRequest};

use crate::etdrk::{precompute_etdrk2, precompute_etdrk4, IntegrateError, LinearSymbol, Stepper};
use crate::real::Real;
use crate::spectral::{Field, Grid3, WaveNumbers};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("unknown equation '{0}'")]
    UnknownEquation(String),
    #[error("unknown equation id {0}")]
    UnknownEquationId(u8),
    #[error("{kind} expects {expected} parameters, got {actual}")]
    ParamCount { kind: EquationKind, expected: usize, actual: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquationKind {
    Diffusion,
    HyperDiffusion,
    Burgers,
    KdV,
    KuramotoSivashinsky,
    FisherKpp,
    SwiftHohenberg,
}

impl EquationKind {
    pub const ALL: [EquationKind; 7] = [
        EquationKind::Diffusion,
        EquationKind::HyperDiffusion,
        EquationKind::Burgers,
        EquationKind::KdV,
        EquationKind::KuramotoSivashinsky,
        EquationKind::FisherKpp,
        EquationKind::SwiftHohenberg,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Result<Self, CatalogError> {
        Self::ALL.get(id as usize).copied().ok_or(CatalogError::UnknownEquationId(id))
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Diffusion => "diffusion",
            Self::HyperDiffusion => "hyper-diffusion",
            Self::Burgers => "burgers",
            Self::KdV => "kdv",
            Self::KuramotoSivashinsky => "ks",
            Self::FisherKpp => "fisher-kpp",
            Self::SwiftHohenberg => "swift-hohenberg",
        }
    }

    /// Coupled three-component vector system.
    pub fn is_vector(self) -> bool {
        matches!(self, Self::Burgers | Self::KdV)
    }

    /// Channels integrated together: 3 (vector, or three batched scalar ICs), 1 for KS.
    pub fn sim_channels(self) -> usize {
        if self == Self::KuramotoSivashinsky {
            1
        } else {
            3
        }
    }

    /// Length of [`PdeParams::to_list`] for this equation.
    pub fn param_count(self) -> usize {
        match self {
            Self::KuramotoSivashinsky => 0,
            Self::FisherKpp => 2,
            _ => 1,
        }
    }

    /// Coarsest grid the tabulated setup resolves. KS at `L = 64` needs
    /// retained modes past `|k| = 1`, where the linear part turns dissipative.
    pub fn min_resolution(self) -> usize {
        match self {
            Self::KuramotoSivashinsky => 64,
            _ => 4,
        }
    }
}

impl fmt::Display for EquationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EquationKind {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Ok(match key.as_str() {
            "diffusion" => Self::Diffusion,
            "hyper-diffusion" | "hyperdiffusion" => Self::HyperDiffusion,
            "burgers" => Self::Burgers,
            "kdv" | "korteweg-de-vries" => Self::KdV,
            "ks" | "kuramoto-sivashinsky" => Self::KuramotoSivashinsky,
            "fisher-kpp" | "fisher" | "kpp-fisher" | "fisherkpp" => Self::FisherKpp,
            "swift-hohenberg" | "sh" | "swifthohenberg" => Self::SwiftHohenberg,
            _ => return Err(CatalogError::UnknownEquation(s.to_string())),
        })
    }
}

/// Constitutive parameters of one simulator instance. Unused entries are zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PdeParams {
    pub nu: f64,
    pub zeta: f64,
    pub xi: f64,
    pub r: f64,
}

pub const KDV_DISPERSION: f64 = -6.0;
pub const SWIFT_HOHENBERG_R: f64 = 0.1;

impl PdeParams {
    /// Parameters in wire order: diffusion `[nu]`, hyper-diffusion `[zeta]`,
    /// burgers `[nu]`, kdv `[xi]`, ks `[]`, fisher-kpp `[nu, r]`, swift-hohenberg `[r]`.
    pub fn to_list(&self, kind: EquationKind) -> Vec<f64> {
        use EquationKind::*;
        match kind {
            Diffusion | Burgers => vec![self.nu],
            HyperDiffusion => vec![self.zeta],
            KdV => vec![self.xi],
            KuramotoSivashinsky => vec![],
            FisherKpp => vec![self.nu, self.r],
            SwiftHohenberg => vec![self.r],
        }
    }

    pub fn from_list(kind: EquationKind, list: &[f64]) -> Result<Self, CatalogError> {
        use EquationKind::*;
        if list.len() != kind.param_count() {
            return Err(CatalogError::ParamCount { kind, expected: kind.param_count(), actual: list.len() });
        }
        let mut p = PdeParams::default();
        match kind {
            Diffusion | Burgers => p.nu = list[0],
            HyperDiffusion => p.zeta = list[0],
            KdV => p.xi = list[0],
            KuramotoSivashinsky => {}
            FisherKpp => {
                p.nu = list[0];
                p.r = list[1];
            }
            SwiftHohenberg => p.r = list[0],
        }
        Ok(p)
    }
}

/// Draws the per-instance parameters from their tabulated distributions.
pub fn sample_params<R: Rng + ?Sized>(kind: EquationKind, rng: &mut R) -> PdeParams {
    use EquationKind::*;
    let mut p = PdeParams::default();
    match kind {
        Diffusion => p.nu = rng.random_range(5e-4..=5e-3),
        HyperDiffusion => p.zeta = rng.random_range(5e-4..=5e-3),
        Burgers => p.nu = rng.random_range(1e-3..=5e-3),
        KdV => p.xi = KDV_DISPERSION,
        KuramotoSivashinsky => {}
        FisherKpp => {
            p.nu = rng.random_range(1e-4f64.ln()..=0.02f64.ln()).exp();
            p.r = rng.random_range(5.0..=15.0);
        }
        SwiftHohenberg => p.r = SWIFT_HOHENBERG_R,
    }
    p
}

/// Per-mode linear symbol on `grid`.
pub fn linear_symbol(kind: EquationKind, params: &PdeParams, grid: &Grid3) -> LinearSymbol {
    use EquationKind::*;
    let wn = WaveNumbers::new(grid);
    let n = grid.n();
    let real =
        |f: &dyn Fn(f64) -> f64| -> Vec<Complex64> { wn.k2().iter().map(|&k2| Complex64::new(f(k2), 0.0)).collect() };
    let values = match kind {
        Diffusion | Burgers => real(&|k2| -params.nu * k2),
        HyperDiffusion => real(&|k2| -params.zeta * k2 * k2),
        KuramotoSivashinsky => real(&|k2| k2 - k2 * k2),
        FisherKpp => real(&|k2| -params.nu * k2 + params.r),
        SwiftHohenberg => real(&|k2| params.r - (1.0 - k2) * (1.0 - k2)),
        KdV => {
            let k = wn.axis_odd();
            let mut v = Vec::with_capacity(grid.len());
            for x in 0..n {
                for y in 0..n {
                    for z in 0..n {
                        let k2 = wn.k2()[grid.index(x, y, z)];
                        let ksum = k[x] + k[y] + k[z];
                        // xi * (i ksum) * (-k2)
                        v.push(Complex64::new(0.0, -params.xi * ksum * k2));
                    }
                }
            }
            v
        }
    };
    LinearSymbol::new(values).expect("symbols of finite parameters are finite")
}

/// ETDRK4 for KdV, ETDRK2 for everything else.
pub fn stepper_for<T: Real>(
    kind: EquationKind,
    symbol: &LinearSymbol,
    dt: f64,
) -> Result<Box<dyn Stepper<T>>, IntegrateError> {
    Ok(if kind == EquationKind::KdV {
        Box::new(precompute_etdrk4::<T>(symbol, dt)?)
    } else {
        Box::new(precompute_etdrk2::<T>(symbol, dt)?)
    })
}

/// Clips into the equation's value range; with `normalize`, then maps
/// `[lo, hi]` affinely onto `[-1, 1]`.
pub fn clamp_to_value_range<T: Real>(field: &Field<T>, kind: EquationKind, normalize: bool) -> Field<T> {
    let range = discretization_for(kind, 64).value_range;
    clamp_values(field, range, normalize)
}

pub fn clamp_values<T: Real>(field: &Field<T>, range: ValueRange, normalize: bool) -> Field<T> {
    field.map(|v| clamp_scalar(v, range, normalize))
}

/// Clamps one value to `range`, optionally mapping the range onto `[-1, 1]`.
#[inline]
pub fn clamp_scalar<T: Real>(v: T, range: ValueRange, normalize: bool) -> T {
    let c = v.max(T::of(range.lo)).min(T::of(range.hi));
    if normalize {
        let mid = T::of(0.5 * (range.lo + range.hi));
        let half = T::of(0.5 * (range.hi - range.lo));
        ((c - mid) / half).max(-T::one()).min(T::one())
    } else {
        c
    }
}
