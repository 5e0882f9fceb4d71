//! Per-equation discretization and trajectory-recording settings.
//!
//! Canonical resolutions are 64, 128, 256 and 384. Any other resolution reuses
//! the 64 row and is reported as non-canonical.

use serde::Serialize;

use super::EquationKind;

pub const CANONICAL_RESOLUTIONS: [usize; 4] = [64, 128, 256, 384];

pub fn is_canonical(n: usize) -> bool {
    CANONICAL_RESOLUTIONS.contains(&n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueRange {
    pub lo: f64,
    pub hi: f64,
}

impl ValueRange {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscretizationConfig {
    pub extent: f64,
    pub dt: f64,
    pub save_frequency: usize,
    pub value_range: ValueRange,
    pub canonical: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrajectoryConfig {
    /// Discarded steps before recording starts.
    pub warmup: usize,
    /// Recorded frames per run.
    pub length: usize,
    pub num_runs: usize,
    pub canonical: bool,
}

impl TrajectoryConfig {
    pub fn frames_per_setup(&self) -> usize {
        self.length * self.num_runs
    }
}

/// Row selector: 0 for n=64 (and non-canonical), 1 for 128, 2 for 256/384.
fn tier(n: usize) -> usize {
    match n {
        128 => 1,
        256 | 384 => 2,
        _ => 0,
    }
}

pub fn discretization_for(kind: EquationKind, n: usize) -> DiscretizationConfig {
    use EquationKind::*;
    let t = tier(n);
    let (extent, dt, save_frequency, (lo, hi)) = match kind {
        Diffusion | HyperDiffusion => (1.0, [5e-4, 5e-5, 5e-5][t], 1, (-1.0, 1.0)),
        Burgers => (1.0, [5e-3, 2e-3, 1e-3][t], [1, 2, 5][t], (-1.0, 1.0)),
        KdV => (1.0, 2e-6, 2, (-1.25, 1.25)),
        KuramotoSivashinsky => (64.0, 0.1, 1, (-25.0, 25.0)),
        FisherKpp => (1.0, [1e-3, 1e-3, 5e-4][t], [1, 1, 2][t], (0.0, 1.0)),
        SwiftHohenberg => (20.0, [0.1, 0.02, 0.02][t], [1, 2, 5][t], (-2.0, 3.0)),
    };
    DiscretizationConfig { extent, dt, save_frequency, value_range: ValueRange { lo, hi }, canonical: is_canonical(n) }
}

pub fn trajectory_for(kind: EquationKind, n: usize) -> TrajectoryConfig {
    use EquationKind::*;
    let t = tier(n);
    let (warmup, length, num_runs) = match kind {
        Diffusion | HyperDiffusion => (0, 2, 15),
        Burgers => ([30, 60, 150][t], 30, 1),
        KdV => (40, 10, 3),
        KuramotoSivashinsky => (500, 30, 1),
        FisherKpp => ([20, 20, 40][t], 10, 3),
        SwiftHohenberg => (0, 30, 1),
    };
    TrajectoryConfig { warmup, length, num_runs, canonical: is_canonical(n) }
}

#[derive(Serialize)]
struct TableRow {
    equation: &'static str,
    resolution: usize,
    discretization: DiscretizationConfig,
    trajectory: TrajectoryConfig,
}

/// Full catalog of settings at the canonical resolutions, as pretty JSON.
pub fn export_tables() -> String {
    let rows: Vec<TableRow> = EquationKind::ALL
        .iter()
        .flat_map(|&kind| {
            CANONICAL_RESOLUTIONS.iter().map(move |&n| TableRow {
                equation: kind.name(),
                resolution: n,
                discretization: discretization_for(kind, n),
                trajectory: trajectory_for(kind, n),
            })
        })
        .collect();
    serde_json::to_string_pretty(&rows).expect("tables serialize")
}
