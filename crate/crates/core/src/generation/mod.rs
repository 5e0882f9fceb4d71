//! The procedural generation loop.
//!
//! A server cycles through every (equation, resolution) setup in a freshly
//! shuffled order each round. A setup samples PDE parameters once and runs the
//! tabulated number of trajectories; each trajectory draws fresh initial
//! conditions per channel, discards the physics warmup and emits every
//! `save_frequency`-th state split into single-channel crops.
//!
//! During the first `R` rounds the recorded portion is shortened by
//! `xi = min(r / R, 1)`. Warmup is never shortened.
//!
//! Frames of a trajectory are buffered and only emitted once it finishes
//! cleanly, so a numerical anomaly discards the whole trajectory. The
//! simulator is then re-instantiated from a fresh stream and the same run is
//! attempted again, so completed setups still contribute their full frame count.
//!
//! Randomness: the server stream (ChaCha8, stream 0) shuffles the schedule.
//! Simulator instance `i` owns ChaCha8 stream `i + 1` of the same seed and
//! drives parameters, initial conditions and crop offsets.

mod checkpoint;
mod crop;
mod sample;

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use crop::{crop_at, guardrail_scan, random_crop, Crop, TRANSPORT_CROP};
pub use sample::{CountingSink, FrameMetadata, FrameSample, FrameSink, SinkClosed};

use crate::etdrk::{SaveSchedule, Stepper};
use crate::ic::sample_initializer_for;
use crate::pde::{
    clamp_scalar, discretization_for, is_canonical, linear_symbol, sample_params, stepper_for, trajectory_for,
    EquationKind, NonlinearOperator, PdeParams,
};
use crate::spectral::{Field, Grid3, Spectral};

/// Identifies the generator so checkpoints from an incompatible build are refused.
pub const RNG_ALGORITHM: &str = "chacha8-rand0.9-v1";

pub const DEFAULT_WARMUP_ROUNDS: u32 = 10;
pub const DEFAULT_HALT_TOLERANCE: u32 = 10;

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("server halted after {0} numerical anomalies")]
    Halted(u32),
    #[error(transparent)]
    SinkClosed(#[from] SinkClosed),
    #[error("invalid server config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerConfig {
    pub equations: Vec<EquationKind>,
    pub resolutions: Vec<usize>,
    pub seed: u64,
    /// `R`: rounds over which the recorded length ramps up to full.
    pub warmup_rounds: u32,
    /// The server halts once the error counter exceeds this.
    pub halt_tolerance: u32,
    /// Transport crop edge `H'`.
    pub crop: usize,
    /// Map clamped values onto `[-1, 1]`.
    pub normalize: bool,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            equations: EquationKind::ALL.to_vec(),
            resolutions: vec![64],
            seed: 0,
            warmup_rounds: DEFAULT_WARMUP_ROUNDS,
            halt_tolerance: DEFAULT_HALT_TOLERANCE,
            crop: TRANSPORT_CROP,
            normalize: false,
        }
    }
}

impl ServerConfig {
    pub fn validate(&self) -> Result<(), GenerationError> {
        if self.equations.is_empty() {
            return Err(GenerationError::Config("no equations configured".into()));
        }
        if self.resolutions.is_empty() {
            return Err(GenerationError::Config("no resolutions configured".into()));
        }
        for &n in &self.resolutions {
            if n > u16::MAX as usize {
                return Err(GenerationError::Config(format!("resolution {n} too large")));
            }
            Grid3::new(n, 1.0).map_err(|e| GenerationError::Config(e.to_string()))?;
            if let Some(kind) = self.equations.iter().find(|k| n < k.min_resolution()) {
                return Err(GenerationError::Config(format!("{kind} is unresolved below n={}", kind.min_resolution())));
            }
        }
        if self.crop == 0 || self.crop > u16::MAX as usize {
            return Err(GenerationError::Config(format!("crop edge {} out of range", self.crop)));
        }
        Ok(())
    }

    /// All (equation, resolution) combinations in configuration order.
    pub fn setups(&self) -> Vec<Setup> {
        let mut out = Vec::with_capacity(self.equations.len() * self.resolutions.len());
        for &equation in &self.equations {
            for &resolution in &self.resolutions {
                out.push(Setup { equation, resolution });
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Setup {
    pub equation: EquationKind,
    pub resolution: usize,
}

/// The setup currently being worked through, as persisted in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveSetup {
    pub setup: Setup,
    pub params: PdeParams,
    /// Simulator instance number; selects the rng stream.
    pub instance: u64,
    pub next_run: usize,
    pub rng_word_pos: [u64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerState {
    pub rng_algorithm: String,
    pub config: ServerConfig,
    /// `r`, incremented at the start of every round.
    pub round: u32,
    pub error_count: u32,
    pub halted: bool,
    pub rng_word_pos: [u64; 2],
    pub schedule: Vec<Setup>,
    /// Index into `schedule` of the setup being (or next to be) worked on.
    pub position: usize,
    /// Simulator instances created so far.
    pub instances: u64,
    pub active: Option<ActiveSetup>,
    pub stats: ServerStats,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerStats {
    pub frames_emitted: u64,
    pub trajectories_completed: u64,
    pub trajectories_discarded: u64,
}

/// Where a fault-injection hook is consulted: after each step of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultSite {
    pub round: u32,
    pub instance: u64,
    pub setup: Setup,
    pub run: usize,
    pub step: usize,
}

/// Returns `true` to overwrite the state with NaN at that site.
pub type FaultHook = Box<dyn FnMut(&FaultSite) -> bool + Send>;

#[derive(Debug, Clone, PartialEq)]
pub enum TrajectoryOutcome {
    Emitted { setup: Setup, run: usize, frames: usize },
    Discarded { setup: Setup, run: usize, step: usize },
}

fn split_pos(p: u128) -> [u64; 2] {
    [(p >> 64) as u64, p as u64]
}

fn join_pos(p: [u64; 2]) -> u128 {
    ((p[0] as u128) << 64) | p[1] as u128
}

/// `floor(T * sf * xi)` recorded steps with `xi = min(r / R, 1)`, at least one frame.
pub fn recorded_steps(length: usize, save_frequency: usize, round: u32, warmup_rounds: u32) -> usize {
    let full = length * save_frequency;
    if warmup_rounds == 0 || round >= warmup_rounds {
        return full;
    }
    (full * round as usize / warmup_rounds as usize).max(save_frequency)
}

/// `W + floor(T * sf * xi)` for `setup` in round `round`.
pub fn total_steps(setup: Setup, round: u32, warmup_rounds: u32) -> usize {
    let d = discretization_for(setup.equation, setup.resolution);
    let t = trajectory_for(setup.equation, setup.resolution);
    t.warmup + recorded_steps(t.length, d.save_frequency, round, warmup_rounds)
}

struct Simulator {
    setup: Setup,
    params: PdeParams,
    instance: u64,
    next_run: usize,
    rng: ChaCha8Rng,
    spectral: Arc<Spectral<f32>>,
    stepper: Box<dyn Stepper<f32>>,
    op: NonlinearOperator<f32>,
}

impl Simulator {
    fn persist(&self) -> ActiveSetup {
        ActiveSetup {
            setup: self.setup,
            params: self.params,
            instance: self.instance,
            next_run: self.next_run,
            rng_word_pos: split_pos(self.rng.get_word_pos()),
        }
    }
}

pub struct GenerationServer {
    state: ServerState,
    rng: ChaCha8Rng,
    sim: Option<Simulator>,
    spectral_cache: HashMap<(usize, u64), Arc<Spectral<f32>>>,
    fault_hook: Option<FaultHook>,
}

fn sim_rng(seed: u64, instance: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(instance + 1);
    rng
}

impl GenerationServer {
    pub fn new(config: ServerConfig) -> Result<Self, GenerationError> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        let state = ServerState {
            rng_algorithm: RNG_ALGORITHM.to_string(),
            config,
            round: 0,
            error_count: 0,
            halted: false,
            rng_word_pos: [0, 0],
            schedule: Vec::new(),
            position: 0,
            instances: 0,
            active: None,
            stats: ServerStats::default(),
        };
        Ok(Self { state, rng, sim: None, spectral_cache: HashMap::new(), fault_hook: None })
    }

    /// Rebuilds a server from a persisted state.
    pub fn from_state(state: ServerState) -> Result<Self, GenerationError> {
        state.config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(state.config.seed);
        rng.set_word_pos(join_pos(state.rng_word_pos));
        let mut server = Self { state, rng, sim: None, spectral_cache: HashMap::new(), fault_hook: None };
        if let Some(active) = server.state.active.clone() {
            let mut rng = sim_rng(server.state.config.seed, active.instance);
            rng.set_word_pos(join_pos(active.rng_word_pos));
            server.sim =
                Some(server.build_simulator(active.setup, active.params, active.instance, active.next_run, rng));
        }
        Ok(server)
    }

    pub fn restore(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let state = decode_checkpoint(bytes)?;
        Self::from_state(state).map_err(|e| CheckpointError::Config(e.to_string()))
    }

    pub fn checkpoint(&self) -> Result<Vec<u8>, CheckpointError> {
        encode_checkpoint(&self.state())
    }

    /// Snapshot of the persistent state.
    pub fn state(&self) -> ServerState {
        let mut s = self.state.clone();
        s.rng_word_pos = split_pos(self.rng.get_word_pos());
        s.active = self.sim.as_ref().map(Simulator::persist);
        s
    }

    pub fn config(&self) -> &ServerConfig {
        &self.state.config
    }

    pub fn stats(&self) -> &ServerStats {
        &self.state.stats
    }

    pub fn round(&self) -> u32 {
        self.state.round
    }

    pub fn error_count(&self) -> u32 {
        self.state.error_count
    }

    pub fn is_halted(&self) -> bool {
        self.state.halted
    }

    pub fn set_fault_hook(&mut self, hook: Option<FaultHook>) {
        self.fault_hook = hook;
    }

    /// Early-stop ratio of the current round.
    pub fn xi(&self) -> f64 {
        let r = self.state.config.warmup_rounds;
        if r == 0 {
            1.0
        } else {
            (self.state.round as f64 / r as f64).min(1.0)
        }
    }

    pub fn round_complete(&self) -> bool {
        self.sim.is_none() && self.state.position >= self.state.schedule.len()
    }

    fn begin_round(&mut self) {
        self.state.round += 1;
        let mut schedule = self.state.config.setups();
        schedule.shuffle(&mut self.rng);
        self.state.schedule = schedule;
        self.state.position = 0;
    }

    fn spectral_for(&mut self, n: usize, extent: f64) -> Arc<Spectral<f32>> {
        self.spectral_cache
            .entry((n, extent.to_bits()))
            .or_insert_with(|| Arc::new(Spectral::new(Grid3::new(n, extent).expect("validated grid"))))
            .clone()
    }

    fn build_simulator(
        &mut self,
        setup: Setup,
        params: PdeParams,
        instance: u64,
        next_run: usize,
        rng: ChaCha8Rng,
    ) -> Simulator {
        let disc = discretization_for(setup.equation, setup.resolution);
        let spectral = self.spectral_for(setup.resolution, disc.extent);
        let symbol = linear_symbol(setup.equation, &params, spectral.grid());
        let stepper = stepper_for::<f32>(setup.equation, &symbol, disc.dt).expect("tabulated dt and finite symbol");
        let op = NonlinearOperator::new(setup.equation, params, spectral.clone());
        Simulator { setup, params, instance, next_run, rng, spectral, stepper, op }
    }

    fn instantiate(&mut self, setup: Setup, next_run: usize) {
        let instance = self.state.instances;
        self.state.instances += 1;
        let mut rng = sim_rng(self.state.config.seed, instance);
        let params = sample_params(setup.equation, &mut rng);
        self.sim = Some(self.build_simulator(setup, params, instance, next_run, rng));
    }

    /// Runs one trajectory, starting a new setup or round when needed.
    pub fn run_next_trajectory(&mut self, sink: &mut dyn FrameSink) -> Result<TrajectoryOutcome, GenerationError> {
        if self.state.halted {
            return Err(GenerationError::Halted(self.state.error_count));
        }
        if self.round_complete() {
            self.begin_round();
        }
        if self.sim.is_none() {
            let setup = self.state.schedule[self.state.position];
            self.instantiate(setup, 0);
        }
        let mut sim = self.sim.take().expect("simulator present");
        let setup = sim.setup;
        let run = sim.next_run;
        let rng_before = sim.rng.clone();
        match self.simulate(&mut sim) {
            Ok(frames) => {
                let count = frames.len();
                for f in frames {
                    if sink.push(f).is_err() {
                        // roll back so a checkpoint taken now replays this run
                        sim.rng = rng_before;
                        self.sim = Some(sim);
                        return Err(GenerationError::SinkClosed(SinkClosed));
                    }
                }
                self.state.stats.frames_emitted += count as u64;
                self.state.stats.trajectories_completed += 1;
                sim.next_run += 1;
                if sim.next_run >= trajectory_for(setup.equation, setup.resolution).num_runs {
                    self.state.position += 1;
                } else {
                    self.sim = Some(sim);
                }
                Ok(TrajectoryOutcome::Emitted { setup, run, frames: count })
            }
            Err(step) => {
                self.state.stats.trajectories_discarded += 1;
                self.state.error_count += 1;
                if self.state.error_count > self.state.config.halt_tolerance {
                    self.state.halted = true;
                    self.sim = Some(sim);
                    return Err(GenerationError::Halted(self.state.error_count));
                }
                self.instantiate(setup, run);
                Ok(TrajectoryOutcome::Discarded { setup, run, step })
            }
        }
    }

    /// Completes the current round (starting a new one if the last finished).
    pub fn run_round(&mut self, sink: &mut dyn FrameSink) -> Result<Vec<TrajectoryOutcome>, GenerationError> {
        if self.round_complete() {
            self.begin_round();
        }
        let mut outcomes = Vec::new();
        while !self.round_complete() {
            outcomes.push(self.run_next_trajectory(sink)?);
        }
        Ok(outcomes)
    }

    /// Integrates one run; `Err(step)` reports the step of a numerical anomaly.
    fn simulate(&mut self, sim: &mut Simulator) -> Result<Vec<FrameSample>, usize> {
        let setup = sim.setup;
        let kind = setup.equation;
        let disc = discretization_for(kind, setup.resolution);
        let traj = trajectory_for(kind, setup.resolution);
        let config = &self.state.config;
        let channels = kind.sim_channels();
        let run = sim.next_run;

        let mut ics = Vec::with_capacity(channels);
        let mut parts = Vec::with_capacity(channels);
        for _ in 0..channels {
            let spec = sample_initializer_for(kind, &mut sim.rng);
            parts.push(spec.generate(&sim.spectral, &mut sim.rng).map_err(|_| 0usize)?);
            ics.push(spec);
        }
        let u0 = Field::stack(parts).expect("channels share a grid");
        let mut state = sim.spectral.forward(&u0).map_err(|_| 0usize)?;

        let total =
            traj.warmup + recorded_steps(traj.length, disc.save_frequency, self.state.round, config.warmup_rounds);
        let schedule = SaveSchedule { warmup: traj.warmup, every: disc.save_frequency };
        let pde_params: Vec<f32> = sim.params.to_list(kind).iter().map(|&v| v as f32).collect();
        let mut frames = Vec::new();
        let mut frame = 0u16;
        for step in 1..=total {
            state = sim.stepper.step(&state, &mut |s| sim.op.eval(s));
            if let Some(hook) = self.fault_hook.as_mut() {
                let site = FaultSite { round: self.state.round, instance: sim.instance, setup, run, step };
                if hook(&site) {
                    state.coeffs_mut()[0].re = f32::NAN;
                }
            }
            if !state.is_finite() {
                return Err(step);
            }
            if !schedule.saves(step) {
                continue;
            }
            let real = sim.spectral.inverse_real(&state);
            if !guardrail_scan(&real) {
                return Err(step);
            }
            for (c, ic) in ics.iter().enumerate() {
                let mut crop = random_crop(&real.extract_channel(c), config.crop, &mut sim.rng);
                for v in crop.data.iter_mut() {
                    *v = clamp_scalar(*v, disc.value_range, config.normalize);
                }
                frames.push(FrameSample {
                    meta: FrameMetadata {
                        equation: kind,
                        initializer: ic.config,
                        resolution: setup.resolution as u16,
                        run: run as u16,
                        frame,
                        channel: c as u8,
                        canonical: is_canonical(setup.resolution),
                        normalized: config.normalize,
                        pde_params: pde_params.clone(),
                        ic_params: ic.to_list().iter().map(|&v| v as f32).collect(),
                    },
                    dims: crop.dims.map(|d| d as u16),
                    payload: crop.data,
                });
            }
            frame += 1;
        }
        Ok(frames)
    }
}
