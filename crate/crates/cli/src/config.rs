//! TOML configuration with `FORGE_*` environment overrides.
//!
//! Every key is optional; missing keys take the defaults below. Unknown keys
//! are rejected.

use std::path::{Path, PathBuf};

use pdeforge::generation::{ServerConfig, DEFAULT_HALT_TOLERANCE, DEFAULT_WARMUP_ROUNDS, TRANSPORT_CROP};
use pdeforge::pde::EquationKind;
use pdeforge_stream::{DEFAULT_CACHE_CAPACITY, DEFAULT_EPOCH_LENGTH, DEFAULT_QUEUE_CAPACITY, DEFAULT_STAGING_CAPACITY};
use serde::Deserialize;

use crate::error::CliError;

pub const DEFAULT_ENDPOINT: &str = "127.0.0.1:7878";

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub server: ServerSection,
    pub stream: StreamSection,
    pub consumer: ConsumerSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServerSection {
    pub equations: Vec<String>,
    pub resolutions: Vec<usize>,
    pub seed: u64,
    pub warmup_rounds: u32,
    pub halt_tolerance: u32,
    pub crop: usize,
    pub normalize: bool,
    pub checkpoint: PathBuf,
    /// Also write the checkpoint after every this many trajectories; 0 = only on shutdown.
    pub checkpoint_every: u64,
}

impl Default for ServerSection {
    fn default() -> Self {
        ServerSection {
            equations: EquationKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            resolutions: vec![64],
            seed: 0,
            warmup_rounds: DEFAULT_WARMUP_ROUNDS,
            halt_tolerance: DEFAULT_HALT_TOLERANCE,
            crop: TRANSPORT_CROP,
            normalize: false,
            checkpoint: PathBuf::from("pdeforge.ckpt"),
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StreamSection {
    pub endpoint: String,
    pub queue_capacity: usize,
    pub connection_buffer: usize,
    /// How long shutdown waits for connected consumers to drain the queue.
    pub drain_timeout_ms: u64,
}

impl Default for StreamSection {
    fn default() -> Self {
        StreamSection {
            endpoint: DEFAULT_ENDPOINT.into(),
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            connection_buffer: 16,
            drain_timeout_ms: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConsumerSection {
    pub staging_capacity: usize,
    pub cache_capacity: usize,
    pub epoch_length: u64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ConsumerSection {
    fn default() -> Self {
        ConsumerSection {
            staging_capacity: DEFAULT_STAGING_CAPACITY,
            cache_capacity: DEFAULT_CACHE_CAPACITY,
            epoch_length: DEFAULT_EPOCH_LENGTH,
            batch_size: 8,
            seed: 0,
        }
    }
}

/// Recognized environment overrides.
pub const ENV_KEYS: [&str; 11] = [
    "FORGE_ENDPOINT",
    "FORGE_SEED",
    "FORGE_EQUATIONS",
    "FORGE_RESOLUTIONS",
    "FORGE_CHECKPOINT",
    "FORGE_QUEUE_CAPACITY",
    "FORGE_STAGING_CAPACITY",
    "FORGE_CACHE_CAPACITY",
    "FORGE_EPOCH_LENGTH",
    "FORGE_BATCH_SIZE",
    "FORGE_CONSUMER_SEED",
];

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.trim().parse().map_err(|_| CliError::Config(format!("{key}: cannot parse '{v}'")))
}

fn list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads `path` (defaults when `None`), applies process environment overrides, validates.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => Config::from_toml(&std::fs::read_to_string(p).map_err(CliError::at(p))?)?,
            None => Config::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), CliError> {
        for key in ENV_KEYS {
            let Some(v) = get(key) else { continue };
            match key {
                "FORGE_ENDPOINT" => self.stream.endpoint = v.trim().to_string(),
                "FORGE_SEED" => self.server.seed = parse(key, &v)?,
                "FORGE_EQUATIONS" => self.server.equations = list(&v).map(String::from).collect(),
                "FORGE_RESOLUTIONS" => {
                    self.server.resolutions = list(&v).map(|s| parse(key, s)).collect::<Result<_, _>>()?
                }
                "FORGE_CHECKPOINT" => self.server.checkpoint = PathBuf::from(v),
                "FORGE_QUEUE_CAPACITY" => self.stream.queue_capacity = parse(key, &v)?,
                "FORGE_STAGING_CAPACITY" => self.consumer.staging_capacity = parse(key, &v)?,
                "FORGE_CACHE_CAPACITY" => self.consumer.cache_capacity = parse(key, &v)?,
                "FORGE_EPOCH_LENGTH" => self.consumer.epoch_length = parse(key, &v)?,
                "FORGE_BATCH_SIZE" => self.consumer.batch_size = parse(key, &v)?,
                "FORGE_CONSUMER_SEED" => self.consumer.seed = parse(key, &v)?,
                _ => unreachable!(),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let positive = [
            ("stream.queue_capacity", self.stream.queue_capacity as u64),
            ("stream.connection_buffer", self.stream.connection_buffer as u64),
            ("consumer.staging_capacity", self.consumer.staging_capacity as u64),
            ("consumer.cache_capacity", self.consumer.cache_capacity as u64),
            ("consumer.epoch_length", self.consumer.epoch_length),
            ("consumer.batch_size", self.consumer.batch_size as u64),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(CliError::Config(format!("{key} must be positive")));
            }
        }
        if self.consumer.batch_size > self.consumer.cache_capacity {
            return Err(CliError::Config("consumer.batch_size exceeds consumer.cache_capacity".into()));
        }
        if !self.stream.endpoint.contains(':') {
            return Err(CliError::Config(format!("endpoint '{}' is not host:port", self.stream.endpoint)));
        }
        self.server_config()?.validate()?;
        Ok(())
    }

    pub fn equations(&self) -> Result<Vec<EquationKind>, CliError> {
        self.server
            .equations
            .iter()
            .map(|s| s.parse().map_err(|e: pdeforge::pde::CatalogError| CliError::Config(e.to_string())))
            .collect()
    }

    pub fn server_config(&self) -> Result<ServerConfig, CliError> {
        let s = &self.server;
        Ok(ServerConfig {
            equations: self.equations()?,
            resolutions: s.resolutions.clone(),
            seed: s.seed,
            warmup_rounds: s.warmup_rounds,
            halt_tolerance: s.halt_tolerance,
            crop: s.crop,
            normalize: s.normalize,
        })
    }
}
