use std::io;
use std::path::Path;

use pdeforge::analysis::AnalysisError;
use pdeforge::container::ContainerError;
use pdeforge::generation::{CheckpointError, GenerationError};
use pdeforge::pde::SimulateError;
use pdeforge_stream::{ConsumerError, ProtocolError, PumpError, QueueError};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_PROTOCOL: i32 = 4;
pub const EXIT_NUMERICAL: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    /// Wire, container or checkpoint format violations.
    #[error("format error: {0}")]
    Protocol(String),
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
            CliError::Protocol(_) => EXIT_PROTOCOL,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }

    pub fn at(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
        move |e| CliError::io(path.display().to_string(), e)
    }
}

impl From<ContainerError> for CliError {
    fn from(e: ContainerError) -> Self {
        match e {
            ContainerError::Io(source) => CliError::Io { context: "container".into(), source },
            other => CliError::Protocol(other.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Config(msg) => CliError::Config(msg),
            other => CliError::Protocol(format!("checkpoint: {other}")),
        }
    }
}

impl From<GenerationError> for CliError {
    fn from(e: GenerationError) -> Self {
        match e {
            GenerationError::Config(msg) => CliError::Config(msg),
            GenerationError::Halted(_) => CliError::Numerical(e.to_string()),
            GenerationError::SinkClosed(_) => CliError::Protocol(e.to_string()),
        }
    }
}

impl From<SimulateError> for CliError {
    fn from(e: SimulateError) -> Self {
        match e {
            SimulateError::Integrate(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::ZeroReference => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Io(source) => CliError::Io { context: "stream".into(), source },
            other => CliError::Protocol(other.to_string()),
        }
    }
}

impl From<PumpError> for CliError {
    fn from(e: PumpError) -> Self {
        match e {
            PumpError::Connection(p) => p.into(),
        }
    }
}

impl From<QueueError> for CliError {
    fn from(e: QueueError) -> Self {
        match e {
            QueueError::ZeroCapacity => CliError::Config(e.to_string()),
            QueueError::Closed => CliError::Protocol(e.to_string()),
            QueueError::Encode(p) => p.into(),
        }
    }
}

impl From<ConsumerError> for CliError {
    fn from(e: ConsumerError) -> Self {
        match e {
            ConsumerError::Io(source) => CliError::Io { context: "connect".into(), source },
            other => CliError::Config(other.to_string()),
        }
    }
}
