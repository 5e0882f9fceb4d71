//! Library side of the `pdeforge` command: configuration, error-to-exit-code
//! mapping, and one module per subcommand.

pub mod cmd;
pub mod config;
pub mod error;

pub use config::Config;
pub use error::CliError;
