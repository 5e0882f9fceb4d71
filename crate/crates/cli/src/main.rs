use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::{ArgGroup, Args, Parser, Subcommand};
use pdeforge::pde::EquationKind;
use pdeforge_cli::cmd::analyze::AnalyzeMode;
use pdeforge_cli::cmd::{analyze, bench, checkpoint, consume, serve, simulate};
use pdeforge_cli::error::{EXIT_NUMERICAL, EXIT_OK};
use pdeforge_cli::{CliError, Config};

/// Procedural 3D PDE data generation and streaming.
///
/// Exit codes: 0 success, 2 configuration or usage, 3 I/O, 4 wire/container/checkpoint
/// format, 5 numerical failure.
#[derive(Parser)]
#[command(name = "pdeforge", version)]
struct Cli {
    /// TOML config file; FORGE_* environment variables override it.
    #[arg(long, global = true, env = "FORGE_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and write it as a container file.
    Simulate {
        equation: EquationKind,
        n: usize,
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Recorded frames (defaults to the tabulated trajectory length).
        #[arg(long)]
        frames: Option<usize>,
        /// Integrate and store in f64.
        #[arg(long)]
        double: bool,
    },
    /// Run the generation server and stream frames to consumers until interrupted.
    Serve {
        /// TOML config file (same as --config).
        config_path: Option<PathBuf>,
        /// Restore state from the configured checkpoint file.
        #[arg(long)]
        resume: bool,
        /// Validate the config and print the schedule without simulating.
        #[arg(long)]
        dry_run: bool,
        /// Stop after at least this many frames (at a trajectory boundary).
        #[arg(long)]
        max_frames: Option<u64>,
    },
    /// Receive frames through the staging buffer and cache and report statistics.
    Consume {
        /// host:port; defaults to the configured endpoint.
        endpoint: Option<String>,
        #[arg(long, default_value_t = 1000)]
        count: u64,
        /// Write every received frame as a container.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Seconds without data before giving up.
        #[arg(long, default_value_t = 30)]
        idle_timeout: u64,
    },
    /// Spectra and error metrics of container files, as CSV.
    Analyze(AnalyzeArgs),
    /// Measure simulation, loopback streaming and codec throughput.
    Bench {
        /// TOML config file (same as --config).
        config_path: Option<PathBuf>,
        #[arg(long, default_value = "burgers")]
        equation: EquationKind,
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, default_value_t = 10_000)]
        codec_frames: u64,
        #[arg(long, default_value_t = 300)]
        loopback_frames: u64,
    },
    /// Checkpoint utilities.
    Checkpoint {
        #[command(subcommand)]
        action: CheckpointAction,
    },
}

#[derive(Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["spectrum", "enstrophy", "nrmse"])))]
struct AnalyzeArgs {
    input: PathBuf,
    /// Shell-aggregated magnitude spectrum.
    #[arg(long)]
    spectrum: bool,
    /// Enstrophy spectrum of a 3-channel velocity file.
    #[arg(long)]
    enstrophy: bool,
    /// Compare against a reference container.
    #[arg(long, value_name = "REF")]
    nrmse: Option<PathBuf>,
    /// Apply the Hann window before the magnitude spectrum.
    #[arg(long, requires = "spectrum")]
    window: bool,
    /// Write to a file instead of standard output.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CheckpointAction {
    /// Print what a checkpoint contains.
    Inspect { path: PathBuf },
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let stdout = &mut io::stdout().lock();
    let stderr = &mut io::stderr();
    match cli.command {
        Command::Simulate { equation, n, out, seed, frames, double } => {
            simulate::run(&simulate::SimulateArgs { equation, n, seed, out, frames, double }, stderr)?;
        }
        Command::Serve { config_path, resume, dry_run, max_frames } => {
            let cfg = Config::load(config_path.or(cli.config).as_deref())?;
            let stop = Arc::new(AtomicBool::new(false));
            if !dry_run {
                let flag = stop.clone();
                ctrlc::set_handler(move || flag.store(true, Ordering::Release))
                    .map_err(|e| CliError::Config(format!("signal handler: {e}")))?;
            }
            let log: &mut dyn Write = if dry_run { stdout } else { stderr };
            serve::run(&cfg, &serve::ServeArgs { resume, dry_run, max_frames }, stop, None, log)?;
        }
        Command::Consume { endpoint, count, out_dir, idle_timeout } => {
            let cfg = Config::load(cli.config.as_deref())?;
            let endpoint = endpoint.unwrap_or_else(|| cfg.stream.endpoint.clone());
            let args =
                consume::ConsumeArgs { endpoint, count, out_dir, idle_timeout: Duration::from_secs(idle_timeout) };
            let report = consume::run(&cfg, &args, stderr)?;
            report.print(stdout);
            if report.failure.is_some() {
                return Ok(pdeforge_cli::error::EXIT_IO);
            }
            if report.range_violations > 0 {
                return Ok(EXIT_NUMERICAL);
            }
        }
        Command::Analyze(a) => {
            let mode = match (a.spectrum, a.enstrophy, a.nrmse) {
                (true, _, _) => AnalyzeMode::Spectrum { windowed: a.window },
                (_, true, _) => AnalyzeMode::Enstrophy,
                (_, _, Some(r)) => AnalyzeMode::Nrmse(r),
                _ => unreachable!("clap enforces one mode"),
            };
            match a.output {
                Some(path) => {
                    let mut f = std::fs::File::create(&path).map_err(CliError::at(&path))?;
                    analyze::run(&a.input, &mode, &mut f)?;
                }
                None => analyze::run(&a.input, &mode, stdout)?,
            }
        }
        Command::Bench { config_path, equation, n, codec_frames, loopback_frames } => {
            let cfg = Config::load(config_path.or(cli.config).as_deref())?;
            bench::run(&cfg, &bench::BenchArgs { equation, n, codec_frames, loopback_frames }, stdout)?;
        }
        Command::Checkpoint { action: CheckpointAction::Inspect { path } } => checkpoint::inspect(&path, stdout)?,
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("pdeforge: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
