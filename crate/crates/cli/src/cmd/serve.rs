use std::io::Write;
use std::net::{SocketAddr, TcpListener};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::Sender;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use pdeforge::generation::{FrameSample, FrameSink, GenerationError, GenerationServer, SinkClosed, TrajectoryOutcome};
use pdeforge::pde::{discretization_for, trajectory_for};
use pdeforge_stream::{encode, serve, transmission_queue, QueueProducer, ServeOptions, ServeStats};

use crate::config::Config;
use crate::error::CliError;

#[derive(Debug, Clone, Default)]
pub struct ServeArgs {
    pub resume: bool,
    pub dry_run: bool,
    /// Stop at the first trajectory boundary at or past this many frames.
    pub max_frames: Option<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct ServeReport {
    /// Frames handed to the transmission queue in this session.
    pub emitted: u64,
    pub trajectories: u64,
    pub discarded: u64,
    pub round: u32,
    pub error_count: u32,
    pub network: ServeStats,
    pub checkpoint_written: bool,
}

/// Pushes into the transmission queue, giving up only when asked to stop.
struct StopAwareSink<'a> {
    producer: &'a QueueProducer,
    stop: &'a AtomicBool,
}

impl FrameSink for StopAwareSink<'_> {
    fn push(&mut self, sample: FrameSample) -> Result<(), SinkClosed> {
        let mut msg = Arc::new(encode(&sample).map_err(|_| SinkClosed)?);
        loop {
            match self.producer.push_message_timeout(msg, Duration::from_millis(50)) {
                Ok(Ok(())) => return Ok(()),
                Ok(Err(back)) if !self.stop.load(Ordering::Acquire) => msg = back,
                _ => return Err(SinkClosed),
            }
        }
    }
}

pub fn write_checkpoint(server: &GenerationServer, path: &Path) -> Result<(), CliError> {
    let bytes = server.checkpoint()?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &bytes).map_err(CliError::at(&tmp))?;
    std::fs::rename(&tmp, path).map_err(CliError::at(path))
}

pub fn load_server(cfg: &Config, resume: bool, log: &mut dyn Write) -> Result<GenerationServer, CliError> {
    if !resume {
        return Ok(GenerationServer::new(cfg.server_config()?)?);
    }
    let path = &cfg.server.checkpoint;
    let bytes = std::fs::read(path).map_err(CliError::at(path))?;
    let server = GenerationServer::restore(&bytes)?;
    if server.config() != &cfg.server_config()? {
        let _ = writeln!(log, "note: resuming with the generation settings stored in {}", path.display());
    }
    Ok(server)
}

pub fn print_schedule(server: &GenerationServer, out: &mut dyn Write) {
    let cfg = server.config();
    let _ =
        writeln!(out, "equation,n,dt,save_every,warmup_steps,runs,frames_per_run,channels,frames_per_round,canonical");
    let mut total = 0;
    for s in cfg.setups() {
        let d = discretization_for(s.equation, s.resolution);
        let t = trajectory_for(s.equation, s.resolution);
        let frames = t.frames_per_setup() * s.equation.sim_channels();
        total += frames;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            s.equation,
            s.resolution,
            d.dt,
            d.save_frequency,
            t.warmup,
            t.num_runs,
            t.length,
            s.equation.sim_channels(),
            frames,
            d.canonical
        );
    }
    let _ = writeln!(out, "# {} setups, {} frames per full round, crop {}", cfg.setups().len(), total, cfg.crop);
}

/// Runs generation into the network until `stop` is raised or `max_frames` is
/// reached, then checkpoints and drains. `ready` receives the bound address.
pub fn run(
    cfg: &Config,
    args: &ServeArgs,
    stop: Arc<AtomicBool>,
    ready: Option<Sender<SocketAddr>>,
    log: &mut dyn Write,
) -> Result<ServeReport, CliError> {
    let mut server = load_server(cfg, args.resume, log)?;
    if args.dry_run {
        print_schedule(&server, log);
        return Ok(ServeReport { round: server.round(), error_count: server.error_count(), ..Default::default() });
    }
    if server.is_halted() {
        return Err(CliError::Numerical(format!(
            "checkpointed server is halted after {} anomalies",
            server.error_count()
        )));
    }
    let endpoint = &cfg.stream.endpoint;
    let listener = TcpListener::bind(endpoint).map_err(|e| CliError::io(format!("bind {endpoint}"), e))?;
    let addr = listener.local_addr().map_err(|e| CliError::io("listener", e))?;
    let (producer, queue) = transmission_queue(cfg.stream.queue_capacity)?;
    let opts = ServeOptions { connection_buffer: cfg.stream.connection_buffer, ..ServeOptions::default() };
    let handle = serve(listener, queue, opts).map_err(|e| CliError::io("spawn dispatcher", e))?;
    let _ = writeln!(log, "serving on {addr}");
    if let Some(tx) = ready {
        let _ = tx.send(addr);
    }

    let mut report = ServeReport::default();
    let mut failure = None;
    let mut sink = StopAwareSink { producer: &producer, stop: &stop };
    while !stop.load(Ordering::Acquire) && args.max_frames.is_none_or(|m| report.emitted < m) {
        match server.run_next_trajectory(&mut sink) {
            Ok(TrajectoryOutcome::Emitted { frames, .. }) => {
                report.emitted += frames as u64;
                report.trajectories += 1;
                let every = cfg.server.checkpoint_every;
                if every > 0 && report.trajectories % every == 0 {
                    write_checkpoint(&server, &cfg.server.checkpoint)?;
                }
            }
            Ok(TrajectoryOutcome::Discarded { setup, run, step }) => {
                report.discarded += 1;
                let _ = writeln!(
                    log,
                    "discarded {} n={} run {} at step {} ({} anomalies)",
                    setup.equation,
                    setup.resolution,
                    run,
                    step,
                    server.error_count()
                );
            }
            Err(GenerationError::SinkClosed(_)) => break,
            Err(e) => {
                failure = Some(CliError::from(e));
                break;
            }
        }
    }

    write_checkpoint(&server, &cfg.server.checkpoint)?;
    report.checkpoint_written = true;
    report.round = server.round();
    report.error_count = server.error_count();

    // give connected consumers a chance to take what is queued
    let deadline = Instant::now() + Duration::from_millis(cfg.stream.drain_timeout_ms);
    let pushed = producer.stats().pushed;
    while Instant::now() < deadline && handle.connected() > 0 {
        let s = handle.stats();
        if producer.is_empty() && s.served + s.lost >= pushed {
            break;
        }
        thread::sleep(Duration::from_millis(5));
    }
    drop(producer);
    report.network = handle.shutdown();
    let _ = writeln!(
        log,
        "stopped: {} frames emitted, {} served, {} lost, checkpoint {}",
        report.emitted,
        report.network.served,
        report.network.lost,
        cfg.server.checkpoint.display()
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}
