use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use pdeforge::container::{write_container, ContainerHeader};
use pdeforge::generation::FrameSample;
use pdeforge::pde::discretization_for;
use pdeforge::spectral::{Field, Grid3};
use pdeforge_stream::{Consumer, ConsumerOptions, EpochCounter};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct ConsumeArgs {
    pub endpoint: String,
    pub count: u64,
    pub out_dir: Option<PathBuf>,
    /// Give up when nothing arrives for this long.
    pub idle_timeout: Duration,
}

#[derive(Debug, Clone, Default)]
pub struct ConsumeReport {
    pub received: u64,
    pub per_equation: BTreeMap<String, u64>,
    pub range_violations: u64,
    pub decode_errors: u64,
    pub bytes: u64,
    pub dumped: u64,
    pub drawn: u64,
    pub epochs: u64,
    pub evictions: u64,
    pub seconds: f64,
    /// `None` when `count` frames arrived.
    pub failure: Option<String>,
}

impl ConsumeReport {
    pub fn print(&self, out: &mut dyn Write) {
        let _ = writeln!(out, "received {} frames ({} bytes) in {:.3} s", self.received, self.bytes, self.seconds);
        if self.seconds > 0.0 {
            let _ = writeln!(
                out,
                "throughput {:.1} frames/s, {:.1} MB/s",
                self.received as f64 / self.seconds,
                self.bytes as f64 / self.seconds / 1e6
            );
        }
        for (eq, n) in &self.per_equation {
            let _ = writeln!(out, "  {eq}: {n}");
        }
        let _ = writeln!(out, "value-range violations: {}", self.range_violations);
        let _ = writeln!(out, "decode errors: {}", self.decode_errors);
        let _ = writeln!(
            out,
            "drawn {} samples, {} epoch boundaries, {} evictions",
            self.drawn, self.epochs, self.evictions
        );
        if self.dumped > 0 {
            let _ = writeln!(out, "dumped {} containers", self.dumped);
        }
        if let Some(f) = &self.failure {
            let _ = writeln!(out, "incomplete: {f}");
        }
    }
}

#[derive(Default)]
struct Tally {
    seen: u64,
    per_equation: BTreeMap<String, u64>,
    violations: u64,
    bytes: u64,
    dumped: u64,
    dump_error: Option<String>,
}

fn violations(s: &FrameSample) -> u64 {
    let range = discretization_for(s.meta.equation, s.meta.resolution as usize).value_range;
    let (lo, hi) = if s.meta.normalized { (-1.0, 1.0) } else { (range.lo, range.hi) };
    s.payload.iter().filter(|&&v| !(v as f64 >= lo && v as f64 <= hi)).count() as u64
}

fn dump(dir: &Path, index: u64, s: &FrameSample) -> Result<(), String> {
    let m = &s.meta;
    let h = s.dims[0] as usize;
    if s.dims.iter().any(|&d| d as usize != h) {
        return Err(format!("frame {index} is not cubic"));
    }
    let disc = discretization_for(m.equation, m.resolution as usize);
    let grid = Grid3::new(h, disc.extent * h as f64 / m.resolution as f64).map_err(|e| e.to_string())?;
    let field = Field::from_vec(grid, 1, s.payload.clone()).map_err(|e| e.to_string())?;
    let params = m.pde_params.iter().map(|&p| p as f64).collect();
    let mut header = ContainerHeader::new(m.equation, params, grid, "f32le", 1, 1);
    for (k, v) in [
        ("resolution", m.resolution.to_string()),
        ("run", m.run.to_string()),
        ("frame", m.frame.to_string()),
        ("channel", m.channel.to_string()),
        ("initializer", m.initializer.name().to_string()),
        ("normalized", m.normalized.to_string()),
    ] {
        header.extra.insert(k.into(), v);
    }
    let name = format!("{index:06}-{}-n{}-r{}-f{}-c{}.tdp", m.equation, m.resolution, m.run, m.frame, m.channel);
    write_container(&dir.join(name), &header, &[field]).map_err(|e| e.to_string())
}

pub fn run(cfg: &Config, args: &ConsumeArgs, log: &mut dyn Write) -> Result<ConsumeReport, CliError> {
    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir).map_err(CliError::at(dir))?;
    }
    let tally = Arc::new(Mutex::new(Tally::default()));
    let tap = {
        let tally = tally.clone();
        let (count, dir) = (args.count, args.out_dir.clone());
        Box::new(move |s: &FrameSample| {
            let mut t = tally.lock().unwrap();
            if t.seen >= count {
                return;
            }
            let index = t.seen;
            t.seen += 1;
            *t.per_equation.entry(s.meta.equation.name().to_string()).or_insert(0) += 1;
            t.violations += violations(s);
            t.bytes += 4 * s.payload.len() as u64;
            if let Some(dir) = &dir {
                match dump(dir, index, s) {
                    Ok(()) => t.dumped += 1,
                    Err(e) => t.dump_error = t.dump_error.take().or(Some(e)),
                }
            }
        })
    };
    let opts = ConsumerOptions {
        staging_capacity: cfg.consumer.staging_capacity,
        cache_capacity: cfg.consumer.cache_capacity,
    };
    let consumer = Consumer::connect_with_tap(args.endpoint.as_str(), opts, Some(tap))?;
    let _ = writeln!(log, "connected to {}", args.endpoint);

    let started = Instant::now();
    let mut last_progress = (0, Instant::now());
    let mut failure = None;
    loop {
        let migrated = consumer.stats().migrated;
        if migrated >= args.count {
            break;
        }
        if consumer.is_disconnected() && migrated == consumer.stats().received {
            failure = Some(format!("connection closed after {migrated} of {} frames", args.count));
            break;
        }
        if migrated != last_progress.0 {
            last_progress = (migrated, Instant::now());
        } else if last_progress.1.elapsed() > args.idle_timeout {
            failure = Some(format!("no data for {:?} after {migrated} of {} frames", args.idle_timeout, args.count));
            break;
        }
        thread::sleep(Duration::from_millis(2));
    }
    let seconds = started.elapsed().as_secs_f64();
    let cache = consumer.cache().clone();
    let (stats, outcome) = consumer.close();
    if let (Err(e), None) = (&outcome, &failure) {
        failure = Some(e.to_string());
    }

    // the training side: draw as many samples as were received
    let t = std::mem::take(&mut *tally.lock().unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.consumer.seed);
    let mut epoch =
        EpochCounter::new(cfg.consumer.epoch_length).ok_or_else(|| CliError::Config("epoch length 0".into()))?;
    let mut drawn = 0;
    while drawn < t.seen && !cache.is_empty() {
        let batch = (cfg.consumer.batch_size as u64).min(t.seen - drawn).min(cache.len() as u64) as usize;
        let got = cache.draw(batch, &mut rng).map_err(|e| CliError::Protocol(e.to_string()))?;
        drawn += got.len() as u64;
        epoch.record(got.len() as u64);
    }
    if let Some(e) = t.dump_error {
        let _ = writeln!(log, "warning: dump failed: {e}");
    }
    Ok(ConsumeReport {
        received: t.seen,
        per_equation: t.per_equation,
        range_violations: t.violations,
        decode_errors: stats.decode_errors,
        bytes: t.bytes,
        dumped: t.dumped,
        drawn,
        epochs: epoch.epochs(),
        evictions: cache.evictions(),
        seconds,
        failure,
    })
}
