use std::io::Write;
use std::net::TcpListener;
use std::thread;
use std::time::{Duration, Instant};

use pdeforge::generation::{FrameMetadata, FrameSample, GenerationServer, ServerConfig};
use pdeforge::ic::InitializerConfig;
use pdeforge::pde::{simulate_trajectory, EquationKind, TrajectoryRequest};
use pdeforge_stream::{decode, encode, serve, transmission_queue, Consumer, ConsumerOptions, ServeOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct BenchArgs {
    pub equation: EquationKind,
    pub n: usize,
    pub codec_frames: u64,
    pub loopback_frames: u64,
}

impl Default for BenchArgs {
    fn default() -> Self {
        BenchArgs { equation: EquationKind::Burgers, n: 16, codec_frames: 10_000, loopback_frames: 300 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Throughput {
    pub frames: u64,
    pub bytes: u64,
    pub seconds: f64,
}

impl Throughput {
    pub fn frames_per_second(&self) -> f64 {
        self.frames as f64 / self.seconds.max(1e-9)
    }

    pub fn bytes_per_second(&self) -> f64 {
        self.bytes as f64 / self.seconds.max(1e-9)
    }
}

#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    pub simulation: Throughput,
    pub loopback: Throughput,
    pub codec: Throughput,
}

pub fn bench_simulation(args: &BenchArgs, seed: u64) -> Result<Throughput, CliError> {
    let started = Instant::now();
    let t = simulate_trajectory::<f32>(&TrajectoryRequest::new(args.equation, args.n, seed))?;
    let frames = (t.frames.len() * args.equation.sim_channels()) as u64;
    Ok(Throughput { frames, bytes: frames * (args.n as u64).pow(3) * 4, seconds: started.elapsed().as_secs_f64() })
}

pub fn bench_codec(frames: u64, edge: u16, seed: u64) -> Result<Throughput, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let voxels = (edge as usize).pow(3);
    let sample = FrameSample {
        meta: FrameMetadata {
            equation: EquationKind::Burgers,
            initializer: InitializerConfig::TfsA,
            resolution: edge,
            run: 0,
            frame: 0,
            channel: 0,
            canonical: false,
            normalized: false,
            pde_params: vec![0.01],
            ic_params: vec![4.0, -1.0, 1.0],
        },
        dims: [edge; 3],
        payload: (0..voxels).map(|_| rng.random_range(-1.0..1.0)).collect(),
    };
    let started = Instant::now();
    let mut bytes = 0;
    for i in 0..frames {
        let mut s = sample.clone();
        s.meta.frame = i as u16;
        let encoded = encode(&s)?;
        bytes += encoded.len() as u64;
        if !decode(&encoded)?.bit_eq(&s) {
            return Err(CliError::Protocol(format!("codec round trip changed frame {i}")));
        }
    }
    Ok(Throughput { frames, bytes, seconds: started.elapsed().as_secs_f64() })
}

pub fn bench_loopback(cfg: &Config, args: &BenchArgs) -> Result<Throughput, CliError> {
    let server_cfg = ServerConfig {
        equations: vec![args.equation],
        resolutions: vec![args.n],
        seed: cfg.server.seed,
        warmup_rounds: 0,
        ..ServerConfig::default()
    };
    let mut server = GenerationServer::new(server_cfg)?;
    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| CliError::io("bind loopback", e))?;
    let (producer, queue) = transmission_queue(cfg.stream.queue_capacity)?;
    let handle = serve(listener, queue, ServeOptions::default()).map_err(|e| CliError::io("serve", e))?;
    let opts = ConsumerOptions {
        staging_capacity: cfg.consumer.staging_capacity,
        cache_capacity: cfg.consumer.cache_capacity,
    };
    let consumer = Consumer::connect(handle.local_addr(), opts)?;
    while handle.connected() == 0 {
        thread::sleep(Duration::from_millis(1));
    }
    thread::sleep(Duration::from_millis(20));

    let started = Instant::now();
    let mut sink = producer.clone();
    let mut emitted = 0;
    while emitted < args.loopback_frames {
        if let pdeforge::generation::TrajectoryOutcome::Emitted { frames, .. } =
            server.run_next_trajectory(&mut sink)?
        {
            emitted += frames as u64;
        }
    }
    let deadline = Instant::now() + Duration::from_secs(60);
    while consumer.stats().migrated < emitted {
        if Instant::now() > deadline || consumer.is_disconnected() {
            return Err(CliError::Protocol(format!("loopback delivered {} of {emitted}", consumer.stats().migrated)));
        }
        thread::sleep(Duration::from_millis(1));
    }
    let seconds = started.elapsed().as_secs_f64();
    drop(sink);
    drop(producer);
    let stats = handle.shutdown();
    let _ = consumer.close();
    let crop = args.n.min(pdeforge::generation::TRANSPORT_CROP) as u64;
    Ok(Throughput { frames: stats.served, bytes: stats.served * crop.pow(3) * 4, seconds })
}

pub fn run(cfg: &Config, args: &BenchArgs, out: &mut dyn Write) -> Result<BenchReport, CliError> {
    let report = BenchReport {
        simulation: bench_simulation(args, cfg.server.seed)?,
        loopback: bench_loopback(cfg, args)?,
        codec: bench_codec(args.codec_frames, args.n.min(u16::MAX as usize) as u16, cfg.server.seed)?,
    };
    let _ = writeln!(out, "path,frames,seconds,frames_per_s,bytes_per_s");
    for (name, t) in [("simulation", report.simulation), ("loopback", report.loopback), ("codec", report.codec)] {
        let _ = writeln!(
            out,
            "{name},{},{:.4},{:.1},{:.1}",
            t.frames,
            t.seconds,
            t.frames_per_second(),
            t.bytes_per_second()
        );
    }
    Ok(report)
}
