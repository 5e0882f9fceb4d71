//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::f64::consts::PI;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use pdeforge::analysis::{enstrophy_spectrum, nrmse_es, shell_bin_count, shell_spectrum, vorticity};
use pdeforge::etdrk::{integrate, precompute_etdrk4, SaveSchedule, Stepper};
use pdeforge::generation::{
    decode_checkpoint, FaultSite, FrameMetadata, FrameSample, GenerationError, GenerationServer, ServerConfig,
    TrajectoryOutcome,
};
use pdeforge::ic::{
    decayed_energy, diffused_noise, gaussian_noise, poisson_from_tfs_spectrum, truncated_fourier,
    truncated_fourier_spectrum, InitializerConfig,
};
use pdeforge::pde::{
    clamp_to_value_range, discretization_for, linear_symbol, simulate_trajectory, stepper_for, trajectory_for,
    EquationKind, NonlinearOperator, PdeParams, TrajectoryRequest, KDV_DISPERSION, SWIFT_HOHENBERG_R,
};
use pdeforge::spectral::{Field, Grid3, Spectral, SpectralField};
use pdeforge::Real;
use pdeforge_stream::{
    decode, decode_from, encode, transmission_queue, CacheError, Consumer, ConsumerOptions, EpochCounter, MfuCache,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn smooth_field(grid: Grid3, channels: usize, seed: u64) -> Field<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms = Vec::new();
    for c in 0..channels {
        for _ in 0..4 {
            let m: [f64; 3] = [0, 1, 2].map(|_| rng.random_range(-2..=2) as f64);
            terms.push((c, m, rng.random_range(-0.3..0.3), rng.random_range(0.0..2.0 * PI)));
        }
    }
    let l = grid.extent();
    Field::from_fn(grid, channels, |c, x, y, z| {
        terms
            .iter()
            .filter(|t| t.0 == c)
            .map(|&(_, m, a, ph)| a * (2.0 * PI * (m[0] * x + m[1] * y + m[2] * z) / l + ph).cos())
            .sum()
    })
}

fn random_field(grid: Grid3, channels: usize, seed: u64) -> Field<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Field::from_fn(grid, channels, |_, _, _, _| rng.random_range(-1.0..1.0))
}

// ---- linear exactness ----

/// Worst per-mode relative error against exp(L t) after 100 single-precision steps.
fn linear_mode_error(kind: EquationKind, params: PdeParams) -> f64 {
    let n = 32;
    let d = discretization_for(kind, n);
    let grid = Grid3::new(n, d.extent).unwrap();
    let sp = Spectral::<f32>::new(grid);
    let symbol = linear_symbol(kind, &params, &grid);
    let stepper = stepper_for::<f32>(kind, &symbol, d.dt).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let data = smooth_field(grid, 3, 1).data().iter().map(|v| (v + rng.random_range(-0.05..0.05)) as f32).collect();
    let u0 = Field::<f32>::from_vec(grid, 3, data).unwrap();
    let steps = 100;
    let t = steps as f64 * d.dt;
    let start = sp.forward(&u0).unwrap();
    let mut state = start.clone();
    for _ in 0..steps {
        state = stepper.step(&state, &mut |s| SpectralField::zeros(*s.grid(), s.channels()));
    }
    let len = grid.len();
    let exact: Vec<Complex64> = start
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, z)| Complex64::new(z.re as f64, z.im as f64) * (symbol.values()[i % len] * t).exp())
        .collect();
    let peak = exact.iter().map(|z| z.norm()).fold(0.0, f64::max);
    state
        .coeffs()
        .iter()
        .zip(&exact)
        .filter(|(_, ex)| ex.norm() > 1e-3 * peak)
        .map(|(num, ex)| (Complex64::new(num.re as f64, num.im as f64) - ex).norm() / ex.norm())
        .fold(0.0, f64::max)
}

fn linear_exactness() -> Check {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for v in [5e-4, 5e-3] {
        worst = worst.max(linear_mode_error(EquationKind::Diffusion, PdeParams { nu: v, ..Default::default() }));
        worst = worst.max(linear_mode_error(EquationKind::HyperDiffusion, PdeParams { zeta: v, ..Default::default() }));
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(worst < 1e-5 && secs < 10.0, format!("max mode rel err {worst:.2e}, {secs:.1} s"))
}

// ---- convergence orders ----

fn run_steps(
    stepper: &dyn Stepper<f64>,
    u0: &SpectralField<f64>,
    steps: usize,
    nonlin: &mut dyn FnMut(&SpectralField<f64>) -> SpectralField<f64>,
) -> SpectralField<f64> {
    let mut s = u0.clone();
    for _ in 0..steps {
        s = stepper.step(&s, nonlin);
    }
    s
}

fn spectral_diff(a: &SpectralField<f64>, b: &SpectralField<f64>) -> f64 {
    a.coeffs().iter().zip(b.coeffs()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

fn richardson_order(
    stepper_at: impl Fn(f64) -> Box<dyn Stepper<f64>>,
    u0: &SpectralField<f64>,
    dt: f64,
    t_end: f64,
    nonlin: &mut dyn FnMut(&SpectralField<f64>) -> SpectralField<f64>,
) -> f64 {
    let steps = (t_end / dt).round() as usize;
    let a = run_steps(stepper_at(dt).as_ref(), u0, steps, nonlin);
    let b = run_steps(stepper_at(dt / 2.0).as_ref(), u0, 2 * steps, nonlin);
    let c = run_steps(stepper_at(dt / 4.0).as_ref(), u0, 4 * steps, nonlin);
    (spectral_diff(&a, &b) / spectral_diff(&b, &c)).log2()
}

fn convergence_orders() -> Check {
    let started = Instant::now();
    let grid = Grid3::new(16, 1.0).unwrap();
    let sp = Arc::new(Spectral::<f64>::new(grid));

    let params = PdeParams { nu: 5e-3, ..Default::default() };
    let symbol = linear_symbol(EquationKind::Burgers, &params, &grid);
    let op = NonlinearOperator::new(EquationKind::Burgers, params, sp.clone());
    let mut u0 = sp.forward(&smooth_field(grid, 3, 4)).unwrap();
    sp.dealias(&mut u0);
    let order2 = richardson_order(
        |dt| stepper_for::<f64>(EquationKind::Burgers, &symbol, dt).unwrap(),
        &u0,
        0.02,
        0.2,
        &mut |s| op.eval(s),
    );

    let kdv = linear_symbol(EquationKind::KdV, &PdeParams { xi: KDV_DISPERSION, ..Default::default() }, &grid);
    let mut v0 = sp.forward(&smooth_field(grid, 1, 8)).unwrap();
    sp.dealias(&mut v0);
    let mut nonlin = |s: &SpectralField<f64>| {
        let mut s = s.clone();
        sp.dealias(&mut s);
        let u = sp.inverse(&s).unwrap();
        let sq = sp.forward(&u.map(|v| -0.5 * v * v)).unwrap();
        let mut out = SpectralField::zeros(grid, 1);
        for axis in 0..3 {
            for (o, v) in out.coeffs_mut().iter_mut().zip(sp.gradient(&sq, axis).unwrap().coeffs()) {
                *o += v;
            }
        }
        sp.dealias(&mut out);
        out
    };
    let order4 =
        richardson_order(|dt| Box::new(precompute_etdrk4::<f64>(&kdv, dt).unwrap()), &v0, 4e-6, 2e-4, &mut nonlin);
    let secs = started.elapsed().as_secs_f64();
    ensure(
        (1.8..=2.2).contains(&order2) && (3.5..=4.5).contains(&order4) && secs < 120.0,
        format!("ETDRK2 Burgers {order2:.3}, ETDRK4 KdV-type {order4:.3}, {secs:.1} s"),
    )
}

// ---- ODE reductions ----

fn constant_run<T: Real>(kind: EquationKind, params: PdeParams, u0: f64, steps: usize) -> Option<Vec<f64>> {
    let d = discretization_for(kind, 64);
    let grid = Grid3::new(8, d.extent).unwrap();
    let sp = Arc::new(Spectral::<T>::new(grid));
    let symbol = linear_symbol(kind, &params, &grid);
    let stepper = stepper_for::<T>(kind, &symbol, d.dt).unwrap();
    let op = NonlinearOperator::new(kind, params, sp.clone());
    let u = Field::<T>::from_fn(grid, 3, |_, _, _, _| u0);
    let frames = integrate(&sp, &u, stepper.as_ref(), &mut |s| op.eval(s), steps, SaveSchedule::every(1)).ok()?;
    let mut out = Vec::new();
    for f in &frames {
        let (lo, hi) = f.min_max();
        if (hi.as_f64() - lo.as_f64()).abs() > 1e-6 * hi.as_f64().abs().max(1.0) {
            return None;
        }
        out.push(f.data()[0].as_f64());
    }
    Some(out)
}

fn rk4_reference(f: impl Fn(f64) -> f64, u0: f64, dt: f64, steps: usize, sub: usize) -> Vec<f64> {
    let h = dt / sub as f64;
    let mut u = u0;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        for _ in 0..sub {
            let k1 = f(u);
            let k2 = f(u + 0.5 * h * k1);
            let k3 = f(u + 0.5 * h * k2);
            let k4 = f(u + h * k3);
            u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        out.push(u);
    }
    out
}

fn max_rel(a: Option<Vec<f64>>, b: &[f64]) -> f64 {
    match a {
        Some(a) => a.iter().zip(b).map(|(x, y)| ((x - y) / y).abs()).fold(0.0, f64::max),
        None => f64::INFINITY,
    }
}

fn ode_reductions() -> Check {
    let r = 10.0;
    let u0 = 0.1;
    let dt = discretization_for(EquationKind::FisherKpp, 64).dt;
    let logistic: Vec<f64> = (1..=100)
        .map(|i| {
            let e = (r * dt * i as f64).exp();
            u0 * e / (1.0 - u0 + u0 * e)
        })
        .collect();
    let fk = PdeParams { nu: 1e-3, r, ..Default::default() };
    let fk_err = max_rel(constant_run::<f32>(EquationKind::FisherKpp, fk, u0, 100), &logistic)
        .max(max_rel(constant_run::<f64>(EquationKind::FisherKpp, fk, u0, 100), &logistic));

    let r = SWIFT_HOHENBERG_R;
    let u0 = 0.02;
    let dt = discretization_for(EquationKind::SwiftHohenberg, 64).dt;
    let reference = rk4_reference(|u| (r - 1.0) * u + u * u - u * u * u, u0, dt, 100, 1000);
    let sh = PdeParams { r, ..Default::default() };
    let sh_err = max_rel(constant_run::<f32>(EquationKind::SwiftHohenberg, sh, u0, 100), &reference)
        .max(max_rel(constant_run::<f64>(EquationKind::SwiftHohenberg, sh, u0, 100), &reference));
    ensure(fk_err < 1e-4 && sh_err < 1e-4, format!("FisherKPP vs logistic {fk_err:.2e}, SH vs RK4 {sh_err:.2e}"))
}

// ---- KS envelope ----

fn ks_envelope() -> Check {
    let started = Instant::now();
    let kind = EquationKind::KuramotoSivashinsky;
    let traj = trajectory_for(kind, 64);
    let range = discretization_for(kind, 64).value_range;
    if traj.warmup != 500 || discretization_for(kind, 64).extent != 64.0 {
        return Err(format!("tabulated warmup {} extent {}", traj.warmup, discretization_for(kind, 64).extent));
    }
    let req = TrajectoryRequest {
        initializer: Some(InitializerConfig::Gn),
        frames: Some(30),
        ..TrajectoryRequest::new(kind, 64, 1)
    };
    let out = simulate_trajectory::<f32>(&req).map_err(|e| e.to_string())?;
    let mut raw_peak = 0.0f64;
    let mut finite = true;
    let mut clamped_ok = true;
    for f in &out.frames {
        finite &= f.data().iter().all(|v| v.is_finite());
        raw_peak = raw_peak.max(f.max_abs().as_f64());
        clamped_ok &= clamp_to_value_range(f, kind, false).data().iter().all(|v| range.contains(v.as_f64()));
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(
        out.frames.len() == 30 && finite && clamped_ok && secs < 180.0,
        format!(
            "{} frames, finite {finite}, raw max |u| {raw_peak:.2}, clamped in range {clamped_ok}, {secs:.1} s",
            out.frames.len()
        ),
    )
}

// ---- frame accounting ----

fn frame_accounting() -> Check {
    let kinds = [EquationKind::KuramotoSivashinsky, EquationKind::Burgers, EquationKind::FisherKpp];
    let cfg = ServerConfig {
        equations: kinds.to_vec(),
        resolutions: vec![64],
        seed: 3,
        warmup_rounds: 0,
        ..Default::default()
    };
    let mut server = GenerationServer::new(cfg).map_err(|e| e.to_string())?;
    if server.xi() != 1.0 {
        return Err(format!("xi {}", server.xi()));
    }
    let mut frames: Vec<FrameSample> = Vec::new();
    server.run_round(&mut frames).map_err(|e| e.to_string())?;
    let counts: Vec<usize> = kinds.iter().map(|&k| frames.iter().filter(|f| f.meta.equation == k).count()).collect();
    ensure(
        counts == [30, 90, 90] && server.error_count() == 0,
        format!("KS {}, Burgers {}, FisherKPP {}", counts[0], counts[1], counts[2]),
    )
}

// ---- initializer spectra ----

const SAMPLES: usize = 100;

fn mode_radius(grid: &Grid3, idx: usize) -> f64 {
    let (x, y, z) = grid.coords(idx);
    let m = [grid.mode(x), grid.mode(y), grid.mode(z)].map(|v| v as f64);
    (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt()
}

fn shell_counts(grid: &Grid3) -> Vec<f64> {
    let mut counts = vec![0.0; shell_bin_count(grid)];
    for idx in 0..grid.len() {
        counts[(mode_radius(grid, idx) + 0.5).floor() as usize] += 1.0;
    }
    counts
}

fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

fn mean_spectrum(mut sample: impl FnMut() -> Vec<f64>) -> Vec<f64> {
    let mut acc = sample();
    for _ in 1..SAMPLES {
        for (a, v) in acc.iter_mut().zip(sample()) {
            *a += v;
        }
    }
    acc.iter().map(|v| v / SAMPLES as f64).collect()
}

fn initializer_spectra() -> Check {
    let grid = Grid3::new(32, 1.0).unwrap();
    let sp = Spectral::<f64>::new(grid);
    let outside = |idx: usize, k: usize| {
        let (x, y, w) = grid.coords(idx);
        [x, y, w].iter().any(|&a| grid.mode(a).unsigned_abs() as usize > k)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut tfs_leak = 0.0f64;
    let mut tfs_field_leak = 0.0f64;
    for i in 0..SAMPLES {
        let k = 3 + i % 7;
        let spec = truncated_fourier_spectrum(&sp, k, &mut rng).unwrap();
        for (idx, z) in spec.coeffs().iter().enumerate() {
            if outside(idx, k) {
                tfs_leak = tfs_leak.max(z.norm_sqr());
            }
        }
        let back = sp.forward(&truncated_fourier(&sp, k, &mut rng).unwrap()).unwrap();
        let (mut out_e, mut in_e) = (0.0, 0.0);
        for (idx, z) in back.coeffs().iter().enumerate() {
            if outside(idx, k) {
                out_e += z.norm_sqr();
            } else {
                in_e += z.norm_sqr();
            }
        }
        tfs_field_leak = tfs_field_leak.max(out_e / in_e);
    }
    let a = tfs_leak == 0.0 && tfs_field_leak < 1e-24;

    let sp32 = Spectral::<f32>::new(grid);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let gn = mean_spectrum(|| shell_spectrum(&gaussian_noise(&sp32, &mut rng), false).unwrap().bins);
    let shells: Vec<f64> = (3..=10).map(|b| b as f64).collect();
    let gn_slope = loglog_slope(&shells, &gn[3..=10]);
    let b = (gn_slope - 2.0).abs() <= 0.3;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let at_20: Vec<f64> = [0.001, 0.0025, 0.005, 0.01]
        .iter()
        .map(|&nu| {
            mean_spectrum(|| shell_spectrum(&diffused_noise(&sp, nu, &mut rng).unwrap(), false).unwrap().bins)[20]
        })
        .collect();
    let c = at_20.windows(2).all(|w| w[0] > w[1]);

    let counts = shell_counts(&grid);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut de_worst = 0.0f64;
    for alpha in [-5.0, -4.2, -3.0, -2.0] {
        let mean =
            mean_spectrum(|| shell_spectrum(&decayed_energy(&sp32, alpha, &mut rng).unwrap(), false).unwrap().bins);
        let xs: Vec<f64> = (2..=12).map(|b| b as f64).collect();
        let amp: Vec<f64> = (2..=12).map(|b| mean[b] / counts[b]).collect();
        de_worst = de_worst.max((loglog_slope(&xs, &amp) - alpha).abs());
    }
    let d = de_worst <= 0.3;

    let mut e = true;
    for seed in 0..SAMPLES as u64 {
        let k = 3 + (seed as usize) % 7;
        let src = truncated_fourier_spectrum(&sp, k, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let pois = poisson_from_tfs_spectrum(&sp, k, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        e &= pois.coeffs()[0].norm() == 0.0;
        e &= src.coeffs().iter().zip(pois.coeffs()).skip(1).all(|(p, q)| (p.norm() == 0.0) == (q.norm() == 0.0));
    }
    ensure(
        a && b && c && d && e,
        format!(
            "TFS leak {tfs_leak:e}/{tfs_field_leak:.1e}, GN slope {gn_slope:.3}, DN@20 ordered {c}, \
             DE worst exponent error {de_worst:.3}, P-TFS support {e}"
        ),
    )
}

// ---- guardrails ----

fn small_config(equations: &[EquationKind], seed: u64) -> ServerConfig {
    ServerConfig { equations: equations.to_vec(), resolutions: vec![16], seed, warmup_rounds: 0, ..Default::default() }
}

fn same_sequence(a: &[FrameSample], b: &[FrameSample]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.bit_eq(y))
}

fn guardrails() -> Check {
    let cfg = small_config(&[EquationKind::FisherKpp], 5);
    let mut clean = GenerationServer::new(cfg.clone()).unwrap();
    let mut baseline = Vec::new();
    clean.run_round(&mut baseline).unwrap();

    let mut faulty = GenerationServer::new(cfg).unwrap();
    faulty.set_fault_hook(Some(Box::new(|s: &FaultSite| s.instance == 0 && s.run == 1 && s.step == 25)));
    let mut frames = Vec::new();
    let outcomes = faulty.run_round(&mut frames).map_err(|e| e.to_string())?;
    let discarded = outcomes.iter().filter(|o| matches!(o, TrajectoryOutcome::Discarded { .. })).count();
    let leaked = frames.iter().filter(|f| baseline.iter().any(|b| b.meta.run == 1 && b.bit_eq(f))).count();
    let continued = frames.len() == 90 && same_sequence(&frames[..30], &baseline[..30]);
    let first = discarded == 1 && faulty.error_count() == 1 && !faulty.is_halted() && leaked == 0 && continued;

    let mut server = GenerationServer::new(small_config(&[EquationKind::Diffusion], 6)).unwrap();
    server.set_fault_hook(Some(Box::new(|s: &FaultSite| s.step == 1)));
    let mut sink = Vec::new();
    let mut tolerated = 0;
    for _ in 0..10 {
        if matches!(server.run_next_trajectory(&mut sink), Ok(TrajectoryOutcome::Discarded { .. })) {
            tolerated += 1;
        }
    }
    let halted = matches!(server.run_next_trajectory(&mut sink), Err(GenerationError::Halted(11)));
    ensure(
        first && tolerated == 10 && halted && server.is_halted() && sink.is_empty(),
        format!(
            "one fault: {discarded} discarded, {leaked} leaked frames, server continued {continued}; \
             10 tolerated {}, halt on 11th {halted}",
            tolerated == 10
        ),
    )
}

// ---- determinism and checkpointing ----

fn determinism_and_checkpointing() -> Check {
    let kinds = [EquationKind::FisherKpp, EquationKind::SwiftHohenberg, EquationKind::Burgers];
    let run = |seed| {
        let mut server =
            GenerationServer::new(ServerConfig { warmup_rounds: 3, ..small_config(&kinds, seed) }).unwrap();
        let mut frames = Vec::new();
        server.run_round(&mut frames).unwrap();
        server.run_round(&mut frames).unwrap();
        frames
    };
    let (a, b, c) = (run(7), run(7), run(8));
    let reproducible = !a.is_empty() && same_sequence(&a, &b) && !same_sequence(&a, &c);

    let cfg = ServerConfig {
        warmup_rounds: 4,
        ..small_config(&[EquationKind::Diffusion, EquationKind::FisherKpp, EquationKind::KdV], 21)
    };
    let mut reference = GenerationServer::new(cfg.clone()).unwrap();
    let mut expected = Vec::new();
    while expected.len() < 400 {
        reference.run_next_trajectory(&mut expected).unwrap();
    }
    let mut first = GenerationServer::new(cfg).unwrap();
    let mut got = Vec::new();
    for _ in 0..5 {
        first.run_next_trajectory(&mut got).unwrap();
    }
    let bytes = first.checkpoint().map_err(|e| e.to_string())?;
    let state = decode_checkpoint(&bytes).map_err(|e| e.to_string())?;
    let mid_round = state.active.is_some() || state.position > 0;
    drop(first);
    let mut resumed = GenerationServer::restore(&bytes).map_err(|e| e.to_string())?;
    let from = got.len();
    while got.len() < 400 {
        resumed.run_next_trajectory(&mut got).unwrap();
    }
    let after = got.len() - from;
    let identical = same_sequence(&got[..400], &expected[..400]);
    ensure(
        reproducible && mid_round && after >= 100 && identical,
        format!(
            "seeded reruns bit-identical {reproducible} ({} frames); resume mid-round {mid_round}, \
             {after} frames after restore identical {identical}",
            a.len()
        ),
    )
}

// ---- protocol ----

fn random_sample(rng: &mut ChaCha8Rng) -> FrameSample {
    let equation = EquationKind::ALL[rng.random_range(0..EquationKind::ALL.len())];
    let initializer = InitializerConfig::ALL[rng.random_range(0..InitializerConfig::ALL.len())];
    let dims = [0, 1, 2].map(|_| rng.random_range(1..=24u16));
    let len = dims.iter().map(|&d| d as usize).product();
    FrameSample {
        meta: FrameMetadata {
            equation,
            initializer,
            resolution: rng.random(),
            run: rng.random(),
            frame: rng.random(),
            channel: rng.random(),
            canonical: rng.random(),
            normalized: rng.random(),
            pde_params: (0..equation.param_count()).map(|_| rng.random_range(-1e3..1e3)).collect(),
            ic_params: (0..initializer.param_count()).map(|_| rng.random_range(-1e3..1e3)).collect(),
        },
        dims,
        payload: (0..len).map(|_| f32::from_bits(rng.random())).collect(),
    }
}

struct ReferenceCache {
    capacity: usize,
    entries: Vec<(u64, u64)>,
    next_seq: u64,
}

impl ReferenceCache {
    fn insert(&mut self) -> Option<(u64, u64)> {
        let mut evicted = None;
        if self.entries.len() == self.capacity {
            let max = self.entries.iter().map(|e| e.1).max().unwrap();
            let i = self.entries.iter().enumerate().filter(|(_, e)| e.1 == max).min_by_key(|(_, e)| e.0).unwrap().0;
            evicted = Some(self.entries.remove(i));
        }
        self.entries.push((self.next_seq, 0));
        self.next_seq += 1;
        evicted
    }
}

fn mfu_model(seed: u64, capacity: usize, ops: usize) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cache = MfuCache::<u64>::new(capacity).unwrap();
    let mut reference = ReferenceCache { capacity, entries: Vec::new(), next_seq: 0 };
    for _ in 0..ops {
        if rng.random_bool(0.45) {
            let (seq, evicted) = cache.insert(reference.next_seq);
            if reference.insert() != evicted.map(|e| (e.seq, e.uses)) || seq != reference.next_seq - 1 {
                return false;
            }
        } else {
            let size = cache.len();
            let batch = rng.random_range(0..=size + 1);
            match cache.draw(batch, &mut rng) {
                Ok(drawn) => {
                    for (seq, value) in drawn {
                        match reference.entries.iter_mut().find(|e| e.0 == seq) {
                            Some(e) if *value == seq => e.1 += 1,
                            _ => return false,
                        }
                    }
                }
                Err(CacheError::Empty) if size == 0 => {}
                Err(CacheError::BatchTooLarge { .. }) if batch > size => {}
                Err(_) => return false,
            }
        }
        if cache.len() != reference.entries.len() {
            return false;
        }
    }
    reference.entries.iter().all(|&(seq, uses)| cache.uses(seq) == Some(uses))
}

fn protocol() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut codec_ok = 0;
    for _ in 0..10_000 {
        let s = random_sample(&mut rng);
        let bytes = encode(&s).map_err(|e| e.to_string())?;
        if decode(&bytes).is_ok_and(|back| back.bit_eq(&s)) {
            codec_ok += 1;
        }
    }

    let ops = 30_000;
    let runs = [(1, 1), (2, 7), (3, 64), (4, 500)];
    let mfu_ok = runs.iter().all(|&(seed, cap)| mfu_model(seed, cap, ops));

    let stream: Vec<u8> = (0..40).flat_map(|_| encode(&random_sample(&mut rng)).unwrap()).collect();
    let consumer = Consumer::from_reader(
        std::io::Cursor::new(stream),
        ConsumerOptions { staging_capacity: 16, cache_capacity: 40 },
    )
    .map_err(|e| e.to_string())?;
    let cache = consumer.cache().clone();
    consumer.close().1.map_err(|e| e.to_string())?;
    let mut epoch = EpochCounter::default();
    let mut fired_at = Vec::new();
    for i in 1..=3300u64 {
        let n = cache.draw(8, &mut rng).map_err(|e| e.to_string())?.len() as u64;
        if epoch.record(n) > 0 {
            fired_at.push(i * 8);
        }
    }
    let epoch_ok = fired_at == [13_200, 26_400];

    let (producer, queue) = transmission_queue(8).map_err(|e| e.to_string())?;
    let p = producer.clone();
    let mut samples: Vec<FrameSample> = (0..20).map(|_| random_sample(&mut rng)).collect();
    for (i, s) in samples.iter_mut().enumerate() {
        s.meta.frame = i as u16;
    }
    let to_push = samples.clone();
    let worker = thread::spawn(move || to_push.iter().all(|s| p.push(s).is_ok()));
    let deadline = Instant::now() + Duration::from_secs(10);
    while producer.stats().blocked == 0 && Instant::now() < deadline {
        thread::sleep(Duration::from_millis(1));
    }
    thread::sleep(Duration::from_millis(20));
    let blocked_at = producer.len();
    let parked = producer.stats().blocked > 0 && !worker.is_finished();
    let mut order = Vec::new();
    while order.len() < 20 {
        let m = queue.pop().ok_or("queue closed early")?;
        order.push(decode_from(&mut &m[..]).map_err(|e| e.to_string())?.unwrap().meta.frame);
    }
    let pushed_all = worker.join().unwrap_or(false);
    let backpressure = parked && blocked_at == 8 && pushed_all && order == (0..20).collect::<Vec<u16>>();

    ensure(
        codec_ok == 10_000 && mfu_ok && epoch_ok && backpressure,
        format!(
            "codec {codec_ok}/10000 identical, MFU model {} ops matched {mfu_ok}, epoch boundaries {fired_at:?}, \
             producer parked at {blocked_at}/8 {backpressure}",
            ops * runs.len()
        ),
    )
}

// ---- metrics ----

fn naive_dft(grid: &Grid3, data: &[f64]) -> Vec<Complex64> {
    let n = grid.n();
    let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (k, o) in out.iter_mut().enumerate() {
        let (kx, ky, kz) = grid.coords(k);
        for (j, &v) in data.iter().enumerate() {
            let (x, y, z) = grid.coords(j);
            let phase = -2.0 * PI * ((kx * x + ky * y + kz * z) % n) as f64 / n as f64;
            *o += v * Complex64::from_polar(1.0, phase);
        }
    }
    out
}

fn naive_idft(grid: &Grid3, coeffs: &[Complex64]) -> Vec<f64> {
    let n = grid.n();
    let scale = 1.0 / grid.len() as f64;
    (0..grid.len())
        .map(|j| {
            let (x, y, z) = grid.coords(j);
            let mut s = Complex64::new(0.0, 0.0);
            for (k, c) in coeffs.iter().enumerate() {
                let (kx, ky, kz) = grid.coords(k);
                let phase = 2.0 * PI * ((kx * x + ky * y + kz * z) % n) as f64 / n as f64;
                s += c * Complex64::from_polar(1.0, phase);
            }
            s.re * scale
        })
        .collect()
}

fn naive_derivative(grid: &Grid3, data: &[f64], axis: usize) -> Vec<f64> {
    let n = grid.n() as i64;
    let d: Vec<Complex64> = naive_dft(grid, data)
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let (x, y, z) = grid.coords(k);
            let m = grid.mode([x, y, z][axis]);
            let m = if m == -n / 2 { 0 } else { m };
            v * Complex64::new(0.0, 2.0 * PI * m as f64 / grid.extent())
        })
        .collect();
    naive_idft(grid, &d)
}

fn naive_enstrophy(u: &Field<f64>) -> Vec<f64> {
    let g = *u.grid();
    let d = |c: usize, a: usize| naive_derivative(&g, u.channel(c), a);
    let comps = [
        d(2, 1).iter().zip(d(1, 2)).map(|(p, q)| p - q).collect::<Vec<_>>(),
        d(0, 2).iter().zip(d(2, 0)).map(|(p, q)| p - q).collect(),
        d(1, 0).iter().zip(d(0, 1)).map(|(p, q)| p - q).collect(),
    ];
    let n = g.n();
    let w: Vec<f64> = (0..n).map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / (n - 1) as f64).cos())).collect();
    let mut s = vec![0.0; ((3.0f64).sqrt() * (n / 2) as f64).ceil() as usize];
    for comp in comps {
        let windowed: Vec<f64> = comp
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let (x, y, z) = g.coords(j);
                v * w[x] * w[y] * w[z]
            })
            .collect();
        for (k, c) in naive_dft(&g, &windowed).iter().enumerate() {
            let r = mode_radius(&g, k);
            if r > 0.0 {
                s[r.ceil() as usize - 1] += 0.5 * c.norm_sqr();
            }
        }
    }
    s
}

fn naive_nrmse_es(pred: &[Field<f64>], reference: &[Field<f64>]) -> f64 {
    let avg = |fs: &[Field<f64>]| {
        let mut acc = naive_enstrophy(&fs[0]);
        for f in &fs[1..] {
            for (a, v) in acc.iter_mut().zip(naive_enstrophy(f)) {
                *a += v;
            }
        }
        acc.iter().map(|v| v / fs.len() as f64).collect::<Vec<_>>()
    };
    let (sp, sr) = (avg(pred), avg(reference));
    let k = sp.len() as f64;
    let num = sp.iter().zip(&sr).map(|(p, r)| (p - r).powi(2)).sum::<f64>() / k;
    let den = sr.iter().map(|r| r * r).sum::<f64>() / k;
    (num / den).sqrt()
}

fn metrics() -> Check {
    let g = Grid3::new(16, 1.0).unwrap();
    let refs: Vec<Field<f64>> = (0..3).map(|s| random_field(g, 3, s)).collect();
    let same = nrmse_es(&refs, &refs).map_err(|e| e.to_string())?;
    let doubled: Vec<Field<f64>> = refs.iter().map(|f| f.map(|v| 2.0 * v)).collect();
    let double = nrmse_es(&doubled, &refs).map_err(|e| e.to_string())?;

    let g8 = Grid3::new(8, 1.0).unwrap();
    let r8: Vec<Field<f64>> = (0..2).map(|s| random_field(g8, 3, 10 + s)).collect();
    let p8: Vec<Field<f64>> = r8
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let eps = random_field(g8, 3, 50 + i as u64);
            Field::from_vec(g8, 3, f.data().iter().zip(eps.data()).map(|(a, e)| a + 0.05 * e).collect()).unwrap()
        })
        .collect();
    let fast = nrmse_es(&p8, &r8).map_err(|e| e.to_string())?;
    let dual = (fast - naive_nrmse_es(&p8, &r8)).abs();
    let spec_fast = enstrophy_spectrum(&vorticity(&r8[0]).unwrap(), true).unwrap().s;
    let spec_dual = spec_fast
        .iter()
        .zip(naive_enstrophy(&r8[0]))
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max);

    let l = 2.0;
    let g32 = Grid3::new(32, l).unwrap();
    let sp = Spectral::<f64>::new(g32);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let terms: Vec<([f64; 3], f64, f64)> = (0..12)
        .map(|_| {
            (
                [0, 1, 2].map(|_| rng.random_range(-5..=5) as f64),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.0..6.0),
            )
        })
        .collect();
    let phi = Field::<f64>::from_fn(g32, 1, |_, x, y, z| {
        terms.iter().map(|(m, a, p)| a * (2.0 * PI * (m[0] * x + m[1] * y + m[2] * z) / l + p).sin()).sum()
    });
    let phi_hat = sp.forward(&phi).unwrap();
    let grads: Vec<Field<f64>> = (0..3).map(|a| sp.inverse(&sp.gradient(&phi_hat, a).unwrap()).unwrap()).collect();
    let u = Field::stack(grads).unwrap().cast::<f32>();
    let curl = vorticity(&u).unwrap().max_abs().as_f64();

    ensure(
        same == 0.0 && (double - 3.0).abs() < 1e-12 && dual < 1e-6 && spec_dual < 1e-9 && curl < 1e-4,
        format!(
            "nrmse_es(x,x) {same}, nrmse_es(2x,x) {double:.12}, dual-implementation gap {dual:.1e}, \
             curl of gradient {curl:.1e}"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("linear exactness", linear_exactness),
        ("convergence orders", convergence_orders),
        ("ODE reductions", ode_reductions),
        ("KS envelope", ks_envelope),
        ("frame accounting", frame_accounting),
        ("initializer spectra", initializer_spectra),
        ("guardrails", guardrails),
        ("determinism and checkpointing", determinism_and_checkpointing),
        ("protocol", protocol),
        ("metrics", metrics),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
