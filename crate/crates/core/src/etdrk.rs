//! Exponential time differencing Runge-Kutta steppers for diagonal linear symbols.
//!
//! The stiff linear part `L` is integrated exactly through `exp(L*dt)`; the
//! nonlinearity is staged. Coefficients are computed in double precision and
//! cast to the working precision. Near `L*dt = 0` the phi-functions switch to
//! a truncated Taylor series to avoid the 0/0 cancellation.

use num_complex::{Complex, Complex64};
use thiserror::Error;

use crate::real::Real;
use crate::spectral::{Field, Grid3, Spectral, SpectralField};

/// Below this `|L*dt|` the phi-functions use their Taylor series.
pub const SERIES_SWITCH: f64 = 1e-2;
const SERIES_TERMS: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("linear symbol has a non-finite entry at mode {0}")]
    NonFiniteSymbol(usize),
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("state length {state} is not a multiple of the symbol length {symbol}")]
    ShapeMismatch { state: usize, symbol: usize },
    #[error("state became non-finite at step {step}")]
    NonFinite { step: usize },
    #[error("save interval must be at least 1")]
    InvalidSaveInterval,
}

/// Diagonal linear operator in Fourier space, one complex value per mode.
///
/// The same symbol is applied to every channel of a state.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSymbol {
    values: Vec<Complex64>,
}

impl LinearSymbol {
    pub fn new(values: Vec<Complex64>) -> Result<Self, IntegrateError> {
        if let Some(i) = values.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(IntegrateError::NonFiniteSymbol(i));
        }
        Ok(Self { values })
    }

    pub fn from_real(values: Vec<f64>) -> Result<Self, IntegrateError> {
        Self::new(values.into_iter().map(|v| Complex64::new(v, 0.0)).collect())
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `exp(z) - 1` without cancellation for small real part.
fn exp_m1(z: Complex64) -> Complex64 {
    let (s, c) = z.im.sin_cos();
    let half = (0.5 * z.im).sin();
    Complex64::new(z.re.exp_m1() * c - 2.0 * half * half, z.re.exp() * s)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// `[phi_1(z), phi_2(z), phi_3(z)]` with `phi_l(z) = sum_j z^j / (j+l)!`.
pub fn phi_functions(z: Complex64) -> [Complex64; 3] {
    if z.norm() < SERIES_SWITCH {
        let mut out = [Complex64::new(0.0, 0.0); 3];
        for (l, slot) in out.iter_mut().enumerate() {
            let mut zj = Complex64::new(1.0, 0.0);
            for j in 0..SERIES_TERMS {
                *slot += zj / factorial(j + l + 1);
                zj *= z;
            }
        }
        out
    } else {
        let em1 = exp_m1(z);
        let phi1 = em1 / z;
        let phi2 = (em1 - z) / (z * z);
        let phi3 = (em1 - z - 0.5 * z * z) / (z * z * z);
        [phi1, phi2, phi3]
    }
}

fn cast<T: Real>(z: Complex64) -> Complex<T> {
    Complex::new(T::of(z.re), T::of(z.im))
}

fn check_dt(dt: f64) -> Result<(), IntegrateError> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(IntegrateError::InvalidStep(dt))
    }
}

/// Second-order coefficient tables.
#[derive(Debug, Clone)]
pub struct Etdrk2Tables<T> {
    /// `exp(L dt)`
    pub e: Vec<Complex<T>>,
    /// `(exp(L dt) - 1) / L`
    pub phi1: Vec<Complex<T>>,
    /// `(exp(L dt) - 1 - L dt) / (L^2 dt)`
    pub phi2: Vec<Complex<T>>,
    pub dt: f64,
}

pub fn precompute_etdrk2<T: Real>(symbol: &LinearSymbol, dt: f64) -> Result<Etdrk2Tables<T>, IntegrateError> {
    check_dt(dt)?;
    let n = symbol.len();
    let (mut e, mut phi1, mut phi2) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for &lambda in symbol.values() {
        let z = lambda * dt;
        let [p1, p2, _] = phi_functions(z);
        e.push(cast(z.exp()));
        phi1.push(cast(p1 * dt));
        phi2.push(cast(p2 * dt));
    }
    Ok(Etdrk2Tables { e, phi1, phi2, dt })
}

/// Fourth-order Cox-Matthews coefficient tables.
#[derive(Debug, Clone)]
pub struct Etdrk4Tables<T> {
    /// `exp(L dt)`
    pub e: Vec<Complex<T>>,
    /// `exp(L dt / 2)`
    pub e_half: Vec<Complex<T>>,
    /// `(exp(L dt / 2) - 1) / L`
    pub half_phi1: Vec<Complex<T>>,
    /// weight of `N(u)` in the final combination
    pub alpha: Vec<Complex<T>>,
    /// weight of `N(a) + N(b)` (already doubled)
    pub beta: Vec<Complex<T>>,
    /// weight of `N(c)`
    pub gamma: Vec<Complex<T>>,
    pub dt: f64,
}

pub fn precompute_etdrk4<T: Real>(symbol: &LinearSymbol, dt: f64) -> Result<Etdrk4Tables<T>, IntegrateError> {
    check_dt(dt)?;
    let n = symbol.len();
    let mut t = Etdrk4Tables {
        e: Vec::with_capacity(n),
        e_half: Vec::with_capacity(n),
        half_phi1: Vec::with_capacity(n),
        alpha: Vec::with_capacity(n),
        beta: Vec::with_capacity(n),
        gamma: Vec::with_capacity(n),
        dt,
    };
    for &lambda in symbol.values() {
        let z = lambda * dt;
        let [p1, p2, p3] = phi_functions(z);
        let [h1, _, _] = phi_functions(z * 0.5);
        t.e.push(cast(z.exp()));
        t.e_half.push(cast((z * 0.5).exp()));
        t.half_phi1.push(cast(h1 * (0.5 * dt)));
        t.alpha.push(cast((p1 - 3.0 * p2 + 4.0 * p3) * dt));
        t.beta.push(cast((p2 - 2.0 * p3) * (2.0 * dt)));
        t.gamma.push(cast((4.0 * p3 - p2) * dt));
    }
    Ok(t)
}

/// Nonlinear right-hand side evaluated on flat coefficient buffers.
pub type SliceNonlinearity<'a, T> = dyn FnMut(&[Complex<T>]) -> Vec<Complex<T>> + 'a;

/// One exponential integrator step.
pub trait Stepper<T: Real>: Send + Sync {
    fn dt(&self) -> f64;

    /// Number of modes per channel the tables were built for.
    fn modes(&self) -> usize;

    /// Advances a flat `[channel][mode]` buffer by one step.
    fn step_slice(&self, state: &[Complex<T>], nonlin: &mut SliceNonlinearity<'_, T>) -> Vec<Complex<T>>;

    fn step(
        &self,
        state: &SpectralField<T>,
        nonlin: &mut dyn FnMut(&SpectralField<T>) -> SpectralField<T>,
    ) -> SpectralField<T> {
        let grid = *state.grid();
        let channels = state.channels();
        let mut wrapped = |s: &[Complex<T>]| {
            let field = SpectralField::from_vec(grid, channels, s.to_vec()).expect("stepper keeps shape");
            nonlin(&field).into_vec()
        };
        let next = self.step_slice(state.coeffs(), &mut wrapped);
        SpectralField::from_vec(grid, channels, next).expect("stepper keeps shape")
    }
}

impl<T: Real> Stepper<T> for Etdrk2Tables<T> {
    fn dt(&self) -> f64 {
        self.dt
    }

    fn modes(&self) -> usize {
        self.e.len()
    }

    fn step_slice(&self, u: &[Complex<T>], nonlin: &mut SliceNonlinearity<'_, T>) -> Vec<Complex<T>> {
        let m = self.e.len();
        let nu = nonlin(u);
        let star: Vec<Complex<T>> =
            u.iter().zip(&nu).enumerate().map(|(i, (&ui, &ni))| self.e[i % m] * ui + self.phi1[i % m] * ni).collect();
        let nstar = nonlin(&star);
        star.iter()
            .zip(nstar.iter().zip(&nu))
            .enumerate()
            .map(|(i, (&s, (&ns, &n0)))| s + self.phi2[i % m] * (ns - n0))
            .collect()
    }
}

impl<T: Real> Stepper<T> for Etdrk4Tables<T> {
    fn dt(&self) -> f64 {
        self.dt
    }

    fn modes(&self) -> usize {
        self.e.len()
    }

    fn step_slice(&self, u: &[Complex<T>], nonlin: &mut SliceNonlinearity<'_, T>) -> Vec<Complex<T>> {
        let m = self.e.len();
        let two = T::of(2.0);
        let nu = nonlin(u);
        let a: Vec<Complex<T>> = u
            .iter()
            .zip(&nu)
            .enumerate()
            .map(|(i, (&x, &n))| self.e_half[i % m] * x + self.half_phi1[i % m] * n)
            .collect();
        let na = nonlin(&a);
        let b: Vec<Complex<T>> = u
            .iter()
            .zip(&na)
            .enumerate()
            .map(|(i, (&x, &n))| self.e_half[i % m] * x + self.half_phi1[i % m] * n)
            .collect();
        let nb = nonlin(&b);
        let c: Vec<Complex<T>> = a
            .iter()
            .zip(nb.iter().zip(&nu))
            .enumerate()
            .map(|(i, (&x, (&n_b, &n_u)))| self.e_half[i % m] * x + self.half_phi1[i % m] * (n_b * two - n_u))
            .collect();
        let nc = nonlin(&c);
        (0..u.len())
            .map(|i| {
                let j = i % m;
                self.e[j] * u[i] + self.alpha[j] * nu[i] + self.beta[j] * (na[i] + nb[i]) + self.gamma[j] * nc[i]
            })
            .collect()
    }
}

/// Which post-step states are kept: step `s` is saved iff `s > warmup` and
/// `(s - warmup) % every == 0`. The initial state is never saved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SaveSchedule {
    pub warmup: usize,
    pub every: usize,
}

impl SaveSchedule {
    pub fn every(every: usize) -> Self {
        Self { warmup: 0, every }
    }

    #[inline]
    pub fn saves(&self, step: usize) -> bool {
        step > self.warmup && (step - self.warmup) % self.every == 0
    }
}

/// Integrates `n_steps` in Fourier space and returns the saved real-space frames.
///
/// The state stays spectral between steps and is transformed back only for
/// saved frames.
pub fn integrate<T: Real>(
    spectral: &Spectral<T>,
    initial: &Field<T>,
    stepper: &dyn Stepper<T>,
    nonlin: &mut dyn FnMut(&SpectralField<T>) -> SpectralField<T>,
    n_steps: usize,
    schedule: SaveSchedule,
) -> Result<Vec<Field<T>>, IntegrateError> {
    if schedule.every == 0 {
        return Err(IntegrateError::InvalidSaveInterval);
    }
    if stepper.modes() != spectral.grid().len() {
        return Err(IntegrateError::ShapeMismatch { state: spectral.grid().len(), symbol: stepper.modes() });
    }
    let mut state = spectral.forward(initial).map_err(|_| IntegrateError::NonFinite { step: 0 })?;
    let mut frames = Vec::new();
    for step in 1..=n_steps {
        state = stepper.step(&state, nonlin);
        if !state.is_finite() {
            return Err(IntegrateError::NonFinite { step });
        }
        if schedule.saves(step) {
            frames.push(spectral.inverse_real(&state));
        }
    }
    Ok(frames)
}

/// Applies the exact linear propagator `exp(L t)` to a field, per mode.
pub fn propagate_linear<T: Real>(
    spectral: &Spectral<T>,
    field: &Field<T>,
    symbol: &LinearSymbol,
    t: f64,
) -> Result<Field<T>, crate::spectral::SpectralError> {
    let mut spec = spectral.forward(field)?;
    let m = symbol.len();
    for (i, z) in spec.coeffs_mut().iter_mut().enumerate() {
        *z = *z * cast::<T>((symbol.values()[i % m] * t).exp());
    }
    spectral.inverse(&spec)
}

/// A zero nonlinearity, for purely linear systems.
pub fn zero_nonlinearity<T: Real>(grid: Grid3) -> impl FnMut(&SpectralField<T>) -> SpectralField<T> {
    move |s: &SpectralField<T>| SpectralField::zeros(grid, s.channels())
}
