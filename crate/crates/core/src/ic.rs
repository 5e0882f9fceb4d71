//! Randomized initial conditions with distinct spectral shapes.
//!
//! All generators start from white noise and reshape its spectrum:
//!
//! * GN: pixel-wise standard normal noise.
//! * TFS: keep modes with `|m_j| <= k_limit` on every axis.
//! * DN: scale by `exp(-nu |k|^2)` (one exact unit step of diffusion).
//! * DE: unit-modulus noise phases with amplitude `|k|^alpha`, `alpha` in `[-5, -2]`.
//! * P-TFS: a TFS source divided by `|k|^2` (periodic Poisson solve).
//!
//! `k` is the physical wavenumber at the grid's extent. Masks use absolute
//! mode indices so every output is an exactly real field.

use std::fmt;

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pde::EquationKind;
use crate::real::Real;
use crate::spectral::{Field, Spectral, SpectralField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IcError {
    #[error("k_limit {k_limit} outside [1, {max}] for n={n}")]
    KLimit { k_limit: usize, max: usize, n: usize },
    #[error("diffusivity must be positive, got {0}")]
    Diffusivity(f64),
    #[error("spectral exponent {0} outside [-5, -2]")]
    Exponent(f64),
    #[error("normalization bounds must satisfy c_min < c_max, got [{0}, {1}]")]
    Bounds(f64, f64),
    #[error("unknown initializer id {0}")]
    UnknownId(u8),
    #[error("{config} expects {expected} parameters, got {actual}")]
    ParamCount { config: InitializerConfig, expected: usize, actual: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InitializerKind {
    Gn,
    Tfs,
    Dn,
    De,
    Ptfs,
}

/// Named hyperparameter configurations; the discriminant is the wire id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InitializerConfig {
    Gn,
    TfsA,
    TfsB,
    TfsC,
    TfsD,
    DnA,
    DnB,
    DnC,
    DeA,
    DeB,
    PtfsA,
    PtfsB,
    PtfsC,
    PtfsD,
}

impl InitializerConfig {
    pub const ALL: [InitializerConfig; 14] = [
        Self::Gn,
        Self::TfsA,
        Self::TfsB,
        Self::TfsC,
        Self::TfsD,
        Self::DnA,
        Self::DnB,
        Self::DnC,
        Self::DeA,
        Self::DeB,
        Self::PtfsA,
        Self::PtfsB,
        Self::PtfsC,
        Self::PtfsD,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Result<Self, IcError> {
        Self::ALL.get(id as usize).copied().ok_or(IcError::UnknownId(id))
    }

    pub fn kind(self) -> InitializerKind {
        use InitializerConfig::*;
        match self {
            Gn => InitializerKind::Gn,
            TfsA | TfsB | TfsC | TfsD => InitializerKind::Tfs,
            DnA | DnB | DnC => InitializerKind::Dn,
            DeA | DeB => InitializerKind::De,
            PtfsA | PtfsB | PtfsC | PtfsD => InitializerKind::Ptfs,
        }
    }

    pub fn name(self) -> &'static str {
        use InitializerConfig::*;
        match self {
            Gn => "GN",
            TfsA => "TFS-A",
            TfsB => "TFS-B",
            TfsC => "TFS-C",
            TfsD => "TFS-D",
            DnA => "DN-A",
            DnB => "DN-B",
            DnC => "DN-C",
            DeA => "DE-A",
            DeB => "DE-B",
            PtfsA => "P-TFS-A",
            PtfsB => "P-TFS-B",
            PtfsC => "P-TFS-C",
            PtfsD => "P-TFS-D",
        }
    }

    /// Inclusive `k_limit` support for the TFS family (P-TFS inherits its source's).
    pub fn k_limit_range(self) -> Option<(usize, usize)> {
        use InitializerConfig::*;
        match self {
            TfsA | PtfsA => Some((3, 5)),
            TfsB | TfsD | PtfsB | PtfsD => Some((3, 9)),
            TfsC | PtfsC => Some((5, 9)),
            _ => None,
        }
    }

    pub fn nu_range(self) -> Option<(f64, f64)> {
        use InitializerConfig::*;
        match self {
            DnA => Some((0.001, 0.01)),
            DnB | DnC => Some((0.001, 0.005)),
            _ => None,
        }
    }

    /// `None` for GN, which is not normalized.
    pub fn bounds_mode(self) -> Option<BoundsMode> {
        use InitializerConfig::*;
        match self {
            Gn => None,
            TfsC | PtfsC => Some(BoundsMode::Fixed(0.0, 1.0)),
            TfsD | DnC | DeB | PtfsD => Some(BoundsMode::Random),
            _ => Some(BoundsMode::Fixed(-1.0, 1.0)),
        }
    }

    /// Entries in [`InitializerSpec::to_list`].
    pub fn param_count(self) -> usize {
        if self == Self::Gn {
            0
        } else {
            3
        }
    }
}

impl fmt::Display for InitializerConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundsMode {
    Fixed(f64, f64),
    /// `c_min ~ U(-1, -0.1)`, `c_max ~ U(0.1, 1)`
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationBounds {
    pub c_min: f64,
    pub c_max: f64,
}

impl NormalizationBounds {
    pub fn new(c_min: f64, c_max: f64) -> Result<Self, IcError> {
        if !(c_min < c_max) {
            return Err(IcError::Bounds(c_min, c_max));
        }
        Ok(Self { c_min, c_max })
    }

    pub fn sample<R: Rng + ?Sized>(mode: BoundsMode, rng: &mut R) -> Self {
        match mode {
            BoundsMode::Fixed(c_min, c_max) => Self { c_min, c_max },
            BoundsMode::Random => Self { c_min: rng.random_range(-1.0..-0.1), c_max: rng.random_range(0.1..1.0) },
        }
    }
}

/// A configuration with its sampled hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitializerSpec {
    pub config: InitializerConfig,
    pub k_limit: Option<usize>,
    pub nu: Option<f64>,
    pub alpha: Option<f64>,
    pub bounds: Option<NormalizationBounds>,
}

impl InitializerSpec {
    pub fn gaussian() -> Self {
        Self { config: InitializerConfig::Gn, k_limit: None, nu: None, alpha: None, bounds: None }
    }

    /// Draws hyperparameters and normalization bounds for `config`.
    pub fn sample<R: Rng + ?Sized>(config: InitializerConfig, rng: &mut R) -> Self {
        let k_limit = config.k_limit_range().map(|(lo, hi)| rng.random_range(lo..=hi));
        let nu = config.nu_range().map(|(lo, hi)| rng.random_range(lo..=hi));
        let alpha = (config.kind() == InitializerKind::De).then(|| rng.random_range(-5.0..=-2.0));
        let bounds = config.bounds_mode().map(|m| NormalizationBounds::sample(m, rng));
        Self { config, k_limit, nu, alpha, bounds }
    }

    /// `[hyperparameter, c_min, c_max]`, or empty for GN.
    pub fn to_list(&self) -> Vec<f64> {
        let Some(b) = self.bounds else { return Vec::new() };
        let hyper = match self.config.kind() {
            InitializerKind::Tfs | InitializerKind::Ptfs => self.k_limit.unwrap_or(0) as f64,
            InitializerKind::Dn => self.nu.unwrap_or(0.0),
            InitializerKind::De => self.alpha.unwrap_or(0.0),
            InitializerKind::Gn => 0.0,
        };
        vec![hyper, b.c_min, b.c_max]
    }

    pub fn from_list(config: InitializerConfig, list: &[f64]) -> Result<Self, IcError> {
        if list.len() != config.param_count() {
            return Err(IcError::ParamCount { config, expected: config.param_count(), actual: list.len() });
        }
        if config == InitializerConfig::Gn {
            return Ok(Self::gaussian());
        }
        let mut spec = Self { config, k_limit: None, nu: None, alpha: None, bounds: None };
        match config.kind() {
            InitializerKind::Tfs | InitializerKind::Ptfs => spec.k_limit = Some(list[0] as usize),
            InitializerKind::Dn => spec.nu = Some(list[0]),
            InitializerKind::De => spec.alpha = Some(list[0]),
            InitializerKind::Gn => {}
        }
        spec.bounds = Some(NormalizationBounds::new(list[1], list[2])?);
        Ok(spec)
    }

    /// Generates a single-channel initial state, normalized when the config carries bounds.
    ///
    /// `k_limit` is capped at `n/2 - 1` on grids too coarse for the tabulated range.
    pub fn generate<T: Real, R: Rng + ?Sized>(&self, spectral: &Spectral<T>, rng: &mut R) -> Result<Field<T>, IcError> {
        let cap = spectral.grid().n() / 2 - 1;
        let raw = match self.config.kind() {
            InitializerKind::Gn => gaussian_noise(spectral, rng),
            InitializerKind::Tfs => truncated_fourier(spectral, self.k_limit.unwrap_or(1).min(cap), rng)?,
            InitializerKind::Ptfs => poisson_from_tfs(spectral, self.k_limit.unwrap_or(1).min(cap), rng)?,
            InitializerKind::Dn => diffused_noise(spectral, self.nu.unwrap_or(0.0), rng)?,
            InitializerKind::De => decayed_energy(spectral, self.alpha.unwrap_or(-2.0), rng)?,
        };
        Ok(match self.bounds {
            Some(b) => normalize_ic(&raw, b),
            None => raw,
        })
    }
}

/// Configurations paired with each equation.
pub fn eligible_initializers(kind: EquationKind) -> &'static [InitializerConfig] {
    use EquationKind::*;
    use InitializerConfig::*;
    match kind {
        Diffusion | HyperDiffusion => &[TfsD, DnC, DeB, PtfsD],
        Burgers | KdV => &[TfsA, DnA, DeA, PtfsA],
        KuramotoSivashinsky => &[Gn],
        FisherKpp => &[TfsC],
        SwiftHohenberg => &[TfsB, DnB, DeA, PtfsB],
    }
}

/// Uniform choice among the eligible configurations, then hyperparameter sampling.
pub fn sample_initializer_for<R: Rng + ?Sized>(kind: EquationKind, rng: &mut R) -> InitializerSpec {
    let options = eligible_initializers(kind);
    let config = options[rng.random_range(0..options.len())];
    InitializerSpec::sample(config, rng)
}

/// i.i.d. standard normal voxels.
pub fn gaussian_noise<T: Real, R: Rng + ?Sized>(spectral: &Spectral<T>, rng: &mut R) -> Field<T> {
    let grid = *spectral.grid();
    let data = (0..grid.len()).map(|_| T::of(rng.sample::<f64, _>(StandardNormal))).collect();
    Field::from_vec(grid, 1, data).expect("shape")
}

fn noise_spectrum<T: Real, R: Rng + ?Sized>(spectral: &Spectral<T>, rng: &mut R) -> SpectralField<T> {
    spectral.forward_unchecked(&gaussian_noise(spectral, rng))
}

fn check_k_limit(spectral: &Spectral<impl Real>, k_limit: usize) -> Result<(), IcError> {
    let n = spectral.grid().n();
    let max = n / 2 - 1;
    if k_limit < 1 || k_limit > max {
        return Err(IcError::KLimit { k_limit, max, n });
    }
    Ok(())
}

/// TFS output in Fourier space; exactly zero outside `|m_j| <= k_limit`.
pub fn truncated_fourier_spectrum<T: Real, R: Rng + ?Sized>(
    spectral: &Spectral<T>,
    k_limit: usize,
    rng: &mut R,
) -> Result<SpectralField<T>, IcError> {
    check_k_limit(spectral, k_limit)?;
    let mut spec = noise_spectrum(spectral, rng);
    let grid = *spectral.grid();
    let zero = Complex::new(T::zero(), T::zero());
    let modes = spectral.wavenumbers().modes();
    let inside = |i: usize| modes[i].unsigned_abs() as usize <= k_limit;
    for (idx, z) in spec.coeffs_mut().iter_mut().enumerate() {
        let (x, y, w) = grid.coords(idx);
        if !(inside(x) && inside(y) && inside(w)) {
            *z = zero;
        }
    }
    Ok(spec)
}

pub fn truncated_fourier<T: Real, R: Rng + ?Sized>(
    spectral: &Spectral<T>,
    k_limit: usize,
    rng: &mut R,
) -> Result<Field<T>, IcError> {
    Ok(spectral.inverse_real(&truncated_fourier_spectrum(spectral, k_limit, rng)?))
}

pub fn diffused_noise_spectrum<T: Real, R: Rng + ?Sized>(
    spectral: &Spectral<T>,
    nu: f64,
    rng: &mut R,
) -> Result<SpectralField<T>, IcError> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(IcError::Diffusivity(nu));
    }
    let mut spec = noise_spectrum(spectral, rng);
    let k2 = spectral.wavenumbers().k2();
    for (z, &k2) in spec.coeffs_mut().iter_mut().zip(k2) {
        *z = *z * T::of((-nu * k2).exp());
    }
    Ok(spec)
}

pub fn diffused_noise<T: Real, R: Rng + ?Sized>(
    spectral: &Spectral<T>,
    nu: f64,
    rng: &mut R,
) -> Result<Field<T>, IcError> {
    Ok(spectral.inverse_real(&diffused_noise_spectrum(spectral, nu, rng)?))
}

/// Power-law field: exact amplitude `|k|^alpha`, phases taken from white noise.
pub fn decayed_energy_spectrum<T: Real, R: Rng + ?Sized>(
    spectral: &Spectral<T>,
    alpha: f64,
    rng: &mut R,
) -> Result<SpectralField<T>, IcError> {
    if !(-5.0..=-2.0).contains(&alpha) {
        return Err(IcError::Exponent(alpha));
    }
    let mut spec = noise_spectrum(spectral, rng);
    let k2 = spectral.wavenumbers().k2();
    for (z, &k2) in spec.coeffs_mut().iter_mut().zip(k2) {
        if k2 == 0.0 {
            *z = Complex::new(T::zero(), T::zero());
            continue;
        }
        let amp = k2.powf(0.5 * alpha);
        let norm = z.norm().as_f64();
        *z = if norm > 0.0 { *z * T::of(amp / norm) } else { Complex::new(T::of(amp), T::zero()) };
    }
    Ok(spec)
}

pub fn decayed_energy<T: Real, R: Rng + ?Sized>(
    spectral: &Spectral<T>,
    alpha: f64,
    rng: &mut R,
) -> Result<Field<T>, IcError> {
    Ok(spectral.inverse_real(&decayed_energy_spectrum(spectral, alpha, rng)?))
}

/// Solves `lap u = -f` for a TFS source `f`; zero mode set to 0.
pub fn poisson_from_tfs_spectrum<T: Real, R: Rng + ?Sized>(
    spectral: &Spectral<T>,
    k_limit: usize,
    rng: &mut R,
) -> Result<SpectralField<T>, IcError> {
    let mut spec = truncated_fourier_spectrum(spectral, k_limit, rng)?;
    let k2 = spectral.wavenumbers().k2();
    for (z, &k2) in spec.coeffs_mut().iter_mut().zip(k2) {
        *z = if k2 == 0.0 { Complex::new(T::zero(), T::zero()) } else { *z * T::of(1.0 / k2) };
    }
    Ok(spec)
}

pub fn poisson_from_tfs<T: Real, R: Rng + ?Sized>(
    spectral: &Spectral<T>,
    k_limit: usize,
    rng: &mut R,
) -> Result<Field<T>, IcError> {
    Ok(spectral.inverse_real(&poisson_from_tfs_spectrum(spectral, k_limit, rng)?))
}

/// Affine min-max map onto `[c_min, c_max]`; constant fields go to the midpoint.
pub fn normalize_ic<T: Real>(field: &Field<T>, bounds: NormalizationBounds) -> Field<T> {
    let (lo, hi) = field.min_max();
    let (lo, hi) = (lo.as_f64(), hi.as_f64());
    let (c_min, c_max) = (bounds.c_min, bounds.c_max);
    if !(hi > lo) {
        let mid = T::of(0.5 * (c_min + c_max));
        return field.map(|_| mid);
    }
    let scale = (c_max - c_min) / (hi - lo);
    field.map(|v| T::of((c_min + (v.as_f64() - lo) * scale).clamp(c_min, c_max)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Grid3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spectral(n: usize) -> Spectral<f64> {
        Spectral::new(Grid3::new(n, 1.0).unwrap())
    }

    #[test]
    fn ids_round_trip() {
        for c in InitializerConfig::ALL {
            assert_eq!(InitializerConfig::from_id(c.id()).unwrap(), c);
        }
        assert!(InitializerConfig::from_id(14).is_err());
    }

    #[test]
    fn gaussian_moments_and_determinism() {
        let sp = Spectral::<f32>::new(Grid3::new(32, 1.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let f = gaussian_noise(&sp, &mut rng);
            let n = f.data().len() as f64;
            let mean = f.data().iter().map(|&v| v as f64).sum::<f64>() / n;
            let var = f.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 0.1 && (0.85..=1.15).contains(&var), "mean {mean} var {var}");
        }
        let a = gaussian_noise(&sp, &mut ChaCha8Rng::seed_from_u64(3));
        let b = gaussian_noise(&sp, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }

    #[test]
    fn tfs_support_and_range() {
        let sp = spectral(16);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = truncated_fourier_spectrum(&sp, 3, &mut rng).unwrap();
        let g = *sp.grid();
        for (i, z) in spec.coeffs().iter().enumerate() {
            let (x, y, w) = g.coords(i);
            if [x, y, w].iter().any(|&a| g.mode(a).abs() > 3) {
                assert_eq!(z.norm(), 0.0);
            }
        }
        assert!(spec.hermitian_defect() < 1e-12);
        assert!(truncated_fourier(&sp, 8, &mut rng).is_err());
        assert!(truncated_fourier(&sp, 0, &mut rng).is_err());
    }

    #[test]
    fn tfs_a_k_limit_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..300 {
            seen.insert(InitializerSpec::sample(InitializerConfig::TfsA, &mut rng).k_limit.unwrap());
        }
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), vec![3, 4, 5]);
        for _ in 0..300 {
            let k = InitializerSpec::sample(InitializerConfig::TfsC, &mut rng).k_limit.unwrap();
            assert!((5..=9).contains(&k));
        }
    }

    #[test]
    fn decayed_energy_is_real_with_zero_mean() {
        let sp = spectral(16);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = decayed_energy_spectrum(&sp, -3.5, &mut rng).unwrap();
        assert_eq!(spec.coeffs()[0].norm(), 0.0);
        assert!(spec.hermitian_defect() < 1e-12);
        let f = sp.inverse(&spec).unwrap();
        let mean = f.data().iter().sum::<f64>() / f.data().len() as f64;
        assert!(mean.abs() < 1e-6);
        assert!(decayed_energy(&sp, -1.0, &mut rng).is_err());
    }

    #[test]
    fn poisson_zero_mean() {
        let sp = spectral(16);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = poisson_from_tfs(&sp, 4, &mut rng).unwrap();
        assert!(f.data().iter().sum::<f64>().abs() / 4096.0 < 1e-12);
    }

    #[test]
    fn diffused_noise_rejects_bad_nu() {
        let sp = spectral(8);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(diffused_noise(&sp, 0.0, &mut rng).is_err());
        assert!(diffused_noise(&sp, 1e-3, &mut rng).is_ok());
    }

    #[test]
    fn normalize_examples() {
        let g = Grid3::new(4, 1.0).unwrap();
        let mut f = Field::<f64>::zeros(g, 1);
        f.data_mut()[0] = -3.0;
        f.data_mut()[1] = 5.0;
        let out = normalize_ic(&f, NormalizationBounds::new(-1.0, 1.0).unwrap());
        assert_eq!(out.min_max(), (-1.0, 1.0));
        assert_eq!(out.data()[2], -0.25);

        let c = Field::<f64>::from_fn(g, 1, |_, _, _, _| 7.0);
        let out = normalize_ic(&c, NormalizationBounds::new(0.0, 1.0).unwrap());
        assert!(out.data().iter().all(|&v| v == 0.5));
        assert!(NormalizationBounds::new(1.0, 1.0).is_err());
        assert_eq!(InitializerConfig::TfsC.bounds_mode(), Some(BoundsMode::Fixed(0.0, 1.0)));
    }

    #[test]
    fn random_bounds_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let b = NormalizationBounds::sample(BoundsMode::Random, &mut rng);
            assert!((-1.0..=-0.1).contains(&b.c_min) && (0.1..=1.0).contains(&b.c_max));
        }
    }

    #[test]
    fn pairing_table() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            assert_eq!(
                sample_initializer_for(EquationKind::KuramotoSivashinsky, &mut rng).config,
                InitializerConfig::Gn
            );
            assert_eq!(sample_initializer_for(EquationKind::FisherKpp, &mut rng).config, InitializerConfig::TfsC);
        }
        let mut seen = std::collections::HashSet::new();
        for _ in 0..400 {
            seen.insert(sample_initializer_for(EquationKind::Diffusion, &mut rng).config);
        }
        use InitializerConfig::*;
        assert_eq!(seen, [TfsD, DnC, DeB, PtfsD].into_iter().collect());
    }

    #[test]
    fn generate_hits_bounds_and_is_deterministic() {
        let sp = Spectral::<f32>::new(Grid3::new(16, 1.0).unwrap());
        for config in InitializerConfig::ALL {
            let mut rng = ChaCha8Rng::seed_from_u64(config.id() as u64);
            let spec = InitializerSpec::sample(config, &mut rng);
            let a = spec.generate(&sp, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
            let b = spec.generate(&sp, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
            assert_eq!(a, b);
            assert!(a.is_finite());
            if let Some(bounds) = spec.bounds {
                let (lo, hi) = a.min_max();
                assert!((lo as f64 - bounds.c_min).abs() < 1e-6, "{config}");
                assert!((hi as f64 - bounds.c_max).abs() < 1e-6, "{config}");
            }
            let list = spec.to_list();
            let back = InitializerSpec::from_list(config, &list).unwrap();
            assert_eq!(back.to_list(), list);
        }
    }
}
