use std::sync::Arc;

use super::{EquationKind, PdeParams};
use crate::real::Real;
use crate::spectral::{Field, Spectral, SpectralField};

/// Pseudo-spectral nonlinear term of one equation.
///
/// Inputs are truncated with the two-thirds mask, products are formed in real
/// space, and the transformed result is masked again. For KS the zero mode of
/// the result is removed: `-1/2 |grad u|^2` is sign-definite and would
/// otherwise drive the spatial mean without bound.
pub struct NonlinearOperator<T: Real> {
    kind: EquationKind,
    params: PdeParams,
    spectral: Arc<Spectral<T>>,
}

impl<T: Real> NonlinearOperator<T> {
    pub fn new(kind: EquationKind, params: PdeParams, spectral: Arc<Spectral<T>>) -> Self {
        Self { kind, params, spectral }
    }

    pub fn kind(&self) -> EquationKind {
        self.kind
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, EquationKind::Diffusion | EquationKind::HyperDiffusion)
    }

    /// `N(u)` in Fourier space.
    pub fn eval(&self, state: &SpectralField<T>) -> SpectralField<T> {
        if self.is_zero() {
            return SpectralField::zeros(*state.grid(), state.channels());
        }
        let real = self.real_space(state);
        let mut out = self.spectral.forward_unchecked(&real);
        self.spectral.dealias(&mut out);
        if self.kind == EquationKind::KuramotoSivashinsky {
            let len = state.grid().len();
            let zero = num_complex::Complex::new(T::zero(), T::zero());
            for block in out.coeffs_mut().chunks_exact_mut(len) {
                block[0] = zero;
            }
        }
        out
    }

    /// Pointwise nonlinearity in real space, before the transform back and the output mask.
    pub fn real_space(&self, state: &SpectralField<T>) -> Field<T> {
        let sp = &*self.spectral;
        let mut s = state.clone();
        sp.dealias(&mut s);
        let channels = s.channels();
        match self.kind {
            EquationKind::Diffusion | EquationKind::HyperDiffusion => Field::zeros(*s.grid(), channels),
            EquationKind::Burgers | EquationKind::KdV => {
                let u = sp.inverse_real(&s);
                let grads = self.gradients(&s);
                let len = s.grid().len();
                let mut out = Field::zeros(*s.grid(), channels);
                let data = out.data_mut();
                for i in 0..channels {
                    for (j, g) in grads.iter().enumerate() {
                        let uj = u.channel(j);
                        let dj_ui = g.channel(i);
                        let dst = &mut data[i * len..(i + 1) * len];
                        for p in 0..len {
                            dst[p] = dst[p] - uj[p] * dj_ui[p];
                        }
                    }
                }
                out
            }
            EquationKind::KuramotoSivashinsky => {
                let grads = self.gradients(&s);
                let half = T::of(0.5);
                let mut out = Field::zeros(*s.grid(), channels);
                for g in &grads {
                    for (o, &v) in out.data_mut().iter_mut().zip(g.data()) {
                        *o = *o - half * v * v;
                    }
                }
                out
            }
            EquationKind::FisherKpp => {
                let r = T::of(self.params.r);
                sp.inverse_real(&s).map(|u| -r * u * u)
            }
            EquationKind::SwiftHohenberg => sp.inverse_real(&s).map(|u| u * u - u * u * u),
        }
    }

    fn gradients(&self, s: &SpectralField<T>) -> [Field<T>; 3] {
        let sp = &*self.spectral;
        let mut buf = s.clone();
        let mut grad = |axis: usize| {
            sp.gradient_into(s, axis, &mut buf);
            sp.inverse_real(&buf)
        };
        [grad(0), grad(1), grad(2)]
    }
}

/// One-shot evaluation of `N(u)` without keeping the operator around.
pub fn nonlinear_eval<T: Real>(
    kind: EquationKind,
    params: &PdeParams,
    spectral: Arc<Spectral<T>>,
    state: &SpectralField<T>,
) -> SpectralField<T> {
    NonlinearOperator::new(kind, *params, spectral).eval(state)
}
