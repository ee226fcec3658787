//! Parameter-space dynamics of `L(a, b) = ½(aᵀb − Φ)²`.
//!
//! Everything here works on the raw weights. The reduced coordinates
//! (residual, scale, imbalances) live in [`crate::summary`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, norm_sq, Scalar};
use crate::summary::SummaryState;

/// Entries above this magnitude terminate a trajectory as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e150;

/// Power-iteration stopping tolerance on the relative change of the Rayleigh quotient.
pub const SHARPNESS_TOL: f64 = 1e-12;
pub const SHARPNESS_MAX_ITERS: usize = 100_000;

/// Raw weights of the two-layer scalar network: output slope is `aᵀb`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamState<T> {
    a: Vec<T>,
    b: Vec<T>,
}

impl<T: Scalar> ParamState<T> {
    pub fn new(a: Vec<T>, b: Vec<T>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::InvalidState("hidden width must be at least 1".into()));
        }
        if a.len() != b.len() {
            return Err(Error::InvalidState(format!(
                "a has length {} but b has length {}",
                a.len(),
                b.len()
            )));
        }
        if a.iter().chain(&b).any(|x| !x.is_finite()) {
            return Err(Error::InvalidState("non-finite entry".into()));
        }
        Ok(Self { a, b })
    }

    /// Single hidden unit.
    pub fn scalar(a: T, b: T) -> Result<Self> {
        Self::new(vec![a], vec![b])
    }

    pub fn a(&self) -> &[T] {
        &self.a
    }

    pub fn b(&self) -> &[T] {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn into_parts(self) -> (Vec<T>, Vec<T>) {
        (self.a, self.b)
    }

    /// `aᵀb`.
    pub fn product(&self) -> T {
        dot(&self.a, &self.b)
    }

    /// `‖a‖² + ‖b‖²`.
    pub fn scale(&self) -> T {
        norm_sq(&self.a) + norm_sq(&self.b)
    }

    pub fn residual(&self, phi: T) -> T {
        self.product() - phi
    }

    pub fn imbalances(&self) -> Vec<T> {
        self.a.iter().zip(&self.b).map(|(&x, &y)| x * x - y * y).collect()
    }

    fn max_abs(&self) -> T {
        self.a
            .iter()
            .chain(&self.b)
            .fold(T::zero(), |m, &x| if x.abs() > m || x.is_nan() { x.abs() } else { m })
    }

    /// Rejects non-finite states and states past [`DIVERGENCE_LIMIT`].
    fn check_bounded(self) -> Result<Self> {
        let max_abs = self.max_abs();
        if max_abs.is_finite() && max_abs.as_f64() <= DIVERGENCE_LIMIT {
            Ok(self)
        } else {
            Err(Error::Diverged {
                a: self.a.iter().map(|x| x.as_f64()).collect(),
                b: self.b.iter().map(|x| x.as_f64()).collect(),
                max_abs: max_abs.as_f64(),
            })
        }
    }
}

/// Target Φ and step size η.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams<T> {
    pub phi: T,
    pub eta: T,
}

impl<T: Scalar> HyperParams<T> {
    pub fn new(phi: T, eta: T) -> Result<Self> {
        if !phi.is_finite() || phi < T::zero() {
            return Err(Error::InvalidHyper(format!("phi must be finite and >= 0, got {phi}")));
        }
        if !eta.is_finite() || eta <= T::zero() {
            return Err(Error::InvalidHyper(format!("eta must be finite and > 0, got {eta}")));
        }
        Ok(Self { phi, eta })
    }
}

pub fn loss<T: Scalar>(state: &ParamState<T>, phi: T) -> T {
    let eps = state.residual(phi);
    eps * eps / T::two()
}

/// One gradient-descent step `(a − ηεb, b − ηεa)`.
///
/// The input is left untouched. At a global minimizer (`ε = 0`) the output is
/// bitwise equal to the input.
pub fn gd_step<T: Scalar>(state: &ParamState<T>, hp: &HyperParams<T>) -> Result<ParamState<T>> {
    let step = hp.eta * state.residual(hp.phi);
    let a = state.a.iter().zip(&state.b).map(|(&x, &y)| x - step * y).collect();
    let b = state.b.iter().zip(&state.a).map(|(&y, &x)| y - step * x).collect();
    ParamState { a, b }.check_bounded()
}

/// Gradient-flow vector field `(ȧ, ḃ) = (−εb, −εa)`, returned as one `2d` vector.
pub fn gf_rhs<T: Scalar>(state: &ParamState<T>, phi: T) -> Vec<T> {
    let mut out = Vec::with_capacity(2 * state.dim());
    gf_rhs_into(&state.a, &state.b, phi, &mut out);
    out
}

pub(crate) fn gf_rhs_into<T: Scalar>(a: &[T], b: &[T], phi: T, out: &mut Vec<T>) {
    let eps = dot(a, b) - phi;
    out.clear();
    out.extend(b.iter().map(|&y| -eps * y));
    out.extend(a.iter().map(|&x| -eps * x));
}

/// Hessian-vector product for `v = (u; w)`.
///
/// `H = [[bbᵀ, baᵀ + εI], [abᵀ + εI, aaᵀ]]`, so
/// `Hv = (b·s + εw; a·s + εu)` with `s = bᵀu + aᵀw`.
pub fn hessian_vector_product<T: Scalar>(state: &ParamState<T>, phi: T, v: &[T]) -> Vec<T> {
    let d = state.dim();
    assert_eq!(v.len(), 2 * d, "direction must have length 2d");
    let eps = state.residual(phi);
    let mut out = vec![T::zero(); 2 * d];
    hvp_into(&state.a, &state.b, eps, v, &mut out);
    out
}

fn hvp_into<T: Scalar>(a: &[T], b: &[T], eps: T, v: &[T], out: &mut [T]) {
    let d = a.len();
    let (u, w) = v.split_at(d);
    let s = dot(b, u) + dot(a, w);
    for i in 0..d {
        out[i] = b[i] * s + eps * w[i];
        out[d + i] = a[i] * s + eps * u[i];
    }
}

/// Top eigenvalue of the full `2d × 2d` Hessian.
///
/// Power iteration runs on `H + |ε|I`, which is positive semidefinite because
/// the off-block `εJ` has spectrum `±ε` and the remaining term is rank one PSD.
/// This makes the dominant eigenvalue the algebraically largest one.
pub fn sharpness<T: Scalar>(state: &ParamState<T>, phi: T) -> Result<T> {
    let d = state.dim();
    let eps = state.residual(phi);
    let shift = eps.abs();

    let mut v: Vec<T> = state.b.iter().chain(&state.a).copied().collect();
    let n0 = norm_sq(&v).sqrt();
    if n0 == T::zero() {
        // a = b = 0: H = εJ exactly.
        return Ok(shift);
    }
    v.iter_mut().for_each(|x| *x = *x / n0);

    let tol = T::resolvable(SHARPNESS_TOL);
    let mut hv = vec![T::zero(); 2 * d];
    let mut rayleigh = T::zero();
    for iter in 0..SHARPNESS_MAX_ITERS {
        hvp_into(&state.a, &state.b, eps, &v, &mut hv);
        hv.iter_mut().zip(&v).for_each(|(h, &x)| *h = *h + shift * x);
        let next = dot(&v, &hv);
        let norm = norm_sq(&hv).sqrt();
        if norm == T::zero() {
            return Ok(-shift);
        }
        v.iter_mut().zip(&hv).for_each(|(x, &h)| *x = h / norm);
        if iter > 0 && (next - rayleigh).abs() <= tol * next.abs() {
            return Ok(next - shift);
        }
        rayleigh = next;
    }
    Err(Error::PowerIteration {
        iterations: SHARPNESS_MAX_ITERS,
        rayleigh: (rayleigh - shift).as_f64(),
    })
}

/// Reduced coordinates `(ε, λ, Qᵢ, aᵀb)` of a parameter state.
pub fn summarize<T: Scalar>(state: &ParamState<T>, phi: T) -> SummaryState<T> {
    let na = norm_sq(&state.a);
    let nb = norm_sq(&state.b);
    let product = state.product();
    let scale = na + nb;
    debug_assert!({
        let s = na - nb;
        let lhs = scale * scale;
        let rhs = s * s + T::four() * na * nb;
        !lhs.is_finite() || (lhs - rhs).abs() <= T::lit(1e3) * T::epsilon() * lhs.max(T::min_positive_value())
    });
    let (mut minus, mut plus) = (T::zero(), T::zero());
    for (&x, &y) in state.a.iter().zip(&state.b) {
        minus = minus + (x - y) * (x - y);
        plus = plus + (x + y) * (x + y);
    }
    SummaryState::from_raw(product - phi, scale, state.imbalances(), product, minus * plus)
}
