//! Continuous-time reference: gradient flow `(ȧ, ḃ) = (−εb, −εa)`.
//!
//! Integrated with the Dormand–Prince 5(4) pair under a PI step-size
//! controller. Gradient flow conserves every `Qᵢ` and `α`; the integrator
//! tracks how far the numerical solution drifts from both.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{gf_rhs_into, loss, summarize, ParamState};
use crate::scalar::Scalar;
use crate::summary::{alpha, SummaryState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    /// Stop once `L ≤ loss_tol`.
    pub loss_tol: f64,
    /// Stop once `t ≥ horizon`.
    pub horizon: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Step sizes below this abort with [`Error::StiffSegment`].
    pub min_step: f64,
    /// `λ` below this is reported as convergence to the saddle at the origin.
    pub saddle_scale: f64,
    /// Keep `(t, ε, λ)` for every accepted step.
    pub trace: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            loss_tol: 1e-16,
            horizon: 1e6,
            rtol: 1e-11,
            atol: 1e-13,
            min_step: 1e-14,
            saddle_scale: 1e-12,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowStatus {
    Converged,
    HorizonReached,
    SaddleLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSample<T> {
    pub t: T,
    pub residual: T,
    pub scale: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowResult<T> {
    pub final_state: ParamState<T>,
    /// Integration time actually covered.
    pub time_horizon: T,
    /// Largest relative change of any `Qᵢ` seen at an accepted step.
    pub max_q_drift: T,
    pub max_alpha_drift: T,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub status: FlowStatus,
    pub trace: Vec<FlowSample<T>>,
}

// Dormand–Prince 5(4) tableau. The system is autonomous, so the nodes are unused.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
// PI exponents for a 5th-order method (Hairer & Wanner, II.4).
const PI_ALPHA: f64 = 0.7 / 5.0;
const PI_BETA: f64 = 0.4 / 5.0;

fn relative_drift<T: Scalar>(now: T, start: T, floor: T) -> T {
    (now - start).abs() / start.abs().max(floor)
}

/// Integrates gradient flow from `init` with the default tolerances.
pub fn integrate<T: Scalar>(init: &ParamState<T>, phi: T, loss_tol: T, horizon: T) -> Result<FlowResult<T>> {
    let cfg = FlowConfig {
        loss_tol: loss_tol.as_f64(),
        horizon: horizon.as_f64(),
        ..FlowConfig::default()
    };
    integrate_with(init, phi, &cfg)
}

pub fn integrate_with<T: Scalar>(init: &ParamState<T>, phi: T, cfg: &FlowConfig) -> Result<FlowResult<T>> {
    let d = init.dim();
    let n = 2 * d;
    let lit = T::lit;
    let (rtol, atol) = (lit(cfg.rtol), lit(cfg.atol));
    let horizon = lit(cfg.horizon);
    let loss_tol = lit(cfg.loss_tol);

    let s0 = summarize(init, phi);
    let q0 = s0.imbalances().to_vec();
    let alpha0 = alpha(&s0, phi);
    // Qᵢ(0) = 0 makes a relative drift meaningless; measure it against λ(0) instead.
    let q_floor = s0.scale().max(T::min_positive_value());
    let alpha_floor = alpha0.abs().max(T::min_positive_value());

    let mut y: Vec<T> = init.a().iter().chain(init.b()).copied().collect();
    let mut t = T::zero();
    let mut max_q_drift = T::zero();
    let mut max_alpha_drift = T::zero();
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut trace = Vec::new();

    let sample = |t: T, s: &SummaryState<T>| FlowSample { t, residual: s.residual(), scale: s.scale() };
    if cfg.trace {
        trace.push(sample(t, &s0));
    }

    let finish = |y: &[T], t, max_q_drift, max_alpha_drift, accepted, rejected, status, trace| {
        let final_state = ParamState::new(y[..d].to_vec(), y[d..].to_vec())?;
        Ok(FlowResult {
            final_state,
            time_horizon: t,
            max_q_drift,
            max_alpha_drift,
            steps_accepted: accepted,
            steps_rejected: rejected,
            status,
            trace,
        })
    };

    if loss(init, phi) <= loss_tol {
        return finish(&y, t, max_q_drift, max_alpha_drift, 0, 0, FlowStatus::Converged, trace);
    }
    if s0.scale() < lit(cfg.saddle_scale) {
        return finish(&y, t, max_q_drift, max_alpha_drift, 0, 0, FlowStatus::SaddleLimit, trace);
    }

    let mut k: Vec<Vec<T>> = vec![Vec::with_capacity(n); 7];
    gf_rhs_into(&y[..d], &y[d..], phi, &mut k[0]);

    // Initial step: a small fraction of the local time scale 1/‖f‖.
    let fnorm = k[0].iter().fold(T::zero(), |m, x| m.max(x.abs()));
    let mut h = (lit(1e-3) / fnorm.max(lit(1e-8))).min(horizon);
    let mut err_prev = T::one();

    let mut stage = vec![T::zero(); n];
    let mut y_new = vec![T::zero(); n];

    loop {
        if h < lit(cfg.min_step) {
            return Err(Error::StiffSegment {
                time: t.as_f64(),
                step: h.as_f64(),
                a: y[..d].iter().map(|x| x.as_f64()).collect(),
                b: y[d..].iter().map(|x| x.as_f64()).collect(),
            });
        }

        for s in 1..7 {
            for i in 0..n {
                let mut acc = T::zero();
                for j in 0..s {
                    acc = acc + lit(A[s][j]) * k[j][i];
                }
                stage[i] = y[i] + h * acc;
            }
            gf_rhs_into(&stage[..d], &stage[d..], phi, &mut k[s]);
            if s == 6 {
                y_new.copy_from_slice(&stage);
            }
        }

        let mut err_sq = T::zero();
        for i in 0..n {
            let mut e = T::zero();
            for (j, &ej) in E.iter().enumerate() {
                e = e + lit(ej) * k[j][i];
            }
            let sc = atol + rtol * y[i].abs().max(y_new[i].abs());
            let r = h * e / sc;
            err_sq = err_sq + r * r;
        }
        let err = (err_sq / lit(n as f64)).sqrt();

        if !err.is_finite() || err > T::one() {
            rejected += 1;
            let f = if err.is_finite() {
                (lit(SAFETY) * err.powf(-lit(1.0 / 5.0))).max(lit(MIN_FACTOR))
            } else {
                lit(MIN_FACTOR)
            };
            h = h * f.min(T::one());
            continue;
        }

        accepted += 1;
        t = t + h;
        std::mem::swap(&mut y, &mut y_new);
        // FSAL: the last stage is f(y_new).
        k.swap(0, 6);

        let s = summarize(&ParamState::new(y[..d].to_vec(), y[d..].to_vec())?, phi);
        for (q, &q_init) in s.imbalances().iter().zip(&q0) {
            max_q_drift = max_q_drift.max(relative_drift(*q, q_init, if q_init == T::zero() { q_floor } else { q_init.abs() }));
        }
        max_alpha_drift = max_alpha_drift.max(relative_drift(alpha(&s, phi), alpha0, alpha_floor));
        if cfg.trace {
            trace.push(sample(t, &s));
        }

        let eps = s.residual();
        let status = if eps * eps / T::two() <= loss_tol {
            Some(FlowStatus::Converged)
        } else if s.scale() < lit(cfg.saddle_scale) {
            Some(FlowStatus::SaddleLimit)
        } else if t >= horizon {
            Some(FlowStatus::HorizonReached)
        } else {
            None
        };
        if let Some(status) = status {
            return finish(&y, t, max_q_drift, max_alpha_drift, accepted, rejected, status, trace);
        }

        let err_c = err.max(lit(1e-10));
        let f = lit(SAFETY) * err_c.powf(-lit(PI_ALPHA)) * err_prev.powf(lit(PI_BETA));
        h = h * f.max(lit(MIN_FACTOR)).min(lit(MAX_FACTOR));
        h = h.min(horizon - t);
        err_prev = err_c;
    }
}

/// Gradient-flow limit predicted from conserved quantities alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowLimit<T> {
    /// `λ(∞) = √α(0)`.
    pub lambda_inf: T,
    /// `Qᵢ(∞) = Qᵢ(0)`.
    pub imbalances: Vec<T>,
    /// `sign Qᵢ(∞)`, each in `{−1, 0, 1}`.
    pub q_signs: Vec<i8>,
}

/// Predicts the gradient-flow limit without integrating.
///
/// Both `α` and every `Qᵢ` are conserved, and `α = λ²` on the minimizer set.
/// Fails on the `a = −b` manifold, where the flow goes to the saddle instead.
pub fn gf_limit_prediction<T: Scalar>(s0: &SummaryState<T>, phi: T) -> Result<FlowLimit<T>> {
    let on_saddle_manifold = s0.imbalances().iter().all(|&q| q == T::zero())
        && s0.product() <= T::zero()
        && (s0.scale() + T::two() * s0.product()).abs() <= T::lit(1e-12) * s0.scale().max(T::one());
    if on_saddle_manifold && !(s0.scale() == T::zero() && phi == T::zero()) {
        return Err(Error::Precondition("initial state lies on the a = -b manifold".into()));
    }
    let a0 = alpha(s0, phi);
    if a0 < T::zero() {
        return Err(Error::InconsistentSummary(format!("alpha(0) = {a0} < 0")));
    }
    let q_signs = s0
        .imbalances()
        .iter()
        .map(|&q| if q > T::zero() { 1 } else if q < T::zero() { -1 } else { 0 })
        .collect();
    Ok(FlowLimit {
        lambda_inf: a0.sqrt(),
        imbalances: s0.imbalances().to_vec(),
        q_signs,
    })
}
