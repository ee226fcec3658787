//! Pessimistic sequences that bound the residual and total imbalance while
//! GD is still in region C (`aᵀb < 0`).
//!
//! ```text
//! M_k     = max{w_k, −2z_k − 2Φ}
//! z_{k+1} = (1 − ¾ηM_k) z_k
//! w_{k+1} = (1 − η²z_k²) w_k
//! ```
//!
//! `z` bounds `ε` from below and `w` bounds `Q` from below until
//! `τ₁ = min{k : z_k > −Φ}`.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::trajectory::TrajectoryRecord;
use super::verdict::Verdict;
use crate::error::{Error, Result};
use crate::summary::RegionLabel;
use crate::HyperParamsF64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingSequence {
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub m: Vec<f64>,
    /// First `k` with `z_k > −Φ`; `z`, `w` have `tau1 + 1` entries.
    pub tau1: usize,
    /// `w₀/2 − √(w₀(w₀ − 4ηz₀²))/2`, defined when `w₀ ≥ 4ηz₀²`.
    pub c1: Option<f64>,
}

impl BoundingSequence {
    pub fn w_at_exit(&self) -> f64 {
        self.w[self.tau1]
    }
}

/// Iterates the bounding recurrence from `(z0, w0)` until `z` exits `(−∞, −Φ]`.
///
/// The caller is responsible for `η < 2/λ̄`, which needs `λ(0)`.
pub fn bounding_sequence(z0: f64, w0: f64, hp: &HyperParamsF64, max_k: usize) -> Result<BoundingSequence> {
    let (phi, eta) = (hp.phi, hp.eta);
    if !(z0 < -phi) {
        return Err(Error::Precondition(format!("z0 = {z0} must be < -phi = {}", -phi)));
    }
    if !(w0 > 0.0) {
        return Err(Error::Precondition(format!("w0 = {w0} must be > 0")));
    }
    if eta >= 0.5 / z0.abs() {
        return Err(Error::Precondition(format!("eta = {eta} must be < 1/(2|z0|)")));
    }

    let c1 = (w0 >= 4.0 * eta * z0 * z0).then(|| w0 / 2.0 - (w0 * (w0 - 4.0 * eta * z0 * z0)).sqrt() / 2.0);
    let mut z = vec![z0];
    let mut w = vec![w0];
    let mut m = Vec::new();
    let mut k = 0;
    while z[k] <= -phi {
        if k >= max_k {
            return Err(Error::SequenceDidNotExit { steps: k, z, w });
        }
        let mk = w[k].max(-2.0 * z[k] - 2.0 * phi);
        m.push(mk);
        z.push((1.0 - 0.75 * eta * mk) * z[k]);
        w.push((1.0 - eta * eta * z[k] * z[k]) * w[k]);
        k += 1;
    }
    m.push(w[k].max(-2.0 * z[k] - 2.0 * phi));
    Ok(BoundingSequence { z, w, m, tau1: k, c1 })
}

const DOMINATION: &str = "sequence-domination";
const DOMINATION_CLAIM: &str =
    "region C: z_k <= eps(k) and w_k <= Q(k) for k < tau1, aTb > 0 at tau1, and w_tau1 > c1";

/// Compares a region-C trajectory against its bounding sequence.
pub fn verify_sequence_domination(tr: &TrajectoryRecord, seq: &BoundingSequence) -> Result<Verdict> {
    let s0 = &tr.initial().summary;
    if tr.initial().region != RegionLabel::C {
        return Err(Error::Precondition("trajectory does not start in region C".into()));
    }
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0);
    if !close(seq.z[0], s0.residual()) || !close(seq.w[0], s0.total_imbalance()) {
        return Err(Error::Precondition("sequence start does not match (eps(0), Q(0))".into()));
    }

    // Evaluated in binary64 on both sides, so equality at k = 0 and ties
    // later can differ by rounding.
    let tol = |x: f64| 64.0 * f64::EPSILON * x.abs().max(1.0);
    let mut z_margin = f64::INFINITY;
    let mut w_margin = f64::INFINITY;
    let mut checked = 0usize;
    let last = seq.tau1.min(tr.steps.len());
    for k in 0..last {
        let z = seq.z[k];
        if z >= 0.0 {
            continue;
        }
        let s = &tr.steps[k].summary;
        z_margin = z_margin.min(s.residual() - z + tol(z));
        w_margin = w_margin.min(s.total_imbalance() - seq.w[k] + tol(seq.w[k]));
        checked += 1;
    }

    let exit_product = tr.steps.get(seq.tau1).map(|s| s.summary.product());
    let exit_ok = exit_product.is_none_or(|p| p > 0.0);
    let c1_margin = seq.c1.map(|c1| seq.w_at_exit() - c1);
    let c1_ok = c1_margin.is_none_or(|m| m > 0.0);

    let pass = z_margin >= 0.0 && w_margin >= 0.0 && exit_ok && c1_ok;
    Ok(Verdict::checked(
        DOMINATION,
        DOMINATION_CLAIM,
        pass,
        z_margin.min(w_margin),
        json!({
            "tau1": seq.tau1,
            "checked_steps": checked,
            "z_margin": z_margin,
            "w_margin": w_margin,
            "product_at_tau1": exit_product,
            "c1": seq.c1,
            "c1_margin": c1_margin,
        }),
    ))
}

/// Lowest scale along a region-C start sits next to the first positive product:
/// `λ(t) ≥ min{λ(τ′−1), λ(τ′)}` for `τ′` the first step with `aᵀb > 0`.
///
/// The argument behind it assumes the exit from region C lands in region B,
/// where `λ` grows. A large step can jump from C straight into region A, where
/// `λ` keeps shrinking, and the claim then fails; `exit_region` in the
/// details tells the two cases apart.
pub fn verify_mu_floor(tr: &TrajectoryRecord) -> Verdict {
    const CHECK: &str = "mu-floor";
    const CLAIM: &str = "min over t of lambda(t) is attained next to the first step with aTb > 0";
    if tr.initial().region != RegionLabel::C {
        return Verdict::skipped(CHECK, CLAIM, "does not start in region C");
    }
    let Some(first_pos) = tr.steps.iter().position(|s| s.summary.product() > 0.0) else {
        return Verdict::skipped(CHECK, CLAIM, "never leaves region C");
    };
    let floor = tr.steps[first_pos - 1].scale().min(tr.steps[first_pos].scale());
    let (tau, min_scale) = tr
        .steps
        .iter()
        .map(|s| s.scale())
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, l)| if l < acc.1 { (i, l) } else { acc });
    let margin = (min_scale - floor) / floor;
    Verdict::checked(
        CHECK,
        CLAIM,
        margin >= -1e-12,
        margin,
        json!({
            "tau": tau,
            "first_positive_product": first_pos,
            "exit_region": tr.steps[first_pos].region,
            "min_scale": min_scale,
            "floor": floor,
        }),
    )
}
