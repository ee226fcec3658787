//! Starts with every `Qᵢ(0) = 0`: each coordinate has `aᵢ = bᵢ` or `aᵢ = −bᵢ`.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::verdict::Verdict;
use crate::error::{Error, Result};
use crate::model::{gd_step, loss};
use crate::{HyperParamsF64, ParamStateF64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QZeroManifold {
    /// `a = −b`.
    Antisymmetric,
    /// `a = b ≠ 0`.
    Balanced,
    /// Both kinds of coordinates present.
    Mixed,
}

impl QZeroManifold {
    pub fn as_str(self) -> &'static str {
        match self {
            QZeroManifold::Antisymmetric => "antisymmetric",
            QZeroManifold::Balanced => "balanced",
            QZeroManifold::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QZeroOutcome {
    pub manifold: QZeroManifold,
    /// What the run reached: "origin", "global-minimum" or "split".
    pub label: String,
    pub steps: usize,
    pub final_state: ParamStateF64,
    pub final_loss: f64,
    pub verdict: Verdict,
}

/// Loss tolerance for "reached": `|L − target| ≤ QZERO_TOL`.
pub const QZERO_TOL: f64 = 1e-8;
/// `λ ≤ ORIGIN_TOL` counts as the origin.
pub const ORIGIN_TOL: f64 = 1e-12;

fn classify(init: &ParamStateF64) -> Result<(QZeroManifold, Vec<bool>)> {
    let mut anti = Vec::with_capacity(init.dim());
    for (&a, &b) in init.a().iter().zip(init.b()) {
        if a * a != b * b {
            return Err(Error::Precondition(format!("Q(0) != 0 at a = {a}, b = {b}")));
        }
        anti.push(a != 0.0 && a == -b);
    }
    let n_anti = anti.iter().filter(|&&x| x).count();
    let n_sym = init.a().iter().zip(&anti).filter(|(&a, &x)| a != 0.0 && !x).count();
    let manifold = match (n_anti, n_sym) {
        (_, 0) => QZeroManifold::Antisymmetric,
        (0, _) => QZeroManifold::Balanced,
        _ => QZeroManifold::Mixed,
    };
    Ok((manifold, anti))
}

/// Runs GD from a `Q(0) = 0` start and checks the predicted end point.
///
/// `a = −b` should decay to the origin with loss `Φ²/2`; `a = b` should reach
/// a global minimum with `a = b` throughout; a mixed start should send the
/// `aᵢ = −bᵢ` coordinates to zero while the rest reach the minimum.
pub fn verify_q_zero_manifolds(init: &ParamStateF64, hp: &HyperParamsF64, max_steps: usize) -> Result<QZeroOutcome> {
    const CHECK: &str = "q-zero-manifolds";
    const CLAIM: &str = "Q(0)=0: a=-b goes to the origin with loss phi^2/2; a=b reaches a minimum; mixed starts split";
    let (manifold, anti) = classify(init)?;
    let phi = hp.phi;
    let target = match manifold {
        QZeroManifold::Antisymmetric => 0.5 * phi * phi,
        _ => 0.0,
    };

    let mut state = init.clone();
    let mut steps = 0;
    let mut balance_drift = 0.0f64;
    let reached = |s: &ParamStateF64| {
        let loss_ok = (loss(s, phi) - target).abs() <= QZERO_TOL * target.max(1.0);
        loss_ok && (manifold != QZeroManifold::Antisymmetric || s.scale() <= ORIGIN_TOL)
    };
    while !reached(&state) && steps < max_steps {
        state = gd_step(&state, hp)?;
        steps += 1;
        if manifold == QZeroManifold::Balanced {
            let d = state.a().iter().zip(state.b()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            balance_drift = balance_drift.max(d);
        }
    }
    let final_loss = loss(&state, phi);
    let loss_ok = (final_loss - target).abs() <= QZERO_TOL * target.max(1.0);
    let anti_norm: f64 = state
        .a()
        .iter()
        .zip(&anti)
        .filter(|(_, &x)| x)
        .map(|(a, _)| a * a)
        .sum::<f64>()
        .sqrt();

    let (label, pass, details) = match manifold {
        QZeroManifold::Antisymmetric => {
            let scale = state.scale();
            let at_origin = scale <= ORIGIN_TOL;
            let label = if at_origin { "origin" } else { "not-reached" };
            (label, loss_ok && at_origin, json!({ "final_scale": scale, "target_loss": target }))
        }
        QZeroManifold::Balanced => {
            let label = if loss_ok { "global-minimum" } else { "not-reached" };
            let stays = balance_drift <= 1e-12 * init.scale().max(1.0);
            (label, loss_ok && stays, json!({ "balance_drift": balance_drift }))
        }
        QZeroManifold::Mixed => {
            let split = anti_norm <= 1e-4;
            let label = if loss_ok && split { "split" } else if loss_ok { "global-minimum" } else { "not-reached" };
            (label, loss_ok && split, json!({ "antisymmetric_coord_norm": anti_norm }))
        }
    };
    let mut details = details;
    details["manifold"] = manifold.as_str().into();
    details["label"] = label.into();
    details["steps"] = steps.into();
    details["final_loss"] = final_loss.into();
    let margin = QZERO_TOL * target.max(1.0) - (final_loss - target).abs();
    Ok(QZeroOutcome {
        manifold,
        label: label.into(),
        steps,
        final_state: state,
        final_loss,
        verdict: Verdict::checked(CHECK, CLAIM, pass, margin, details),
    })
}
