//! Single-step checks: summary maps against the parameter step, and the
//! residual sign behaviour around `η₁` and `η₂`.

use serde_json::json;

use super::verdict::Verdict;
use crate::model::{gd_step, summarize};
use crate::summary::{summary_step, thresholds};
use crate::{HyperParams, HyperParamsF64, ParamStateF64};

/// Tolerance of [`verify_commutation`].
pub const COMMUTATION_TOL: f64 = 1e-10;

/// `summarize(gd_step(s))` against `summary_step(summarize(s))`.
///
/// Each component's error is measured relative to the magnitude it is
/// computed from in parameter space: `|aᵀb| + Φ` for `ε`, `λ` for `λ`, and
/// `aᵢ² + bᵢ²` for `Qᵢ`. A component that cancels to near zero (for instance
/// `ε'` at `η ≈ η₁`) carries an absolute rounding error of that size in the
/// reference itself, so error relative to the component alone is reported
/// but not asserted.
pub fn verify_commutation(state: &ParamStateF64, hp: &HyperParamsF64) -> Verdict {
    const CHECK: &str = "step-commutation";
    const CLAIM: &str = "summary of gd_step equals the (eps, lambda, Q) one-step maps";
    let next = match gd_step(state, hp) {
        Ok(n) => n,
        Err(e) => return Verdict::skipped(CHECK, CLAIM, format!("gd_step failed: {e}")),
    };
    let reference = summarize(&next, hp.phi);
    let mapped = match summary_step(&summarize(state, hp.phi), hp) {
        Ok(m) => m,
        Err(e) => return Verdict::checked(CHECK, CLAIM, false, f64::NEG_INFINITY, json!({ "error": e.to_string() })),
    };

    let rel = |x: f64, y: f64, scale: f64| (x - y).abs() / scale.max(f64::MIN_POSITIVE);
    let naive = |x: f64, y: f64| (x - y).abs() / x.abs().max(f64::MIN_POSITIVE);
    let e_res = rel(mapped.residual(), reference.residual(), reference.product().abs() + hp.phi);
    let e_scale = rel(mapped.scale(), reference.scale(), reference.scale());
    let mut e_q = 0.0f64;
    let mut naive_worst = naive(reference.residual(), mapped.residual()).max(naive(reference.scale(), mapped.scale()));
    for (i, (&qm, &qr)) in mapped.imbalances().iter().zip(reference.imbalances()).enumerate() {
        let mag = next.a()[i].powi(2) + next.b()[i].powi(2);
        e_q = e_q.max(rel(qm, qr, mag));
        if qr != 0.0 {
            naive_worst = naive_worst.max(naive(qr, qm));
        }
    }
    let worst = e_res.max(e_scale).max(e_q);
    Verdict::checked(
        CHECK,
        CLAIM,
        worst <= COMMUTATION_TOL,
        COMMUTATION_TOL - worst,
        json!({
            "residual_err": e_res,
            "scale_err": e_scale,
            "imbalance_err": e_q,
            "componentwise_relative_err": naive_worst,
        }),
    )
}

/// Tolerance for the exact-threshold cases of [`verify_threshold_lemma`].
pub const THRESHOLD_TOL: f64 = 1e-10;

/// One GD step at step sizes around the thresholds of `state`:
/// just below `η₁` keeps the residual sign, `(η₁, η₂)` flips it and shrinks
/// `|ε|`, `η₁` zeroes it and `η₂` negates it.
pub fn verify_threshold_lemma(state: &ParamStateF64, phi: f64) -> Verdict {
    const CHECK: &str = "threshold-lemma";
    const CLAIM: &str =
        "eta < eta1 keeps sign eps; eta1 < eta < eta2 flips it with |eps(1)| < |eps(0)|; eta1 zeroes eps; eta2 negates it";
    let s = summarize(state, phi);
    let eps0 = s.residual();
    if eps0 == 0.0 {
        return Verdict::skipped(CHECK, CLAIM, "eps(0) = 0");
    }
    let th = thresholds(&s, s.scale(), phi);
    let Some(eta1) = th.eta1 else {
        return Verdict::skipped(CHECK, CLAIM, "no positive eta1");
    };
    let step = |eta: f64| -> Option<f64> {
        let hp = HyperParams::new(phi, eta).ok()?;
        gd_step(state, &hp).ok().map(|n| n.residual(phi))
    };

    let mut failures = Vec::new();
    let mut margin = f64::INFINITY;

    let below = eta1 * (1.0 - 1e-4);
    match step(below) {
        Some(e1) if e1 * eps0 > 0.0 => {}
        other => failures.push(json!({ "case": "below-eta1", "eta": below, "eps1": other })),
    }

    let at1 = step(eta1).unwrap_or(f64::INFINITY);
    margin = margin.min(THRESHOLD_TOL - at1.abs());
    if !(at1.abs() <= THRESHOLD_TOL) {
        failures.push(json!({ "case": "at-eta1", "eta": eta1, "eps1": at1 }));
    }

    if let Some(eta2) = th.eta2 {
        let mid = 0.5 * (eta1 + eta2);
        match step(mid) {
            Some(e1) if e1 * eps0 < 0.0 && e1.abs() < eps0.abs() => {}
            other => failures.push(json!({ "case": "between", "eta": mid, "eps1": other })),
        }
        let at2 = step(eta2).unwrap_or(f64::INFINITY);
        let err = (at2 + eps0).abs();
        margin = margin.min(THRESHOLD_TOL - err);
        if !(err <= THRESHOLD_TOL) {
            failures.push(json!({ "case": "at-eta2", "eta": eta2, "eps1": at2 }));
        }
    }
    Verdict::checked(
        CHECK,
        CLAIM,
        failures.is_empty(),
        margin,
        json!({ "eps0": eps0, "eta1": eta1, "eta2": th.eta2, "failures": failures }),
    )
}
