//! Convergence speed: the explicit step-count bound, per-region contraction,
//! the λ ceiling, the α decrement and the slow edge-of-stability branch.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::trajectory::{RunStatus, TrajectoryRecord};
use super::verdict::Verdict;
use crate::error::Result;
use crate::model::gd_step;
use crate::summary::{alpha_decrement, thresholds, RegionLabel};
use crate::{HyperParamsF64, ParamStateF64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// First `t` with `L ≤ δ`; the last recorded step when not converged.
    pub steps_t: usize,
    pub status: RunStatus,
    /// `argmin_t λ(t)` (first occurrence).
    pub tau: usize,
    pub q_at_tau: f64,
    /// `min_t λ(t)`.
    pub mu_estimate: f64,
    /// Geometric mean of `|ε(t+1)/ε(t)|` over `τ ≤ t < T`; 1 when `T = τ`.
    pub measured_rate: f64,
    pub bounds: Vec<Verdict>,
}

/// Builds the report and attaches every applicable bound check.
pub fn convergence_report(tr: &TrajectoryRecord) -> ConvergenceReport {
    let (tau, mu) = tr
        .steps
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, s)| if s.scale() < acc.1 { (i, s.scale()) } else { acc });
    let steps_t = tr.last().t;
    let measured_rate = if steps_t > tau {
        let e_tau = tr.steps[tau].residual().abs();
        let e_t = tr.last().residual().abs();
        (e_t / e_tau).powf(1.0 / (steps_t - tau) as f64)
    } else {
        1.0
    };
    let mut report = ConvergenceReport {
        steps_t,
        status: tr.status,
        tau,
        q_at_tau: tr.steps[tau].summary.total_imbalance(),
        mu_estimate: mu,
        measured_rate,
        bounds: Vec::new(),
    };
    let speed = verify_speed_bound(&report, tr);
    report.bounds = vec![speed, verify_contraction(tr), verify_lambda_bound(tr), verify_alpha_decrement(tr)];
    report
}

/// `τ + ln 2/(η·min{Q(τ), 2Φ}) + 2 + (ln(Φ/2) − ln δ)/(η·min{Q(τ), Φ})`.
///
/// Infinite when `Q(τ) = 0` or `Φ = 0`.
pub fn speed_bound(report: &ConvergenceReport, phi: f64, delta: f64, eta: f64) -> f64 {
    let q = report.q_at_tau;
    if q <= 0.0 || phi <= 0.0 {
        return f64::INFINITY;
    }
    report.tau as f64
        + std::f64::consts::LN_2 / (eta * q.min(2.0 * phi))
        + 2.0
        + ((phi / 2.0).ln() - delta.ln()) / (eta * q.min(phi))
}

pub fn verify_speed_bound(report: &ConvergenceReport, tr: &TrajectoryRecord) -> Verdict {
    const CHECK: &str = "speed-bound";
    const CLAIM: &str = "T <= tau + ln2/(eta min{Q(tau),2phi}) + 2 + (ln(phi/2) - ln delta)/(eta min{Q(tau),phi})";
    let (phi, eta, delta) = (tr.phi(), tr.eta(), tr.delta);
    if report.status != RunStatus::Converged {
        return Verdict::skipped(CHECK, CLAIM, format!("run status {}", report.status));
    }
    let s0 = &tr.initial().summary;
    let cap = thresholds(s0, s0.scale(), phi).theorem_cap;
    if !(eta < cap) {
        return Verdict::skipped(CHECK, CLAIM, format!("eta {eta} >= cap {cap}"));
    }
    if report.steps_t == 0 {
        return Verdict::checked(CHECK, CLAIM, true, 0.0, json!({ "T": 0, "vacuous": "starts converged" }));
    }
    if report.q_at_tau == 0.0 || phi == 0.0 {
        return Verdict::not_applicable(CHECK, CLAIM, "Q(tau) = 0 or phi = 0: bound is infinite");
    }
    let bound = speed_bound(report, phi, delta, eta);
    let t = report.steps_t as f64;
    Verdict::checked(
        CHECK,
        CLAIM,
        t <= bound,
        bound - t,
        json!({ "T": report.steps_t, "bound": bound, "tau": report.tau, "Q_at_tau": report.q_at_tau }),
    )
}

/// Per-step residual contraction in region A and in the part of region B
/// with `ε ∈ (−Φ/2, 0)`.
///
/// The bound is applied to the signed factor `ε(t+1)/ε(t)`. For large `ηλ` a
/// region-A step overshoots past zero and `|ε(t+1)/ε(t)|` can exceed the bound
/// even though the step made progress; such steps are counted in
/// `overshoot_steps` and in `abs_form_violations` but do not fail the check.
pub fn verify_contraction(tr: &TrajectoryRecord) -> Verdict {
    const CHECK: &str = "region-contraction";
    const CLAIM: &str =
        "region A: eps(t+1)/eps(t) <= 1 - (2-sqrt2)/2 eta lambda(t); region B, -phi/2 < eps < 0: <= 1 - eta phi + eta^2 phi^2/4";
    let (phi, eta) = (tr.phi(), tr.eta());
    let two_over_bar = 2.0 / tr.lambda_bar();
    let c_a = (2.0 - std::f64::consts::SQRT_2) / 2.0;
    let b_bound = 1.0 - eta * phi + eta * eta * phi * phi / 4.0;

    let (mut checked_a, mut checked_b, mut overshoot, mut abs_bad) = (0usize, 0usize, 0usize, 0usize);
    let mut worst = f64::INFINITY;
    for (now, next) in tr.transitions() {
        let eps = now.residual();
        if eps == 0.0 || eta > (std::f64::consts::SQRT_2 / eps.abs()).min(two_over_bar) {
            continue;
        }
        let bound = match now.region {
            RegionLabel::A => {
                checked_a += 1;
                1.0 - c_a * eta * now.scale()
            }
            RegionLabel::B if eps > -phi / 2.0 => {
                checked_b += 1;
                b_bound
            }
            _ => continue,
        };
        let f = next.residual() / eps;
        // One rounding of ε(t+1) relative to |ε(t)|.
        let slack = 8.0 * f64::EPSILON * (1.0 + now.scale() * eta);
        worst = worst.min(bound - f + slack);
        if f < 0.0 {
            overshoot += 1;
        }
        if f.abs() > bound + slack {
            abs_bad += 1;
        }
    }
    if checked_a + checked_b == 0 {
        return Verdict::skipped(CHECK, CLAIM, "no region-A or small-residual region-B step in range");
    }
    Verdict::checked(
        CHECK,
        CLAIM,
        worst >= 0.0,
        worst,
        json!({
            "checked_a": checked_a,
            "checked_b": checked_b,
            "overshoot_steps": overshoot,
            "abs_form_violations": abs_bad,
        }),
    )
}

/// `max_t λ(t) ≤ √(λ(0)² + 4Φ²)` when `η ≤ 1/|ε(0)|` and `|ε|` never grows.
pub fn verify_lambda_bound(tr: &TrajectoryRecord) -> Verdict {
    const CHECK: &str = "lambda-ceiling";
    const CLAIM: &str = "max_t lambda(t) <= sqrt(lambda(0)^2 + 4 phi^2) when |eps(t)| is non-increasing";
    let eps0 = tr.initial().residual();
    if eps0 != 0.0 && tr.eta() > 1.0 / eps0.abs() {
        return Verdict::skipped(CHECK, CLAIM, "eta > 1/|eps(0)|");
    }
    if let Some((t, _)) = tr
        .transitions()
        .enumerate()
        .find(|(_, (a, b))| b.residual().abs() > a.residual().abs())
    {
        return Verdict::skipped(CHECK, CLAIM, format!("|eps| grows at step {t}"));
    }
    let bar = tr.lambda_bar();
    let max_scale = tr.steps.iter().map(|s| s.scale()).fold(f64::NEG_INFINITY, f64::max);
    let max_product = tr.steps.iter().map(|s| s.summary.product()).fold(f64::NEG_INFINITY, f64::max);
    let margin = bar + 1e-9 - max_scale;
    Verdict::checked(
        CHECK,
        CLAIM,
        margin >= 0.0,
        margin,
        json!({ "max_lambda": max_scale, "lambda_bar": bar, "max_product": max_product, "phi": tr.phi() }),
    )
}

/// Closed-form `α(t+1) − α(t)` against the recorded `α` values.
///
/// The recorded difference carries rounding of order `ε_mach·α`, so the
/// tolerance is `1e-9·|Δα| + 64·ε_mach·max(α(t), α(t+1))`.
pub fn verify_alpha_decrement(tr: &TrajectoryRecord) -> Verdict {
    const CHECK: &str = "alpha-decrement";
    const CLAIM: &str = "alpha(t+1) - alpha(t) = -eta^2 eps^2 (lambda^2 - 4p^2)(2 - eta^2 eps^2)";
    let hp = &tr.hyper;
    let mut worst = f64::INFINITY;
    let mut worst_rel = 0.0f64;
    let mut n = 0usize;
    for (now, next) in tr.transitions() {
        let closed = alpha_decrement(&now.summary, hp);
        let brute = next.alpha - now.alpha;
        let tol = 1e-9 * closed.abs() + 64.0 * f64::EPSILON * now.alpha.abs().max(next.alpha.abs());
        let err = (brute - closed).abs();
        worst = worst.min(tol - err);
        if closed != 0.0 {
            worst_rel = worst_rel.max(err / closed.abs());
        }
        n += 1;
    }
    if n == 0 {
        return Verdict::skipped(CHECK, CLAIM, "no transitions");
    }
    Verdict::checked(CHECK, CLAIM, worst >= 0.0, worst, json!({ "steps": n, "worst_relative_error": worst_rel }))
}

/// `|ε(2)|/|ε(0)|` for two GD steps from `state`.
pub fn two_step_ratio(state: &ParamStateF64, hp: &HyperParamsF64) -> Result<f64> {
    let e0 = state.residual(hp.phi);
    let s2 = gd_step(&gd_step(state, hp)?, hp)?;
    Ok(s2.residual(hp.phi).abs() / e0.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::trajectory::record_trajectory;
    use crate::{HyperParams, ParamState};

    fn run(a: f64, b: f64, phi: f64, eta: f64, delta: f64) -> TrajectoryRecord {
        let init = ParamState::scalar(a, b).unwrap();
        record_trajectory(&init, &HyperParams::new(phi, eta).unwrap(), delta, 1_000_000)
    }

    #[test]
    fn speed_bound_formula() {
        let report = ConvergenceReport {
            steps_t: 10,
            status: RunStatus::Converged,
            tau: 3,
            q_at_tau: 2.0,
            mu_estimate: 2.0,
            measured_rate: 0.5,
            bounds: vec![],
        };
        let b = speed_bound(&report, 1.0, 1e-10, 0.05);
        // min{Q(τ), 2Φ} = 2 and min{Q(τ), Φ} = 1.
        let want = 3.0 + 2f64.ln() / 0.1 + 2.0 + (0.5f64.ln() + 10.0 * 10f64.ln()) / 0.05;
        assert!((b - want).abs() < 1e-9);
        let zero_q = ConvergenceReport { q_at_tau: 0.0, ..report };
        assert!(speed_bound(&zero_q, 1.0, 1e-10, 0.05).is_infinite());
    }

    #[test]
    fn scalar_run_meets_all_bounds() {
        let tr = run(2.0, 1.0, 1.0, 0.1, 1e-12);
        let r = convergence_report(&tr);
        assert_eq!(r.status, RunStatus::Converged);
        assert!(r.measured_rate > 0.0 && r.measured_rate <= 1.0);
        assert!(tr.steps.iter().all(|s| r.mu_estimate <= s.scale()));
        for v in &r.bounds {
            assert!(!v.is_violation(), "{v:?}");
        }
        assert!(r.bounds[1].pass && r.bounds[2].pass);
    }

    #[test]
    fn first_contraction_step_example() {
        // ε=1, λ=5, Φ=1, η=0.1: ratio 0.52 against 1 − (2−√2)/2·0.5 ≈ 0.8536.
        let tr = run(2.0, 1.0, 1.0, 0.1, 1e-12);
        let f = tr.steps[1].residual() / tr.steps[0].residual();
        assert!((f - 0.52).abs() < 1e-12);
        let bound = 1.0 - (2.0 - std::f64::consts::SQRT_2) / 2.0 * 0.1 * 5.0;
        assert!((bound - 0.853553).abs() < 1e-6);
        assert!(verify_contraction(&tr).pass);
    }

    #[test]
    fn region_b_start_lambda_grows_under_ceiling() {
        let tr = run(0.5, 0.5, 1.0, 0.1, 1e-12);
        let v = verify_lambda_bound(&tr);
        assert!(v.preconditions_ok && v.pass, "{v:?}");
        assert!(tr.steps[1].scale() > tr.steps[0].scale());
        assert!(v.details["max_lambda"].as_f64().unwrap() <= 5f64.sqrt());
        assert!(verify_contraction(&tr).pass);
    }

    #[test]
    fn minimizer_start_is_vacuous() {
        let tr = run(1.0, 1.0, 1.0, 0.1, 1e-12);
        let r = convergence_report(&tr);
        assert_eq!(r.steps_t, 0);
        assert!(r.bounds[0].pass);
        assert!(verify_lambda_bound(&tr).pass);
    }

    #[test]
    fn alpha_decrement_matches_recorded() {
        let tr = run(3.0, -0.5, 1.0, 0.05, 1e-12);
        let v = verify_alpha_decrement(&tr);
        assert!(v.pass, "{v:?}");
    }

    #[test]
    fn eos_slow_branch() {
        // ε = 1e-3, λ = 4, Φ = 1 in one dimension.
        let (eps, lam, phi) = (1e-3f64, 4.0f64, 1.0f64);
        let p = phi + eps;
        let (u, v) = ((lam + 2.0 * p).sqrt(), (lam - 2.0 * p).sqrt());
        let state = ParamState::scalar((u + v) / 2.0, (u - v) / 2.0).unwrap();
        let slow = two_step_ratio(&state, &HyperParams::new(phi, 2.0 / lam).unwrap()).unwrap();
        let fast = two_step_ratio(&state, &HyperParams::new(phi, 0.1).unwrap()).unwrap();
        assert!(slow > 0.99, "{slow}");
        assert!(fast < 0.8, "{fast}");
    }
}
