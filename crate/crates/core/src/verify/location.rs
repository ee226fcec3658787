//! Where GD converges: the imbalance sandwich and the behaviour of each `Qᵢ`.

use serde_json::json;

use super::trajectory::{RunStatus, TrajectoryRecord};
use super::verdict::Verdict;

/// Relative allowance per recorded step for comparisons that are strict on paper
/// but evaluated through accumulated binary64 products.
pub const ROUNDING_PER_STEP: f64 = 4.0 * f64::EPSILON;

const LOCATION: &str = "location-bounds";
const LOCATION_CLAIM: &str =
    "GD limit imbalance: |Qi(0)| exp(-sqrt(eta) eps0^2/phi) < |Qi(inf)| < |Qi(0)| exp(-eta^2 sum eps^2) < |Qi(0)|";

/// Upper estimate of `Σ_{t ≥ T} ε(t)²` from the geometric decay at the end of the run.
pub fn tail_sum_sq(tr: &TrajectoryRecord) -> f64 {
    let n = tr.steps.len();
    let eps_t = tr.last().residual();
    if eps_t == 0.0 {
        return 0.0;
    }
    let window = n.saturating_sub(1).min(8);
    if window == 0 {
        return f64::INFINITY;
    }
    let rho = tr.steps[n - 1 - window..]
        .windows(2)
        .map(|w| (w[1].residual() / w[0].residual()).abs())
        .fold(0.0f64, f64::max);
    if rho < 1.0 {
        eps_t * eps_t / (1.0 - rho * rho)
    } else {
        f64::INFINITY
    }
}

/// Checks the per-coordinate imbalance sandwich at the end of a converged run.
///
/// `Qᵢ(∞)` is not observable, so each side uses the conservative proxy: the
/// upper bound is checked on `|Qᵢ(T)|`, which can only exceed `|Qᵢ(∞)|`, and the
/// lower bound on `|Qᵢ(T)|·(1 − η²·tail)` with `tail` from [`tail_sum_sq`].
pub fn verify_location_bounds(tr: &TrajectoryRecord) -> Verdict {
    let phi = tr.phi();
    let eta = tr.eta();
    let s0 = &tr.initial().summary;
    let eps0 = s0.residual();

    if tr.status != RunStatus::Converged {
        return Verdict::skipped(LOCATION, LOCATION_CLAIM, format!("run status {}", tr.status));
    }
    if phi <= 0.0 {
        return Verdict::not_applicable(LOCATION, LOCATION_CLAIM, "phi = 0: lower bound undefined");
    }
    if eps0 == 0.0 {
        return Verdict::skipped(LOCATION, LOCATION_CLAIM, "starts on the minimizer set");
    }
    let cap = (0.5 / eps0.abs()).min(2.0 / tr.lambda_bar());
    if eta >= cap {
        return Verdict::skipped(LOCATION, LOCATION_CLAIM, format!("eta {eta} >= cap {cap}"));
    }
    if s0.total_imbalance() == 0.0 {
        return Verdict::checked(LOCATION, LOCATION_CLAIM, true, 0.0, json!({ "vacuous": "Q(0) = 0" }));
    }

    let big_t = tr.steps.len() - 1;
    let sum_sq: f64 = tr.steps[..big_t].iter().map(|s| s.residual().powi(2)).sum();
    let tail = tail_sum_sq(tr);
    let tail_factor = (1.0 - eta * eta * tail).max(0.0);
    let slack = ROUNDING_PER_STEP * (big_t as f64 + 1.0);
    let lower_factor = (-(eta.sqrt()) * eps0 * eps0 / phi).exp();
    let upper_factor = (-eta * eta * sum_sq).exp();

    let mut lower_margin = f64::INFINITY;
    let mut upper_margin = f64::INFINITY;
    let mut coords = Vec::new();
    let q_final = tr.last().summary.imbalances();
    for (i, (&q0, &qt)) in s0.imbalances().iter().zip(q_final).enumerate() {
        let (q0, qt) = (q0.abs(), qt.abs());
        if q0 == 0.0 {
            continue;
        }
        let lower = q0 * lower_factor;
        let upper = q0 * upper_factor;
        let q_inf_low = qt * tail_factor;
        // Upper side also needs exp(−η²Σε²) < 1, i.e. some progress was made.
        let lm = (q_inf_low - lower) / q0;
        let um = ((upper - qt) / q0).min(1.0 - upper_factor);
        lower_margin = lower_margin.min(lm);
        upper_margin = upper_margin.min(um);
        coords.push(json!({ "i": i, "q0": q0, "qT": qt, "lower": lower, "upper": upper }));
    }
    let pass = lower_margin > -slack && upper_margin > -slack;
    Verdict::checked(
        LOCATION,
        LOCATION_CLAIM,
        pass,
        lower_margin.min(upper_margin),
        json!({
            "T": big_t,
            "lower_margin": lower_margin,
            "upper_margin": upper_margin,
            "sum_eps_sq": sum_sq,
            "q0_total": s0.total_imbalance(),
            "saddle_scale": 2.0 * eta.sqrt() * phi,
            "tail_estimate": tail,
            "coords": coords,
        }),
    )
}

/// Each `|Qᵢ|` is non-increasing on steps with `η|ε| < √2`, and decreases
/// whenever the exact shrink `|Qᵢ|·η²ε²` is larger than the rounding of
/// `aᵢ² − bᵢ²` (a few ulps of `aᵢ² + bᵢ²` at both ends of the step).
pub fn verify_monotone_imbalance(tr: &TrajectoryRecord) -> Verdict {
    const CHECK: &str = "monotone-imbalance";
    const CLAIM: &str = "|Qi| shrinks by |1 - eta^2 eps^2| < 1 whenever eta |eps| < sqrt(2)";
    let eta = tr.eta();
    let mut checked = 0usize;
    let mut worst = f64::INFINITY;
    let mut violations = 0usize;
    for (now, next) in tr.transitions() {
        let x = eta * now.residual().abs();
        if x >= std::f64::consts::SQRT_2 {
            continue;
        }
        let shrink = (1.0 - (1.0 - x * x).abs()).max(0.0);
        for (i, (&q, &q1)) in now.summary.imbalances().iter().zip(next.summary.imbalances()).enumerate() {
            if q == 0.0 {
                continue;
            }
            checked += 1;
            let mag = |s: &super::trajectory::StepRecord| s.param.a()[i].powi(2) + s.param.b()[i].powi(2);
            let rounding = 4.0 * f64::EPSILON * (mag(now) + mag(next));
            let (q, q1) = (q.abs(), q1.abs());
            worst = worst.min((q + rounding - q1) / q);
            let grew = q1 > q + rounding;
            let stalled = q * shrink > rounding && q1 >= q;
            if grew || stalled {
                violations += 1;
            }
        }
    }
    if checked == 0 {
        return Verdict::skipped(CHECK, CLAIM, "no step with eta |eps| < sqrt(2) and Q != 0");
    }
    Verdict::checked(CHECK, CLAIM, violations == 0, worst, json!({ "checked": checked, "violations": violations }))
}

/// Imbalance sign changes are only possible after a step with `η|ε| ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChaosReport {
    /// Some step had `η ≥ 1/|ε(t)|`.
    pub chaotic: bool,
    /// Number of `(t, i)` with `sign Qᵢ(t+1) ≠ sign Qᵢ(t)`.
    pub sign_flips: usize,
}

pub fn chaos_report(tr: &TrajectoryRecord) -> ChaosReport {
    let eta = tr.eta();
    let chaotic = tr.steps.iter().any(|s| eta * s.residual().abs() >= 1.0);
    let sign_flips = tr
        .transitions()
        .map(|(a, b)| {
            a.summary
                .imbalances()
                .iter()
                .zip(b.summary.imbalances())
                .filter(|(&q, &q1)| q * q1 < 0.0)
                .count()
        })
        .sum();
    ChaosReport { chaotic, sign_flips }
}

pub fn verify_chaos_flag(tr: &TrajectoryRecord) -> Verdict {
    let r = chaos_report(tr);
    Verdict::checked(
        "chaos-flag",
        "imbalances keep their sign while eta < 1/|eps(t)| at every step",
        r.chaotic || r.sign_flips == 0,
        0.0,
        json!({ "chaotic": r.chaotic, "sign_flips": r.sign_flips }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::trajectory::record_trajectory;
    use crate::{HyperParams, ParamState};

    #[test]
    fn scalar_sandwich_holds() {
        let init = ParamState::scalar(2.0, 1.0).unwrap();
        let tr = record_trajectory(&init, &HyperParams::new(1.0, 0.05).unwrap(), 1e-14, 1_000_000);
        let v = verify_location_bounds(&tr);
        assert!(v.preconditions_ok && v.pass, "{v:?}");
        let lower = v.details["coords"][0]["lower"].as_f64().unwrap();
        assert!((lower - 3.0 * (-(0.05f64).sqrt()).exp()).abs() < 1e-12);
        assert!((lower - 2.398888466).abs() < 1e-9);
    }

    #[test]
    fn balanced_start_is_vacuous() {
        let init = ParamState::scalar(2.0, 2.0).unwrap();
        let tr = record_trajectory(&init, &HyperParams::new(1.0, 0.05).unwrap(), 1e-14, 1_000_000);
        let v = verify_location_bounds(&tr);
        assert!(v.pass && v.preconditions_ok);
        assert_eq!(tr.last().summary.imbalances()[0], 0.0);
    }

    #[test]
    fn zero_target_is_not_applicable() {
        let init = ParamState::scalar(2.0, 1.0).unwrap();
        let tr = record_trajectory(&init, &HyperParams::new(0.0, 0.05).unwrap(), 1e-14, 1_000_000);
        let v = verify_location_bounds(&tr);
        assert!(!v.preconditions_ok);
        assert_eq!(v.details["outcome"], "not-applicable");
    }

    #[test]
    fn large_step_fails_precondition_not_bound() {
        let init = ParamState::scalar(2.0, 1.0).unwrap();
        let tr = record_trajectory(&init, &HyperParams::new(1.0, 0.4).unwrap(), 1e-14, 1_000_000);
        let v = verify_location_bounds(&tr);
        assert!(!v.preconditions_ok && !v.is_violation());
    }

    #[test]
    fn imbalances_shrink_monotonically() {
        let init = ParamState::new(vec![2.0, -0.5], vec![1.0, 0.3]).unwrap();
        let tr = record_trajectory(&init, &HyperParams::new(1.0, 0.1).unwrap(), 1e-14, 1_000_000);
        assert!(verify_monotone_imbalance(&tr).pass);
        let c = chaos_report(&tr);
        assert!(!c.chaotic && c.sign_flips == 0);
    }
}
