//! Randomized verification campaigns.
//!
//! Instance `i` of a campaign draws from its own ChaCha stream `i` under the
//! campaign seed, runs independently, and results are merged by index, so the
//! output does not depend on thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::location::{verify_chaos_flag, verify_location_bounds, verify_monotone_imbalance};
use super::onestep::{verify_commutation, verify_threshold_lemma};
use super::qzero::verify_q_zero_manifolds;
use super::sequence::{bounding_sequence, verify_mu_floor, verify_sequence_domination};
use super::speed::{convergence_report, two_step_ratio, verify_alpha_decrement, verify_contraction, verify_lambda_bound};
use super::trajectory::{record_trajectory, TrajectoryRecord, DEFAULT_MAX_STEPS};
use super::verdict::Verdict;
use crate::experiments::init::{random_init, scalar_from_summary, InitLaw};
use crate::flow::{gf_limit_prediction, integrate};
use crate::model::summarize;
use crate::summary::thresholds;
use crate::{HyperParams, ParamState, ParamStateF64};

/// Aggregated verdicts of one check over a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub check: String,
    #[serde(rename = "paper_ref")]
    pub claim: String,
    pub instances: usize,
    /// Instances whose preconditions held.
    pub applicable: usize,
    pub passed: usize,
    pub worst_margin: Option<f64>,
    /// Up to [`MAX_REPORTED`] failing instances with their details.
    pub failures: Vec<Value>,
    /// A known disagreement between the stated claim and the dynamics; failures
    /// are reported but do not fail the suite.
    pub documented_discrepancy: Option<String>,
}

pub const MAX_REPORTED: usize = 5;

impl CampaignSummary {
    pub fn from_verdicts(check: &str, claim: &str, verdicts: &[Verdict]) -> Self {
        let mut s = Self {
            check: check.into(),
            claim: claim.into(),
            instances: verdicts.len(),
            applicable: 0,
            passed: 0,
            worst_margin: None,
            failures: Vec::new(),
            documented_discrepancy: None,
        };
        for (i, v) in verdicts.iter().enumerate() {
            if !v.preconditions_ok {
                continue;
            }
            s.applicable += 1;
            if v.pass {
                s.passed += 1;
            } else if s.failures.len() < MAX_REPORTED {
                s.failures.push(json!({ "instance": i, "margin": v.margin, "details": v.details }));
            }
            if let Some(m) = v.margin {
                s.worst_margin = Some(s.worst_margin.map_or(m, |w: f64| w.min(m)));
            }
        }
        s
    }

    /// Groups verdicts by their `check` field, keeping first-seen order.
    pub fn group(verdicts: &[Verdict]) -> Vec<Self> {
        let mut order: Vec<(&str, &str)> = Vec::new();
        for v in verdicts {
            if !order.iter().any(|(c, _)| *c == v.check) {
                order.push((&v.check, &v.claim));
            }
        }
        order
            .into_iter()
            .map(|(c, claim)| {
                let vs: Vec<Verdict> = verdicts.iter().filter(|v| v.check == c).cloned().collect();
                Self::from_verdicts(c, claim, &vs)
            })
            .collect()
    }

    pub fn all_passed(&self) -> bool {
        self.passed == self.applicable
    }

    /// Failed applicable instances count against the suite unless documented.
    pub fn is_failure(&self) -> bool {
        !self.all_passed() && self.documented_discrepancy.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Commutation,
    Flow,
    Location,
    Thresholds,
    Speed,
    Sequence,
    QZero,
    Eos,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 9] =
        ["commutation", "flow", "location", "thresholds", "speed", "sequence", "q-zero", "eos", "all"];

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "commutation" => Suite::Commutation,
            "flow" => Suite::Flow,
            "location" => Suite::Location,
            "thresholds" => Suite::Thresholds,
            "speed" => Suite::Speed,
            "sequence" => Suite::Sequence,
            "q-zero" => Suite::QZero,
            "eos" => Suite::Eos,
            "all" => Suite::All,
            _ => return None,
        })
    }
}

/// Stream `i` of the campaign seed.
pub fn instance_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Random start of dimension `1..=max_d` and scale log-uniform on `[0.5, 10]`.
fn random_start(rng: &mut ChaCha8Rng, max_d: usize, law: InitLaw) -> ParamStateF64 {
    let d = rng.random_range(1..=max_d);
    let scale = log_uniform(rng, 0.5, 10.0);
    random_init(d, scale, law, rng.random()).expect("valid draw")
}

/// `min{1/(2|ε(0)|), 2/λ̄}` for a start.
pub fn theorem_cap(init: &ParamStateF64, phi: f64) -> f64 {
    let s = summarize(init, phi);
    thresholds(&s, s.scale(), phi).theorem_cap
}

fn par_map<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    (0..n).into_par_iter().map(f).collect()
}

/// Random `(state, η, Φ)` with `d ≤ 8`; one step each.
pub fn commutation_campaign(n: usize, seed: u64) -> Vec<CampaignSummary> {
    let verdicts = par_map(n, |i| {
        let mut rng = instance_rng(seed, i);
        let init = random_start(&mut rng, 8, InitLaw::GaussianBalancedFree);
        let phi = rng.random_range(0.0..3.0);
        let eta = log_uniform(&mut rng, 1e-3, 2.0) / init.scale();
        verify_commutation(&init, &HyperParams::new(phi, eta).expect("positive eta"))
    });
    CampaignSummary::group(&verdicts)
}

/// Gradient flow from random starts: conservation of every `Qᵢ` and `α`,
/// and the predicted limit `λ(∞) = √α(0)` with the signs of `Qᵢ` kept.
pub fn flow_campaign(n: usize, seed: u64) -> Vec<CampaignSummary> {
    const CONS: &str = "flow-conservation";
    const CONS_CLAIM: &str = "gradient flow conserves each Qi and alpha (relative drift <= 1e-6)";
    const LIMIT: &str = "flow-limit";
    const LIMIT_CLAIM: &str = "gradient flow limit has lambda = sqrt(alpha(0)) and sign Qi(inf) = sign Qi(0)";
    let verdicts: Vec<[Verdict; 2]> = par_map(n, |i| {
        let mut rng = instance_rng(seed, i);
        let init = random_start(&mut rng, 4, InitLaw::GaussianBalancedFree);
        let phi = rng.random_range(0.5..2.0);
        let s0 = summarize(&init, phi);
        let res = match integrate(&init, phi, 1e-16, 1e6) {
            Ok(r) => r,
            Err(e) => {
                let d = json!({ "error": e.to_string() });
                return [
                    Verdict::checked(CONS, CONS_CLAIM, false, f64::NEG_INFINITY, d.clone()),
                    Verdict::checked(LIMIT, LIMIT_CLAIM, false, f64::NEG_INFINITY, d),
                ];
            }
        };
        let drift = res.max_q_drift.max(res.max_alpha_drift);
        let cons = Verdict::checked(
            CONS,
            CONS_CLAIM,
            drift <= 1e-6,
            1e-6 - drift,
            json!({ "max_q_drift": res.max_q_drift, "max_alpha_drift": res.max_alpha_drift, "status": res.status }),
        );
        let limit = match gf_limit_prediction(&s0, phi) {
            Ok(pred) => {
                let sf = summarize(&res.final_state, phi);
                let rel = (sf.scale() - pred.lambda_inf).abs() / pred.lambda_inf;
                let signs_ok = sf
                    .imbalances()
                    .iter()
                    .zip(&pred.q_signs)
                    .all(|(&q, &s)| (q > 0.0 && s > 0) || (q < 0.0 && s < 0) || (q == 0.0 && s == 0));
                Verdict::checked(
                    LIMIT,
                    LIMIT_CLAIM,
                    rel <= 1e-6 && signs_ok,
                    1e-6 - rel,
                    json!({ "lambda_inf": sf.scale(), "predicted": pred.lambda_inf, "signs_ok": signs_ok }),
                )
            }
            Err(e) => Verdict::skipped(LIMIT, LIMIT_CLAIM, e.to_string()),
        };
        [cons, limit]
    });
    let flat: Vec<Verdict> = verdicts.into_iter().flatten().collect();
    CampaignSummary::group(&flat)
}

/// One GD run with `Φ = 1`, `η = u·min{1/(2|ε(0)|), 2/λ̄}` for `u ∈ [0.05, 0.95]`.
pub fn theorem_range_run(seed: u64, i: usize, delta: f64) -> TrajectoryRecord {
    let mut rng = instance_rng(seed, i);
    let init = random_start(&mut rng, 4, InitLaw::GaussianBalancedFree);
    let phi = 1.0;
    let eta = rng.random_range(0.05..0.95) * theorem_cap(&init, phi);
    let mut tr = record_trajectory(&init, &HyperParams::new(phi, eta).expect("positive eta"), delta, DEFAULT_MAX_STEPS);
    tr.seed = i as u64;
    tr
}

/// Imbalance sandwich, λ ceiling, monotone imbalance, chaos flag, α decrement
/// and region contraction on theorem-range runs with `δ = 1e-12`.
pub fn location_campaign(n: usize, seed: u64) -> Vec<CampaignSummary> {
    let verdicts: Vec<Vec<Verdict>> = par_map(n, |i| {
        let tr = theorem_range_run(seed, i, 1e-12);
        vec![
            verify_location_bounds(&tr),
            verify_lambda_bound(&tr),
            verify_monotone_imbalance(&tr),
            verify_chaos_flag(&tr),
            verify_alpha_decrement(&tr),
            verify_contraction(&tr),
        ]
    });
    let flat = verdicts.concat();
    let mut out = CampaignSummary::group(&flat);
    document_if(&mut out, &flat, "lambda-ceiling", LAMBDA_CEILING_NOTE, explained_by_overshoot);
    document_if(&mut out, &flat, "location-bounds", LOCATION_LOWER_NOTE, |d| {
        let upper_ok = d["upper_margin"].as_f64().is_some_and(|m| m >= 0.0);
        let near_saddle = d["q0_total"].as_f64().zip(d["saddle_scale"].as_f64()).is_some_and(|(q, s)| q < s);
        upper_ok && near_saddle
    });
    out
}

pub const LAMBDA_CEILING_NOTE: &str = "the ceiling follows from lambda^2 <= lambda(0)^2 - 4p(0)^2 + 4p^2 and so needs \
     p <= phi; runs whose residual alternates sign overshoot to p > phi while |eps| still shrinks";

pub const LOCATION_LOWER_NOTE: &str = "the lower imbalance bound can fail for starts near the a = -b manifold \
     (Q(0) < 2 sqrt(eta) phi), where the imbalance is not large enough to carry the argument";

fn explained_by_overshoot(d: &Value) -> bool {
    d["max_product"].as_f64().zip(d["phi"].as_f64()).is_some_and(|(p, phi)| p > phi)
}

/// Marks `check` as a documented discrepancy when every applicable failure
/// matches the known mechanism `explained`; any other failure leaves it unmarked.
fn document_if(out: &mut [CampaignSummary], verdicts: &[Verdict], check: &str, note: &str, explained: impl Fn(&Value) -> bool) {
    let failures: Vec<&Verdict> = verdicts.iter().filter(|v| v.check == check && v.is_violation()).collect();
    if failures.is_empty() || !failures.iter().all(|v| explained(&v.details)) {
        return;
    }
    if let Some(s) = out.iter_mut().find(|s| s.check == check) {
        s.documented_discrepancy = Some(note.into());
    }
}

/// Threshold lemma on random states with `Φ ∈ [0.2, 2]`.
pub fn threshold_campaign(n: usize, seed: u64) -> Vec<CampaignSummary> {
    let verdicts = par_map(n, |i| {
        let mut rng = instance_rng(seed, i);
        let init = random_start(&mut rng, 4, InitLaw::GaussianBalancedFree);
        let phi = rng.random_range(0.2..2.0);
        verify_threshold_lemma(&init, phi)
    });
    CampaignSummary::group(&verdicts)
}

/// Step-count bound (and its companions) on theorem-range runs with `δ = 1e-10`.
pub fn speed_campaign(n: usize, seed: u64) -> Vec<CampaignSummary> {
    let verdicts: Vec<Vec<Verdict>> = par_map(n, |i| convergence_report(&theorem_range_run(seed, i, 1e-10)).bounds);
    let flat = verdicts.concat();
    let mut out = CampaignSummary::group(&flat);
    document_if(&mut out, &flat, "lambda-ceiling", LAMBDA_CEILING_NOTE, explained_by_overshoot);
    out
}

/// Region-C starts against their bounding sequences.
pub fn sequence_campaign(n: usize, seed: u64) -> Vec<CampaignSummary> {
    const CHECK: &str = "sequence-domination";
    let verdicts: Vec<Vec<Verdict>> = par_map(n, |i| {
        let mut rng = instance_rng(seed, i);
        let init = random_start(&mut rng, 4, InitLaw::RegionCForced);
        let phi = 1.0;
        let eta = rng.random_range(0.05..0.95) * theorem_cap(&init, phi);
        let hp = HyperParams::new(phi, eta).expect("positive eta");
        let tr = record_trajectory(&init, &hp, 1e-12, DEFAULT_MAX_STEPS);
        let s0 = &tr.initial().summary;
        let dom = bounding_sequence(s0.residual(), s0.total_imbalance(), &hp, DEFAULT_MAX_STEPS)
            .and_then(|seq| verify_sequence_domination(&tr, &seq))
            .unwrap_or_else(|e| Verdict::skipped(CHECK, "", e.to_string()));
        vec![dom, verify_mu_floor(&tr)]
    });
    let flat = verdicts.concat();
    let mut out = CampaignSummary::group(&flat);
    document_if(&mut out, &flat, "mu-floor", MU_FLOOR_NOTE, |d| d["exit_region"] == "A");
    out
}

pub const MU_FLOOR_NOTE: &str = "the minimum of lambda sits next to the exit from region C only when that exit \
     lands in region B; a step from C straight into region A keeps lambda decreasing";

pub const MIXED_MANIFOLD_NOTE: &str = "on a mixed Q(0)=0 start the a_i = -b_i coordinates are only scaled by \
     prod(1 + eta eps(t)), which converges to a positive constant; they do not vanish";

/// `a = −b`, `a = b` and mixed starts with `Φ = 1`.
pub fn q_zero_campaign(n: usize, seed: u64) -> Vec<CampaignSummary> {
    let outcomes: Vec<(usize, Verdict)> = par_map(3 * n, |i| {
        let mut rng = instance_rng(seed, i);
        let d = rng.random_range(1..=4usize);
        let kind = i % 3;
        let a: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..1.5)).collect();
        let b: Vec<f64> = match kind {
            0 => a.iter().map(|x| -x).collect(),
            1 => a.clone(),
            _ => a.iter().enumerate().map(|(j, x)| if j % 2 == 0 { *x } else { -x }).collect(),
        };
        let (a, b) = if kind == 2 && d == 1 { (vec![a[0], 1.0], vec![b[0], -1.0]) } else { (a, b) };
        let init = ParamState::new(a, b).expect("finite draw");
        let phi = 1.0;
        let s = summarize(&init, phi);
        let eta = 0.5 * (0.5 / s.residual().abs()).min(2.0 / s.scale().max(2.0 * phi));
        let v = verify_q_zero_manifolds(&init, &HyperParams::new(phi, eta).expect("positive eta"), DEFAULT_MAX_STEPS)
            .map(|o| o.verdict)
            .unwrap_or_else(|e| Verdict::skipped("q-zero-manifolds", "", e.to_string()));
        (kind, v)
    });
    let names = ["q-zero-antisymmetric", "q-zero-balanced", "q-zero-mixed"];
    names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let vs: Vec<Verdict> = outcomes.iter().filter(|(kind, _)| *kind == k).map(|(_, v)| v.clone()).collect();
            let claim = vs.first().map(|v| v.claim.clone()).unwrap_or_default();
            let mut s = CampaignSummary::from_verdicts(name, &claim, &vs);
            if k == 2 {
                s.documented_discrepancy = Some(MIXED_MANIFOLD_NOTE.into());
            }
            s
        })
        .collect()
}

/// Two-step residual ratio at `(|ε|, λ, Φ) = (1e-3, 4, 1)`: above 0.99 at
/// `η = 2/λ`, below 0.8 at `η = 0.1`.
pub fn eos_campaign() -> Vec<CampaignSummary> {
    const CHECK: &str = "eos-slow-branch";
    const CLAIM: &str = "near a minimum with eta = 2/lambda, two GD steps shrink |eps| by a factor >= 0.99";
    let state = scalar_from_summary(1e-3, 4.0, 1.0).expect("realizable");
    let ratio = |eta: f64| two_step_ratio(&state, &HyperParams::new(1.0, eta).expect("positive eta"));
    let v = match (ratio(0.5), ratio(0.1)) {
        (Ok(slow), Ok(fast)) => Verdict::checked(
            CHECK,
            CLAIM,
            slow > 0.99 && fast < 0.8,
            (slow - 0.99).min(0.8 - fast),
            json!({ "ratio_eos": slow, "ratio_small_eta": fast }),
        ),
        (a, b) => Verdict::checked(CHECK, CLAIM, false, f64::NEG_INFINITY, json!({ "error": format!("{a:?} {b:?}") })),
    };
    vec![CampaignSummary::from_verdicts(CHECK, CLAIM, &[v])]
}

/// Runs `suite` with `n` instances per randomized campaign.
pub fn run_suite(suite: Suite, n: usize, seed: u64) -> Vec<CampaignSummary> {
    match suite {
        Suite::Commutation => commutation_campaign(n, seed),
        Suite::Flow => flow_campaign(n, seed),
        Suite::Location => location_campaign(n, seed),
        Suite::Thresholds => threshold_campaign(n, seed),
        Suite::Speed => speed_campaign(n, seed),
        Suite::Sequence => sequence_campaign(n, seed),
        Suite::QZero => q_zero_campaign(n, seed),
        Suite::Eos => eos_campaign(),
        Suite::All => [
            Suite::Commutation,
            Suite::Flow,
            Suite::Location,
            Suite::Thresholds,
            Suite::Speed,
            Suite::Sequence,
            Suite::QZero,
            Suite::Eos,
        ]
        .into_iter()
        .flat_map(|s| run_suite(s, n, seed))
        .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_parse() {
        for name in Suite::NAMES {
            assert!(Suite::parse(name).is_some(), "{name}");
        }
        assert_eq!(Suite::parse("nope"), None);
    }

    #[test]
    fn campaigns_are_deterministic() {
        assert_eq!(location_campaign(4, 9), location_campaign(4, 9));
    }

    #[test]
    fn small_suite_runs() {
        let out = run_suite(Suite::All, 3, 1);
        for s in &out {
            assert!(!s.is_failure(), "{s:?}");
        }
    }
}
