use serde::{Deserialize, Serialize};

use crate::model::{gd_step, loss, summarize};
use crate::summary::{alpha, classify_region, RegionLabel};
use crate::{HyperParamsF64, ParamStateF64, SummaryF64};

/// Default loss target for "converged".
pub const DEFAULT_DELTA: f64 = 1e-10;
pub const DEFAULT_MAX_STEPS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    Maxsteps,
    Diverged,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::Maxsteps => "maxsteps",
            RunStatus::Diverged => "diverged",
        }
    }
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub param: ParamStateF64,
    pub summary: SummaryF64,
    pub region: RegionLabel,
    pub loss: f64,
    pub alpha: f64,
}

impl StepRecord {
    pub fn new(t: usize, param: ParamStateF64, phi: f64) -> Self {
        let summary = summarize(&param, phi);
        Self {
            t,
            region: classify_region(&summary, phi),
            loss: loss(&param, phi),
            alpha: alpha(&summary, phi),
            summary,
            param,
        }
    }

    pub fn residual(&self) -> f64 {
        self.summary.residual()
    }

    pub fn scale(&self) -> f64 {
        self.summary.scale()
    }
}

/// Every step of one GD run, contiguous from `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub hyper: HyperParamsF64,
    pub delta: f64,
    pub seed: u64,
    pub status: RunStatus,
    pub steps: Vec<StepRecord>,
}

impl TrajectoryRecord {
    pub fn initial(&self) -> &StepRecord {
        &self.steps[0]
    }

    pub fn last(&self) -> &StepRecord {
        self.steps.last().expect("trajectory has at least the initial step")
    }

    /// `T`: first step with `L ≤ δ`, for converged runs.
    pub fn steps_to_converge(&self) -> Option<usize> {
        (self.status == RunStatus::Converged).then(|| self.last().t)
    }

    pub fn phi(&self) -> f64 {
        self.hyper.phi
    }

    pub fn eta(&self) -> f64 {
        self.hyper.eta
    }

    /// `λ̄ = √(λ(0)² + 4Φ²)`.
    pub fn lambda_bar(&self) -> f64 {
        let l0 = self.initial().scale();
        (l0 * l0 + 4.0 * self.phi() * self.phi()).sqrt()
    }

    /// Consecutive step pairs `(t, t + 1)`.
    pub fn transitions(&self) -> impl Iterator<Item = (&StepRecord, &StepRecord)> {
        self.steps.iter().zip(self.steps.iter().skip(1))
    }
}

/// Runs GD without storing the trajectory, handing each visited state to
/// `visit(t, state, summary)`. Returns the final status and the last `t`.
pub fn simulate<F>(init: &ParamStateF64, hp: &HyperParamsF64, delta: f64, max_steps: usize, mut visit: F) -> (RunStatus, usize)
where
    F: FnMut(usize, &ParamStateF64, &SummaryF64),
{
    let mut state = init.clone();
    let mut t = 0;
    loop {
        let s = summarize(&state, hp.phi);
        visit(t, &state, &s);
        let eps = s.residual();
        if 0.5 * eps * eps <= delta {
            return (RunStatus::Converged, t);
        }
        if t >= max_steps {
            return (RunStatus::Maxsteps, t);
        }
        match gd_step(&state, hp) {
            Ok(next) => state = next,
            Err(_) => return (RunStatus::Diverged, t),
        }
        t += 1;
    }
}

/// Iterates GD until `L ≤ δ`, divergence, or `max_steps`, logging every step.
pub fn record_trajectory(init: &ParamStateF64, hp: &HyperParamsF64, delta: f64, max_steps: usize) -> TrajectoryRecord {
    let mut steps = Vec::new();
    let (status, _) = simulate(init, hp, delta, max_steps, |t, p, _| steps.push(StepRecord::new(t, p.clone(), hp.phi)));
    TrajectoryRecord { hyper: *hp, delta, seed: 0, status, steps }
}
