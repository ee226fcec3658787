//! Executable checks of the convergence and regularization bounds.
//!
//! Each check returns a [`Verdict`]; a failed precondition is reported as
//! such and never counted as a violated bound.

pub mod location;
pub mod onestep;
pub mod qzero;
pub mod sequence;
pub mod speed;
pub mod suite;
pub mod trajectory;
pub mod verdict;

pub use location::{chaos_report, verify_chaos_flag, verify_location_bounds, verify_monotone_imbalance, ChaosReport};
pub use onestep::{verify_commutation, verify_threshold_lemma};
pub use qzero::{verify_q_zero_manifolds, QZeroManifold, QZeroOutcome};
pub use sequence::{bounding_sequence, verify_mu_floor, verify_sequence_domination, BoundingSequence};
pub use speed::{
    convergence_report, speed_bound, two_step_ratio, verify_alpha_decrement, verify_contraction, verify_lambda_bound,
    verify_speed_bound, ConvergenceReport,
};
pub use suite::{run_suite, CampaignSummary, Suite};
pub use trajectory::{record_trajectory, simulate, RunStatus, StepRecord, TrajectoryRecord, DEFAULT_DELTA, DEFAULT_MAX_STEPS};
pub use verdict::Verdict;
