//! Gradient descent and gradient flow on the product loss `L(a, b) = ½(aᵀb − Φ)²`.
//!
//! The crate simulates both dynamics, maps them to the reduced coordinates
//! (residual `ε`, scale `λ`, imbalances `Qᵢ`), and turns the known convergence,
//! implicit-regularization and edge-of-stability bounds into executable checks.
//!
//! The dynamics ([`model`], [`summary`], [`flow`]) are generic over [`Scalar`];
//! verifiers and experiments run in `f64` through the aliases below.

pub mod error;
pub mod experiments;
pub mod flow;
pub mod model;
pub mod roots;
pub mod scalar;
pub mod summary;
pub mod verify;

pub use error::{Error, Result};
pub use flow::{gf_limit_prediction, integrate, integrate_with, FlowConfig, FlowLimit, FlowResult, FlowStatus};
pub use model::{gd_step, gf_rhs, loss, sharpness, summarize, HyperParams, ParamState};
pub use scalar::Scalar;
pub use summary::{
    alpha, alpha_decrement, classify_region, imbalance_step, regime, residual_step, scale_step, summary_step,
    thresholds, RegionLabel, Regime, SummaryState, Thresholds,
};

pub type ParamStateF64 = ParamState<f64>;
pub type ParamStateF32 = ParamState<f32>;
pub type HyperParamsF64 = HyperParams<f64>;
pub type HyperParamsF32 = HyperParams<f32>;
pub type SummaryF64 = SummaryState<f64>;
pub type SummaryF32 = SummaryState<f32>;
pub type ThresholdsF64 = Thresholds<f64>;
pub type FlowResultF64 = FlowResult<f64>;
