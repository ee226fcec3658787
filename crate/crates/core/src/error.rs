use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),

    /// A GD step produced a non-finite entry or one above the divergence limit.
    #[error("diverged: step produced |entry| = {max_abs:e}")]
    Diverged { a: Vec<f64>, b: Vec<f64>, max_abs: f64 },

    #[error("power iteration did not converge in {iterations} iterations (Rayleigh quotient {rayleigh})")]
    PowerIteration { iterations: usize, rayleigh: f64 },

    #[error("inconsistent summary: {0}")]
    InconsistentSummary(String),

    #[error("stiff segment at t = {time}: step size {step:e} underflowed")]
    StiffSegment { time: f64, step: f64, a: Vec<f64>, b: Vec<f64> },

    #[error("degenerate design: all inputs are zero")]
    DegenerateDesign,

    #[error("bounding sequence did not exit region C within {steps} steps")]
    SequenceDidNotExit { steps: usize, z: Vec<f64>, w: Vec<f64> },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{0}")]
    Io(String),
}
