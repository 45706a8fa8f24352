//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A solver or labeling step produced NaN/Inf at a specific cell.
    #[error("non-finite value at step {step}, cell ({i}, {j})")]
    NonFinite { step: usize, i: usize, j: usize },

    /// The spectral density of the sampling kernel underflowed to all-zeros.
    #[error("degenerate kernel: spectral density underflowed to zero")]
    DegenerateKernel,

    /// Downsample target exceeds the dataset size.
    #[error("downsample target {target} exceeds dataset count {count}")]
    TargetTooLarge { target: usize, count: usize },

    /// Sobol generator supports at most 16 dimensions.
    #[error("sobol dimension {dim} exceeds the supported maximum of {max}")]
    DimTooLarge { dim: usize, max: usize },

    /// Rejection sampling exhausted its attempt budget.
    #[error(
        "rejection sampling accepted {accepted}/{requested} stencils in {attempts} attempts \
         (acceptance rate {rate:.4})"
    )]
    AcceptanceTooLow {
        accepted: usize,
        requested: usize,
        attempts: usize,
        rate: f64,
    },

    /// Training loss became NaN/Inf. Carries the last state whose loss was
    /// still finite (None when even the first epoch failed) so a diverged
    /// run is not a total loss.
    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss {
        epoch: usize,
        checkpoint: Option<Box<crate::train::Salvage>>,
    },

    /// Two trajectories or fields disagree in shape.
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },

    /// A constructor precondition was violated.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// A serialized file is malformed.
    #[error("malformed file: {0}")]
    MalformedFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
