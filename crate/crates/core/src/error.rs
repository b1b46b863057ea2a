//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any pipeline stage.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or argument failed validation.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Requested a closed-form statistic for a model that has none.
    #[error("no analytic oracle for model `{0}`")]
    NoAnalyticOracle(String),

    /// Requested the stationary law of a model without one.
    #[error("model `{0}` has no stationary law")]
    NoStationaryLaw(String),

    /// A simulated or rolled-out trajectory left the finite floats.
    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },

    /// The reverse ODE produced a non-finite intermediate.
    #[error("non-finite reverse-ODE state at step {step}")]
    NonFiniteOde { step: usize },

    /// Error while generating one labeled sample, tagged with its index.
    #[error("label sample {sample}: {source}")]
    LabelSample {
        sample: usize,
        #[source]
        source: Box<Error>,
    },

    /// Every kernel weight underflowed, even in log space.
    #[error("degenerate weights: all kernel weights underflowed")]
    DegenerateWeights,

    /// Diffusion time outside the unit interval.
    #[error("tau {0} outside [0, 1]")]
    TauOutOfRange(f64),

    /// A binary file failed magic/version/length checks.
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },

    /// Mismatch between declared and observed tensor shapes.
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    /// Training loss left the finite floats.
    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    /// Operation requires a non-empty dataset.
    #[error("empty dataset")]
    EmptyDataset,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
