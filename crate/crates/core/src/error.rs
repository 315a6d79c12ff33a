use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("point count {0} is not a power of two (at least 256 required)")]
    NonPowerOfTwo(usize),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("shape mismatch: expected {expected} samples, got {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("operator has no negative eigenvalue (lowest value {lowest:.3e})")]
    NoNegativeEigenvalue { lowest: f64 },

    #[error("{solver} did not converge: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence {
        solver: &'static str,
        residual: f64,
        iterations: usize,
    },

    #[error("potential is not localized: |W| = {max_tail:.3e} on the outer tenth of the box")]
    PotentialNotLocalized { max_tail: f64 },

    #[error("non-finite sample encountered at t = {t}")]
    NonFiniteSample { t: f64 },

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("insufficient samples: need {needed}, have {available}")]
    InsufficientSamples { needed: usize, available: usize },

    #[error("horizon mismatch: reference covers [0, {reference}], run needs [0, {required}]")]
    HorizonMismatch { reference: f64, required: f64 },

    #[error("at t = {t}: {source}")]
    At {
        t: f64,
        #[source]
        source: Box<LabError>,
    },

    #[error("malformed field data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LabError {
    /// Attach the simulation time at which a stage failed.
    pub fn at(self, t: f64) -> Self {
        match self {
            e @ LabError::At { .. } => e,
            e => LabError::At { t, source: Box::new(e) },
        }
    }

    /// The underlying error, with any time annotation stripped.
    pub fn root(&self) -> &LabError {
        match self {
            LabError::At { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
