use std::fmt;

use lplab::error::LabError;

/// Failure classes of the driver, each with its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Malformed JSON or unknown keys.
    Parse(String),
    /// A well-formed config with an out-of-range value.
    Validation(String),
    /// A solver or integrator failed mid-run.
    Numerical(LabError),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) | CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }

    pub fn invalid(field: &str, reason: impl fmt::Display) -> Self {
        CliError::Validation(format!("{field}: {reason}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse(m) => write!(f, "config parse error: {m}"),
            CliError::Validation(m) => write!(f, "invalid config: {m}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.into())
    }
}

/// Errors that stem from the inputs (bad parameters, a datum violating the
/// spectral assumption, unreadable field files) count as validation
/// failures; everything else is numerical.
impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        match e.root() {
            LabError::NonPowerOfTwo(_)
            | LabError::InvalidParameter { .. }
            | LabError::ShapeMismatch { .. }
            | LabError::AssumptionViolated(_)
            | LabError::Format(_) => CliError::Validation(e.to_string()),
            LabError::Io(_) => match e {
                LabError::Io(io) => CliError::Io(io),
                other => CliError::Io(std::io::Error::other(other.to_string())),
            },
            _ => CliError::Numerical(e),
        }
    }
}
