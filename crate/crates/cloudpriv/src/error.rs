use std::path::PathBuf;

use cloudpriv_core::Error as CoreError;

/// Failure of a command, carrying its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("infeasible budget: {0}")]
    Infeasible(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("privacy loss increases along the sweep: {0}")]
    SweepNotMonotone(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Verification(_) => 1,
            Self::InvalidConfig(_) => 2,
            Self::Infeasible(_) => 3,
            Self::Solver(_) => 4,
            Self::SweepNotMonotone(_) => 5,
            Self::Write { .. } => 6,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::InvalidConfig(_) => "invalid_config",
            Self::Infeasible(_) => "infeasible",
            Self::Solver(_) => "solver_failure",
            Self::SweepNotMonotone(_) => "sweep_not_monotone",
            Self::Verification(_) => "verification_failed",
            Self::Write { .. } => "write_failed",
        }
    }

    /// One JSON object on one line, for the diagnostic stream.
    pub fn diagnostic_line(&self) -> String {
        serde_json::json!({ "exitCode": self.exit_code(), "kind": self.kind(), "message": self.to_string() }).to_string()
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Infeasible(msg) => Self::Infeasible(msg),
            CoreError::MaxIterations { .. }
            | CoreError::NumericalBreakdown(_)
            | CoreError::SingularInnovation { .. }
            | CoreError::SingularInnovationCovariance { .. }
            | CoreError::NegativeIncrement { .. }
            | CoreError::IllConditioned(_) => Self::Solver(e.to_string()),
            other => Self::InvalidConfig(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
