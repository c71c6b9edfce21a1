use thiserror::Error;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

/// Every failure the library reports.
///
/// The variants map onto the CLI exit codes: parameter and usage problems are
/// configuration errors (2), numerical and convergence failures are numerical
/// errors (3), and [`LabError::OutOfRegime`] is returned when the parameters are
/// valid but fall outside the regime an experiment is meant for (4).
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure: {message}")]
    Numerical { message: String, seed: Option<u64> },

    #[error("no convergence after {iterations} iterations: {message}")]
    Convergence { message: String, iterations: usize },

    #[error("out of regime: {0}")]
    OutOfRegime(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    pub fn param(msg: impl Into<String>) -> Self {
        LabError::Parameter(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        LabError::Domain(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        LabError::Numerical {
            message: msg.into(),
            seed: None,
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Parameter(_) | LabError::Domain(_) | LabError::Usage(_) | LabError::Json(_) => 2,
            LabError::Numerical { .. } | LabError::Convergence { .. } | LabError::Io(_) => 3,
            LabError::OutOfRegime(_) => 4,
        }
    }

    /// Short machine-readable tag for error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            LabError::Parameter(_) => "parameter",
            LabError::Domain(_) => "domain",
            LabError::Numerical { .. } => "numerical",
            LabError::Convergence { .. } => "convergence",
            LabError::OutOfRegime(_) => "out_of_regime",
            LabError::Usage(_) => "usage",
            LabError::Io(_) => "io",
            LabError::Json(_) => "json",
        }
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 && alpha < 2.0 {
        Ok(())
    } else {
        Err(LabError::param(format!("alpha must lie in (0,2), got {alpha}")))
    }
}
