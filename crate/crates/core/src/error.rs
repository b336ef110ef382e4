use thiserror::Error;

use crate::analysis::SectionPointSet;
use crate::integrator::Trajectory;
use crate::lyapunov::LyapunovRecord;

/// Why an integration stopped early.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    /// The controller asked for a step below `h_min`.
    StepUnderflow,
    /// The state or its derivative stopped being finite.
    NonFinite,
}

impl std::fmt::Display for FailureReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FailureReason::StepUnderflow => write!(f, "step size underflow"),
            FailureReason::NonFinite => write!(f, "non-finite state"),
        }
    }
}

/// Whatever was computed before a numerical failure.
#[derive(Debug, Clone)]
pub enum Partial {
    Full(Trajectory<4>),
    Reduced(Trajectory<3>),
    Lyapunov(LyapunovRecord),
    Section(SectionPointSet),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    Parameter(String),

    #[error("invalid integrator configuration: {0}")]
    Config(String),

    #[error("singular inertia matrix (det = {det:e}); parameters must be invalid")]
    SingularInertia { det: f64 },

    #[error("integration failed at t = {t}: {reason}")]
    Integration {
        t: f64,
        reason: FailureReason,
        partial: Option<Box<Partial>>,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Integration { .. } | Error::SingularInertia { .. })
    }

    pub fn partial(&self) -> Option<&Partial> {
        match self {
            Error::Integration { partial, .. } => partial.as_deref(),
            _ => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
