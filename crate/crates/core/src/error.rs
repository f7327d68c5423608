use alloc::string::String;

pub type Result<T> = core::result::Result<T, LabError>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LabError {
    /// A point does not belong to the space an operation was declared on.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    /// A chain-rule step or answer left the representation space.
    #[error("trajectory error at step {step}: {reason}")]
    Trajectory { step: usize, reason: String },
    #[error("regime error: {0}")]
    Regime(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl LabError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        LabError::Domain(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        LabError::Parameter(msg.into())
    }
}
