use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AbfError {
    #[error("domain error: {0}")]
    Domain(String),

    /// A vanishing denominator factor was hit; `location` names the argument.
    #[error("pole at {location}")]
    Pole { location: String },

    #[error("level k={k} not supported: {reason}")]
    Level { k: u32, reason: &'static str },

    #[error("singular entry: {0}")]
    Singular(String),
}

pub type Result<T> = std::result::Result<T, AbfError>;

pub(crate) fn pole(location: impl Into<String>) -> AbfError {
    AbfError::Pole {
        location: location.into(),
    }
}

pub(crate) fn domain(msg: impl Into<String>) -> AbfError {
    AbfError::Domain(msg.into())
}
