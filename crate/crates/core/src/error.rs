use alloc::string::String;

/// Failure modes shared by every solver in the crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GameError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("ill-conditioned linear system (1-norm condition estimate {condition:.3e}, limit {limit:.1e})")]
    IllConditioned { condition: f64, limit: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no unique equilibrium: {0}")]
    NoUniqueEquilibrium(String),
    #[error("invalid bracket: {0}")]
    Bracket(String),
}

pub type Result<T> = core::result::Result<T, GameError>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::GameError::InvalidArgument(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;
