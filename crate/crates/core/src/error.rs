use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("not a probability distribution: {0}")]
    NotAProbability(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid distance table: {0}")]
    InvalidDistance(String),
    #[error("lifted MDP needs {required} states, above the cap of {cap}")]
    LiftTooLarge { required: usize, cap: usize },
    #[error("loss diverged to {loss} at step {step}")]
    Diverged { step: usize, loss: f64 },
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::ShapeMismatch(msg.into())
}
