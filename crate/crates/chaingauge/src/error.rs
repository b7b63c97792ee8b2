use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("alpha must lie in [0, 1/3), got {0}")]
    AlphaOutOfRange(f64),

    #[error("action {action} is not legal in state {state}")]
    IllegalAction { state: String, action: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("policy file does not match the requested instance: {0}")]
    HeaderMismatch(String),

    #[error("model validation failed:\n{0}")]
    Validation(String),

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("no single recurrent class: {0}")]
    Reducible(String),

    #[error("replay found {count} discrepancies, first at view {first_view}: {first}")]
    Replay {
        count: usize,
        first_view: u64,
        first: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
