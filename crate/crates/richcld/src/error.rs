use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("point {point:?} lies outside the box")]
    OutOfDomain { point: Vec<f64> },
    #[error("action {action:?} lies outside the action box at layer {h}")]
    ActionOutOfBox { h: usize, action: Vec<f64> },
    #[error("layer {h} outside 1..={max}")]
    LayerOutOfRange { h: usize, max: usize },
    #[error("unknown maze layout `{0}`")]
    UnknownLayout(String),
    #[error("version space became empty at round {round}; beta is too small")]
    EmptyVersionSpace { round: usize },
    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid_param(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn invalid_input(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
