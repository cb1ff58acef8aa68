use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("patch index {index} out of range for grid of {count} patches")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("memory token pools are not initialized; a keyframe must come first")]
    PoolsUninitialized,
    #[error("weights file: {0}")]
    Weights(String),
    #[error("protocol: {0}")]
    Protocol(#[from] crate::protocol::ProtocolError),
    #[error("wire: {0}")]
    Wire(#[from] crate::protocol::WireError),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("image: {0}")]
    Image(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
