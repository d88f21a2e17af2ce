use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("lookup error: {0}")]
    Lookup(String),
    #[error("incomplete grid: {0}")]
    IncompleteGrid(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("scheduling error: {0}")]
    Scheduling(String),
    #[error("dpb simulation error: {0}")]
    Simulation(String),
    #[error("decode error at byte {offset}: {msg}")]
    Decode { offset: u64, msg: String },
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn decode(offset: u64, msg: impl Into<String>) -> Self {
        Error::Decode {
            offset,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
