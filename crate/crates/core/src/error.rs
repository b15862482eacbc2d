use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("shape mismatch in {what}: expected {expected}, got {actual}")]
    Shape {
        what: &'static str,
        expected: String,
        actual: String,
    },

    #[error("system is rank deficient: numerical rank {rank} of {cols} columns")]
    RankDeficient { rank: usize, cols: usize },

    #[error("non-finite activation in {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("zero total energy: {0}")]
    ZeroEnergy(&'static str),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("snapshot refused: verdict is {0}")]
    SnapshotRefused(crate::srs::Verdict),

    #[error("malformed file at byte offset {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("config hash mismatch: {left} does not match {right}")]
    HashMismatch { left: String, right: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(what: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            what,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
