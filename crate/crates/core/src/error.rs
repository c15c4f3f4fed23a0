use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {actual}")]
    Shape {
        op: &'static str,
        expected: String,
        actual: String,
    },

    #[error("{0}: sequence must not be empty")]
    EmptySequence(&'static str),

    #[error("video has no frames")]
    EmptyVideo,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("video {video_id}: expected {expected} labels, got {actual}")]
    LabelCount {
        video_id: String,
        expected: usize,
        actual: usize,
    },

    #[error("label score {0} is outside [0, 1]")]
    LabelRange(f64),

    #[error("{}: byte {offset}: {reason}", path.display())]
    Format {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    #[error("dimension mismatch across dataset: {0}")]
    DatasetDims(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown model variant `{0}`")]
    UnknownVariant(String),

    #[error("trace does not belong to this model/video: {0}")]
    StaleTrace(String),

    #[error("non-finite loss at epoch {epoch}, video {video_id}: {value}")]
    NonFinite {
        epoch: usize,
        video_id: String,
        value: f64,
    },

    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            op,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
