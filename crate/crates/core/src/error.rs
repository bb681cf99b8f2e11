use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid corpus: dialogue {dialogue_id}, segment {segment_id}: {message}")]
    Invariant {
        dialogue_id: String,
        segment_id: String,
        message: String,
    },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error("unknown segment {dialogue_id}/{segment_id}")]
    UnknownSegment {
        dialogue_id: String,
        segment_id: String,
    },

    #[error("input of {len} positions exceeds max_positions {max}")]
    Overlength { len: usize, max: usize },

    #[error("target segment {segment_id} lasts {duration_s:.3} s, above the {cap_s} s input cap")]
    TargetExceedsCap {
        segment_id: String,
        duration_s: f64,
        cap_s: f64,
    },

    #[error("modality mismatch: {0}")]
    Modality(String),

    #[error("invalid model input: {0}")]
    Model(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("class {0} has no support in the reference labels")]
    MissingClass(&'static str),

    #[error("segment {0} appears in more than one prediction set")]
    OverlappingPredictions(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
