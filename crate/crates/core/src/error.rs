use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("input too short: {len} samples, need at least {needed}")]
    InputTooShort { len: usize, needed: usize },

    #[error("unsupported audio codec: {0}")]
    UnsupportedCodec(String),

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("position {position:?} lies outside the room {dimensions:?}")]
    OutsideRoom {
        position: [f64; 3],
        dimensions: [f64; 3],
    },

    #[error(
        "T60 of {t60} s needs wall absorption {absorption:.3} > 1 in this room; \
         use a larger room or a longer T60"
    )]
    InfeasibleT60 { t60: f64, absorption: f64 },

    #[error("matrix singular at frequency bin {bin} even after diagonal loading")]
    Singular { bin: usize },

    #[error("degenerate speech PSD at frequency bin {bin}: |trace| = {trace:e}")]
    DegenerateSpeechPsd { bin: usize, trace: f64 },

    #[error("zero reference signal")]
    ZeroReference,

    #[error("missing input: {0}")]
    Missing(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
