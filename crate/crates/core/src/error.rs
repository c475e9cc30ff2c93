use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}:{line}: parse error: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("duplicate utt_id `{0}`")]
    DuplicateId(String),

    #[error("format error in {path}: {msg}")]
    Format { path: String, msg: String },

    #[error("cache corruption: {0}")]
    CacheCorruption(PathBuf),

    #[error("feature load error: {0}")]
    FeatureLoad(String),

    #[error("store build error: {0}")]
    Build(String),

    #[error("query error: {0}")]
    Query(String),

    #[error("incompatible: {0}")]
    Incompatible(String),

    #[error("not found: {0}")]
    NotFound(PathBuf),

    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    #[error("retrieval returned no references")]
    RetrievalEmpty,

    #[error("gradient check failed: {0}")]
    GradCheck(String),

    #[error("wav error in {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
