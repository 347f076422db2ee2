use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: malformed record: {msg}")]
    MalformedRecord { path: String, line: usize, msg: String },

    #[error("no records")]
    NoRecords,

    #[error("duplicate segment (doc_id={doc_id}, seg_index={seg_index})")]
    DuplicateSegment { doc_id: String, seg_index: usize },

    #[error("document {doc_id}: gap in seg_index at {missing}")]
    SegIndexGap { doc_id: String, missing: usize },

    #[error("mixed lang_pair in one file: {first} and {other}")]
    MixedLangPair { first: String, other: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("token counter failed: {0}")]
    Counter(String),

    #[error("rule {rule} inapplicable: {reason}")]
    RuleInapplicable { rule: String, reason: String },

    #[error("perturbation rejected: {0}")]
    PerturbationRejected(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("adapter error: {0}")]
    Adapter(String),

    #[error("scorer error: {0}")]
    Scorer(String),

    #[error("missing score for {0}")]
    MissingScore(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 config/input, 2 scorer or protocol, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Protocol(_)
            | Error::Adapter(_)
            | Error::Scorer(_)
            | Error::Counter(_)
            | Error::PerturbationRejected(_) => 2,
            Error::Io { .. } => 3,
            _ => 1,
        }
    }
}
