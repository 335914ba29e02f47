use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution parameters: {0}")]
    InvalidDistribution(String),

    #[error("event label is {len} bytes, limit is {max}")]
    LabelTooLong { len: usize, max: usize },

    #[error("event has {len} components, limit is {max}")]
    TooManyComponents { len: usize, max: usize },

    #[error("event {event} queried more than once in a strict ledger")]
    DuplicateEvent { event: String },

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("replicate {index}: {source}")]
    Replicate {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("need at least {need} replicates, got {got}")]
    TooFewReplicates { got: usize, need: usize },

    #[error("stratum classification requires 0 <= p1 <= p0 <= 1, got p0={p0}, p1={p1}")]
    StratumOrder { p0: f64, p1: f64 },

    #[error("stateful mode: strata unidentifiable (no event-keyed noise map)")]
    StrataUnidentifiable,

    #[error("draw traces missing from {0}")]
    MissingTrace(&'static str),

    #[error("invalid seed {0:?}: expected exactly 32 hex characters")]
    InvalidSeed(String),

    #[error("config: {0}")]
    Config(String),

    #[error("digest mismatch: expected {expected}, found {found}")]
    DigestMismatch { expected: String, found: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_replicate(self, index: u64) -> Self {
        Error::Replicate { index, source: Box::new(self) }
    }
}
