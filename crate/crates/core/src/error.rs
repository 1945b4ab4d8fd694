use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A reward handed to the protocol fell outside `[0, 1]`.
    #[error("reward {value} is outside [0, 1]")]
    RewardOutOfRange { value: f64 },

    #[error("expected {expected} per-arm entries, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid bandit instance: {0}")]
    InvalidInstance(String),

    #[error("arm {arm} out of range for K = {k}")]
    ArmOutOfRange { arm: usize, k: usize },

    #[error("at least one rng stream must be requested")]
    NoStreams,

    #[error("scripted round {t} is beyond the script length {len}")]
    ScriptOutOfRange { t: u64, len: usize },

    /// The learner contract (select, then observe the same round) was broken.
    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("scaling fit: {0}")]
    Fit(String),

    /// Config validation failure, qualified by the offending key path.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("trial {trial_id}: {source}")]
    Trial {
        trial_id: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
