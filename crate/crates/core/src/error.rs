use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric parameter fell outside the range where the privacy bound holds.
    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    /// `select_gamma` produced a batch scale below 1.
    #[error("population too small: gamma = {gamma:.6} < 1 for n = {n}, L = {max_length}, epsilon = {epsilon}, theta = {theta}")]
    PopulationTooSmall {
        n: u64,
        max_length: u32,
        epsilon: f64,
        theta: u32,
        gamma: f64,
    },

    #[error("symbol {symbol:?} in sequence {sequence:?} is not in the alphabet")]
    AlphabetMismatch { symbol: char, sequence: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown {kind} {name:?} (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("no population up to {cap} satisfies the discovery target")]
    Unsatisfiable { cap: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad caller input rather than the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Csv(_) | Error::Json(_))
    }

    pub(crate) fn range(msg: impl Into<String>) -> Self {
        Error::OutOfRange(msg.into())
    }
}
