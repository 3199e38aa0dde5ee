use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("probability {0} is outside the open interval (0, 1)")]
    InvalidProbability(f64),

    #[error("alpha {0} is outside the open interval (0, 1)")]
    InvalidAlpha(f64),

    #[error("invalid distribution parameter: {0}")]
    InvalidParameter(String),

    #[error("table margin {m_total} exceeds n1 + n2 = {total}")]
    MarginOutOfRange { m_total: u64, total: u64 },

    #[error("count {count} exceeds its trial total {trials}")]
    CountExceedsTrials { count: u64, trials: u64 },

    #[error("outcome {0} is not in the support of the null distribution")]
    OutcomeOutsideSupport(u64),

    #[error(
        "null distribution has floating-point masses; exact tie classes require rational masses"
    )]
    InexactNull,

    #[error("invalid p-value support: {0}")]
    InvalidSupport(String),

    #[error("no hypotheses")]
    NoHypotheses,

    #[error("length mismatch: {pvalues} p-values but {supports} supports")]
    LengthMismatch { pvalues: usize, supports: usize },

    #[error("p-value {pvalue} of hypothesis {index} is not a point of its null support")]
    NotOnSupport { index: usize, pvalue: f64 },

    #[error("p-value {0} is outside [0, 1]")]
    InvalidPValue(f64),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Record { line: u64, message: String },

    #[error("schema: {0}")]
    Schema(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    /// True for errors caused by the input data rather than by arguments or
    /// internal state.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::MarginOutOfRange { .. }
                | Error::CountExceedsTrials { .. }
                | Error::OutcomeOutsideSupport(_)
                | Error::NoHypotheses
                | Error::Io { .. }
                | Error::Record { .. }
                | Error::Schema(_)
                | Error::Csv(_)
                | Error::NotOnSupport { .. }
                | Error::InvalidPValue(_)
        )
    }
}
