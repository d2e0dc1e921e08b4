use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("probability p = {0} must lie strictly between 0 and 1")]
    InvalidProbability(f64),

    #[error("negative count: {0}")]
    NegativeCount(i64),

    #[error("grouped data is empty (all four counts are zero)")]
    EmptyData,

    #[error("{arm} arm is empty; both instrument arms must be observed")]
    EmptyArm { arm: &'static str },

    #[error("sample size {n} exceeds the cap of {cap} for {what}")]
    TooLarge { what: &'static str, n: u64, cap: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("{failed} of {total} bootstrap replications failed (limit is 10%)")]
    BootstrapFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Validates an estimator-side assignment probability.
pub(crate) fn check_open_unit(p: f64) -> Result<f64> {
    if p > 0.0 && p < 1.0 {
        Ok(p)
    } else {
        Err(Error::InvalidProbability(p))
    }
}
