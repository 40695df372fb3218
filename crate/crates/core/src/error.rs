//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid distribution spec: {0}")]
    InvalidDistribution(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("dense interference refused at n = {n} (cap {cap}); use streamed or low-rank mode")]
    DenseTooLarge { n: usize, cap: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("candidate pool is empty")]
    EmptyPool,

    #[error("all batches were pruned; relax min_size or min_traj_dist")]
    AllBatchesPruned,

    #[error("population contains no human units")]
    NoHumans,

    #[error("filtered unit set is empty (threshold {threshold})")]
    EmptyFilteredSet { threshold: f64 },

    #[error("design has {rows} rows but needs at least {cols}")]
    TooFewRows { rows: usize, cols: usize },

    #[error("design matrix is rank deficient (rank {rank} of {cols})")]
    RankDeficient { rank: usize, cols: usize },

    #[error("identifiability check failed: {0}")]
    Identifiability(String),

    #[error("trajectory diverged at round {round} (|value| = {value:.3e})")]
    Divergence { round: usize, value: f64 },

    #[error("response schema violation: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
