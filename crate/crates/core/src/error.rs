use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("matrix is rank deficient (column {column})")]
    RankDeficient { column: usize },

    #[error("infeasible initialization: |theta[{index}]| = {theta} exceeds radius {radius}")]
    InfeasibleInit { index: usize, theta: f64, radius: f64 },

    #[error("cannot project degenerate point ({theta}, {xi}) onto the circle")]
    DegeneratePoint { theta: f64, xi: f64 },

    #[error("oblique projection has no real root (discriminant {discriminant}); stepsize too large?")]
    NoRealRoot { discriminant: f64 },

    #[error("quasi-Newton projection diverged at iteration {iteration}: residual {residual} (initial {initial})")]
    QuasiNewtonDiverged {
        iteration: usize,
        residual: f64,
        initial: f64,
    },

    #[error("constraint jacobian is rank deficient (min pivot {pivot:e})")]
    JacobianRankDeficient { pivot: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("requested {requested} items from a dataset of {available}")]
    TooLarge { requested: usize, available: usize },

    #[error("too few samples: {samples} samples for {batches} batches")]
    TooFewSamples { samples: usize, batches: usize },

    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
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
