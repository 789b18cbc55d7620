//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested dependence parameter makes the covariance matrix lose
    /// positive definiteness.
    #[error("rho out of range: {context} (smallest eigenvalue {min_eigenvalue:.6e})")]
    RhoOutOfRange {
        context: String,
        min_eigenvalue: f64,
    },

    #[error(
        "exhaustive null budget exceeded: C({n}, {k}) = {count} subsets > {budget}; \
         switch to Monte Carlo mode"
    )]
    NullBudgetExceeded {
        n: usize,
        k: usize,
        count: u128,
        budget: u128,
    },

    /// The score-generating function is admitted for the exact test but not
    /// for the smooth-theory constants (e.g. RTB has no bounded derivative).
    #[error("score-generating function '{0}' is not admissible here (requires a bounded derivative)")]
    UnsupportedPhi(String),

    #[error("model '{0}' has no analytic oracle scorer")]
    UnsupportedModel(String),

    #[error("degenerate bandwidth: all points in the sample are identical")]
    DegenerateBandwidth,

    #[error("degenerate distance variance: the {0} block is constant")]
    DegenerateDistanceVariance(String),

    #[error("column '{0}' not found in CSV header")]
    MissingColumn(String),

    #[error("no usable rows after filtering")]
    EmptyData,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
