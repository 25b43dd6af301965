use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid kernel at x = {x}: {reason}")]
    InvalidKernel { x: f64, reason: String },

    #[error("quadrature did not converge on [{lo}, {hi}] (residual {residual:e})")]
    Quadrature { lo: f64, hi: f64, residual: f64 },

    #[error("inverse CDF could not bracket u = {u} at x = {x}")]
    Support { x: f64, u: f64 },

    #[error("certificate rejected at {at}: claimed {claimed:e}, observed {observed:e}")]
    CertificateRejected { at: f64, claimed: f64, observed: f64 },

    #[error("hypothesis violated at x = {x}: {reason}")]
    Hypothesis { x: f64, reason: String },

    #[error("Picard iterate {iteration} lost monotonicity at grid index {index} (x = {x})")]
    Monotonicity { iteration: usize, index: usize, x: f64 },

    #[error("kernel mass beyond the grid from x = {x} is {weight:e}, above tolerance {tolerance:e}")]
    TailMass { x: f64, weight: f64, tolerance: f64 },

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("sampling failed on path {path}: {source}")]
    Path {
        path: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
