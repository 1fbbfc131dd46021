use thiserror::Error;

/// Errors produced by estimation, inference and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("missing value at row {row}, column {col}")]
    MissingValue { row: usize, col: usize },

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("parameter {name} = {value} outside its domain {domain}")]
    ParameterDomain { name: String, value: f64, domain: String },

    #[error("invalid weight specification: {0}")]
    WeightSpec(String),

    #[error("quadrature did not reach tolerance: error estimate {error:e} after {points} points per randomization")]
    QuadratureTolerance { error: f64, points: usize },

    #[error(
        "loading b[factor {factor}][coordinate {coord}] is zero; closed-form integral needs all loadings positive"
    )]
    ZeroLoading { factor: usize, coord: usize },

    #[error("parameter {0:?} lies on the boundary of the parameter space")]
    Boundary(Vec<f64>),

    #[error(
        "moment map jacobian is rank deficient (smallest singular value {sigma_min:e}), null direction {direction:?}"
    )]
    Identifiability { sigma_min: f64, direction: Vec<f64> },

    #[error("covariance matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("clustering failed: {0}")]
    Clustering(String),

    #[error("invalid configuration: {0}")]
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

/// Coarse classification used by the command line to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Data,
    Fit,
    Inference,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NonFinite { .. }
            | Error::MissingValue { .. }
            | Error::InvalidSample(_)
            | Error::WeightSpec(_)
            | Error::Config(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_)
            | Error::Toml(_)
            | Error::ParameterDomain { .. } => ErrorKind::Data,
            Error::FitFailed(_) | Error::Clustering(_) | Error::ZeroLoading { .. } => ErrorKind::Fit,
            Error::QuadratureTolerance { .. }
            | Error::Boundary(_)
            | Error::Identifiability { .. }
            | Error::NotPositiveSemidefinite(_)
            | Error::Singular(_) => ErrorKind::Inference,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
