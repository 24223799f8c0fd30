use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid spin magnitude {0}: 2S+1 must be an integer >= 2")]
    InvalidSpin(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NonHermitian { deviation: f64 },

    #[error("branch tracking is ambiguous at grid index {index} (B = {field_mt} mT); refine the field grid")]
    TrackingAmbiguity { index: usize, field_mt: f64 },

    #[error("field {field_mt} mT lies outside the diagram range [{lo_mt}, {hi_mt}] mT")]
    FieldOutOfRange {
        field_mt: f64,
        lo_mt: f64,
        hi_mt: f64,
    },

    #[error("no tracked branch carries the label {0}")]
    UnknownLabel(String),

    #[error("no avoided crossing between {a} and {b} inside [{lo_mt}, {hi_mt}] mT")]
    NoCrossing {
        a: String,
        b: String,
        lo_mt: f64,
        hi_mt: f64,
    },

    #[error("avoided crossing expected on the sweep path was not found: {0}")]
    AlcNotFound(String),

    #[error("landau-zener slope must be nonzero")]
    ZeroSlope,

    #[error("trace lacks dynamic range: {0}")]
    InsufficientDynamicRange(String),

    #[error("fit did not converge after {iterations} iterations (rms residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("singular jacobian: parameter `{0}` has no influence on the residuals")]
    SingularJacobian(String),

    #[error("too few data points: {points} points for {params} free parameters")]
    TooFewPoints { points: usize, params: usize },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("file not found: {0}")]
    NotFound(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}
