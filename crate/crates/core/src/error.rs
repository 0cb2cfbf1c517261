use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// The convolution density underflowed or became non-finite at `x`.
    #[error("convolution density underflows at |x| = {radius:e}; use the log-space potential")]
    NumericUnderflow { radius: f64 },

    #[error("unsupported dimension {dimension}: {reason}")]
    UnsupportedDimension { dimension: usize, reason: String },

    /// A drift hypothesis evaluated to a non-positive value beyond the drift radius.
    #[error("{condition} fails at radius {radius:.6e} (value {value:.6e})")]
    DriftConditionFailed { condition: String, radius: f64, value: f64 },

    #[error("drift certificate invalid: violation fraction {violation_fraction:.4} exceeds 0.01")]
    InvalidCertificate { violation_fraction: f64 },

    #[error("{what} saturated at grid end ({detail})")]
    SaturatedAtGridEnd { what: String, detail: String },

    #[error("no asymptotic family reached r² ≥ 0.95 (best {best_family} with r² = {best_r_squared:.4})")]
    InconclusiveFit { best_family: String, best_r_squared: f64 },

    #[error("stability hypothesis failed: eta0 = {eta0:.6} ≤ {bound:.6}")]
    HypothesisFailed { eta0: f64, bound: f64 },

    #[error("sampler misconfigured: {0}")]
    SamplerMisconfigured(String),

    #[error("calibration failed: {0}")]
    CalibrationFailed(String),

    #[error("Euler-Maruyama path exploded past |x| = {limit:e}; reduce dt")]
    StepSizeTooLarge { limit: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors that signal a failed mathematical hypothesis rather
    /// than a bug or bad input.
    pub fn is_hypothesis_failure(&self) -> bool {
        matches!(
            self,
            Error::DriftConditionFailed { .. } | Error::InvalidCertificate { .. } | Error::HypothesisFailed { .. }
        )
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
