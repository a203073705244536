use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid radius {r} (support radius {support})")]
    InvalidRadius { r: f64, support: f64 },

    #[error("exponent {exponent} out of range for alpha = {alpha}: {reason}")]
    ExponentOutOfRange {
        exponent: f64,
        alpha: f64,
        reason: &'static str,
    },

    #[error("invalid cutoff {eps} (support radius {support})")]
    InvalidCutoff { eps: f64, support: f64 },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("measure certification failed: {0}")]
    CertificationFailed(String),

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("a jump already exists at time {0}")]
    DuplicateTimestamp(f64),

    #[error("jump size {norm} outside the admissible range ({lower}, {upper}]")]
    JumpOutOfSupport { norm: f64, lower: f64, upper: f64 },

    #[error("dyadic level {level} outside [{min}, {max}]")]
    LevelOutOfRange { level: i32, min: i32, max: i32 },

    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("symbol is undefined for a variable diffusion matrix")]
    VariableSigma,

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (last contraction ratio {last_ratio:.4})")]
    NoConvergence { iterations: usize, last_ratio: f64 },

    #[error("lambda reached {lambda} without meeting the gradient target (sup |grad u| = {sup_grad:.4})")]
    LambdaExplosion { lambda: f64, sup_grad: f64 },

    #[error("Picard iteration diverged on a window of length {window} (gaps {gaps:?})")]
    PicardDivergence { window: f64, gaps: Vec<f64> },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
