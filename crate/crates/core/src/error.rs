use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid subband: {0}")]
    InvalidSubband(String),

    #[error("incompatible subbands: {0}")]
    IncompatibleSubbands(String),

    #[error("zero vector has no consistent L-inf region")]
    ZeroVector,

    #[error("invalid gaussian atom: {0}")]
    InvalidAtom(String),

    #[error("invalid tiling: {0}")]
    InvalidTiling(String),

    #[error("invalid model configuration: {0}")]
    InvalidModel(String),

    #[error("expansion would produce {projected} atoms, above the cap of {cap}")]
    ExpansionCap { projected: u128, cap: u128 },

    #[error("invalid training configuration: {0}")]
    InvalidTrain(String),

    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: usize, loss: f64 },

    #[error("empty term selector")]
    EmptySelector,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("resolution {requested} exceeds the configured cap of {cap}")]
    ResolutionCap { requested: usize, cap: usize },

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("image format error: {0}")]
    Image(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("config error in {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
