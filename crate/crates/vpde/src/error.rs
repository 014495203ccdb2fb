use thiserror::Error;

/// Errors produced by field containers, solvers, masks, and the model stack.
#[derive(Debug, Error)]
pub enum VpdeError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },

    #[error("truth field has zero norm over the selected frames")]
    ZeroNormTruth,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad magic bytes {0:?}, expected \"VPDE\"")]
    BadMagic([u8; 4]),

    #[error("unsupported container version {0}")]
    VersionUnsupported(u16),

    #[error("payload length mismatch: header says {expected} bytes, file has {got}")]
    PayloadLengthMismatch { expected: usize, got: usize },

    #[error("bad container header: {0}")]
    BadHeader(String),

    #[error("grid size {0} must be a power of two")]
    BadGridSize(usize),

    #[error("CFL violation: {0}")]
    CflViolation(String),

    #[error("solver state became non-finite at step {step}")]
    NonFiniteState { step: usize },

    #[error("alpha^2 = {alpha_sq} is within {gap:.3e} of a discrete Laplacian eigenvalue")]
    ResonantAlpha { alpha_sq: f64, gap: f64 },

    #[error("observation rate {0} outside (0, 1]")]
    RateOutOfRange(f64),

    #[error("frame index {frame} outside [0, {frames})")]
    FrameOutOfRange { frame: usize, frames: usize },

    #[error("sigma must be positive")]
    ZeroSigma,

    #[error("loss became non-finite (sigma = {sigma}, sample = {sample})")]
    NonFiniteLoss { sigma: f64, sample: usize },

    #[error("non-finite value in model output")]
    NonFiniteOutput,

    #[error("indivisible dimensions: {0}")]
    IndivisibleDims(String),

    #[error("checkpoint/config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, VpdeError>;
