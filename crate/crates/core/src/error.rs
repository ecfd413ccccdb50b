use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported signature Cl({p},{q})")]
    UnsupportedSignature { p: u8, q: u8 },
    #[error("expected {expected} blades, got {got}")]
    BladeCount { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("blade {0} assigned to more than one field")]
    DuplicateBlade(usize),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("mode cutoff {cutoff} exceeds Nyquist limit {limit} on axis {axis}")]
    CutoffExceedsNyquist { axis: usize, cutoff: usize, limit: usize },
    #[error("quaternion has zero norm and epsilon is zero")]
    ZeroQuaternion,
    #[error("covariance is not positive semi-definite after regularisation (min eigenvalue {0:e})")]
    NonPsdCovariance(f64),
    #[error("time step {dt} violates the Courant bound {limit}")]
    Courant { dt: f64, limit: f64 },
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("bad magic bytes {0:?}, expected \"CLF1\"")]
    BadMagic([u8; 4]),
    #[error("truncated file: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("header/payload mismatch: {0}")]
    HeaderMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
