use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("degenerate camera rig: smallest singular value {sigma_min:.3e} below {tol:.0e}")]
    DegenerateRig { sigma_min: f64, tol: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("loss became NaN at batch {batch} (epoch {epoch})")]
    NanLoss { epoch: usize, batch: usize },

    #[error("checkpoint fingerprint mismatch: expected {expected}, found {found}")]
    Fingerprint { expected: String, found: String },

    #[error("malformed {what}: {msg}")]
    Format { what: &'static str, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::Error::$variant(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
