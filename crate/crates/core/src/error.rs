use thiserror::Error;

/// Errors raised by model assembly, the solvers and the optimizer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Malformed config document; the message carries the key or line.
    #[error("config parse error: {0}")]
    Parse(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("invalid shape parameters: {0}")]
    InvalidShape(String),

    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("newton iteration diverged at step {step} (residual {residual:e} after {iterations} iterations)")]
    NewtonDivergence {
        step: usize,
        residual: f64,
        iterations: u32,
    },

    #[error("singular linearized system at step {step}")]
    SingularStep { step: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch {
            what,
            expected,
            got,
        })
    }
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}
