use alloc::string::String;

/// Errors raised by the core pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("structural error: {0}")]
    Structural(String),
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("integration diverged at solver step {step} (t = {time})")]
    Divergence { step: usize, time: f64 },
    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),
    #[error("fit failed: {0}")]
    Fit(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
