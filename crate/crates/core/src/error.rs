use alloc::string::String;

/// Errors raised by the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: {detail}")]
    Shape { context: String, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("trace validation failed: {0}")]
    Validation(String),

    #[error("conservation violated between nodes {upstream} and {downstream}: relative imbalance {imbalance:e} exceeds {tolerance:e}")]
    Conservation {
        upstream: usize,
        downstream: usize,
        imbalance: f64,
        tolerance: f64,
    },

    #[error("backward requires a scalar loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn shape_err(context: &str, detail: impl Into<String>) -> Error {
    Error::Shape {
        context: context.into(),
        detail: detail.into(),
    }
}
