use thiserror::Error;

/// Errors surfaced by every layer of the crate.
#[derive(Error, Debug)]
pub enum Error {
    /// Tensor shapes do not line up for the requested operation.
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// A structurally valid request with unusable settings (bad stride,
    /// odd pooling input, unsupported input spec, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Binary input (IDX, CIFAR batch, checkpoint) failed to parse.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: usize, msg: String },

    /// A class label is outside [0, num_classes).
    #[error("label {label} out of range for {num_classes} classes")]
    Label { label: usize, num_classes: usize },

    /// An API contract was violated by the caller (mismatched names,
    /// non-normalized probabilities, non-scalar loss, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Training loss became non-finite.
    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    /// The finite-difference oracle cannot be trusted (the function under
    /// test is not deterministic).
    #[error("gradient oracle invalid: {0}")]
    OracleInvalid(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
