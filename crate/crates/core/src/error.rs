use thiserror::Error;

#[derive(Debug, Error)]
pub enum PpdError {
    /// A parameter or input violated a documented constraint.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("line {line}: duplicate token id {id} in early_topk")]
    DuplicateId { line: usize, id: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PpdError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(PpdError::Domain(msg.into()))
}
