use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid hyperparameters, dimensions or enum values.
    #[error("configuration error: {0}")]
    Config(String),

    /// Layout or tensor shape disagreement between operands.
    #[error("shape error: {0}")]
    Shape(String),

    /// Inputs outside an operation's domain (empty batch, fresh moments, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A call made outside the guard that makes it meaningful.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Malformed IDX, checkpoint or stream file.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}
