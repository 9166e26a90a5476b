use crate::scenegen::Scene;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs are individually well-formed but inconsistent with each other
    /// (catalog gaps, id mismatches, invalid configuration values).
    #[error("configuration error: {0}")]
    Config(String),

    /// Scene generation could not produce a navigable layout.
    #[error("generation failed: {reason}")]
    GenerationFailed { reason: String, last_layout: Option<Box<Scene>> },

    /// A file did not match its schema. `location` is a JSON path or a
    /// `line N` marker.
    #[error("{location}: {message}")]
    Format { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format { location: location.into(), message: message.into() }
    }

    /// True for errors caused by configuration rather than a failed work item.
    pub fn is_configuration(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Domain(_))
    }
}
