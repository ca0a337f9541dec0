//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    /// Invalid configuration (bad parameter values, inconsistent sub-configs).
    #[error("configuration error: {0}")]
    Config(String),

    /// Population/raster ingestion failure, with row/column context where known.
    #[error("ingestion error ({context}): {message}")]
    Ingestion { context: String, message: String },

    /// A numeric operation was called outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The relaxed problem could not be set up or solved.
    #[error("solver error: {0}")]
    Solver(String),

    /// A per-slot pipeline failure, wrapped with the slot index.
    #[error("slot {slot}: {source}")]
    Slot {
        slot: usize,
        #[source]
        source: Box<SimError>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl SimError {
    pub fn config(msg: impl Into<String>) -> Self {
        SimError::Config(msg.into())
    }

    pub fn ingestion(context: impl Into<String>, message: impl Into<String>) -> Self {
        SimError::Ingestion {
            context: context.into(),
            message: message.into(),
        }
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        SimError::Domain(msg.into())
    }

    pub fn solver(msg: impl Into<String>) -> Self {
        SimError::Solver(msg.into())
    }

    /// Attach the slot index to an error escaping the per-slot pipeline.
    pub fn at_slot(self, slot: usize) -> Self {
        SimError::Slot {
            slot,
            source: Box::new(self),
        }
    }
}
