//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input data (CSV layout, ontology JSON, checkpoint files).
    #[error("format error: {0}")]
    Format(String),

    #[error("missing column '{0}' in event log header")]
    MissingColumn(String),

    #[error("event log contains no events")]
    EmptyLog,

    #[error("activity '{0}' is not in the vocabulary")]
    UnknownActivity(String),

    #[error("trace '{case_id}' has {len} activities; at most {max} fit into length {l_max}")]
    TraceTooLong {
        case_id: String,
        len: usize,
        max: usize,
        l_max: usize,
    },

    #[error("need at least {min} traces to split, got {n}")]
    TooFewTraces { n: usize, min: usize },

    #[error(
        "ontology graph is disconnected; components: {}",
        format_components(components)
    )]
    Disconnected { components: Vec<Vec<String>> },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("checkpoint is incompatible: {0}")]
    Incompatible(String),

    #[error("evaluation requires a non-empty dataset")]
    EmptyDataset,

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn format_components(components: &[Vec<String>]) -> String {
    components
        .iter()
        .map(|c| format!("[{}]", c.join(", ")))
        .collect::<Vec<_>>()
        .join(" ")
}
