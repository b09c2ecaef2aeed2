//! Next-activity prediction for process traces.
//!
//! A decoder-only transformer over activity sequences, with positional
//! information injected either as classic sinusoidal encoding or as spectral
//! embeddings of an activity-ontology graph (normalized-Laplacian
//! eigenvectors projected into the model dimension).
//!
//! The crate covers the full pipeline: event-log CSV ingestion, ontology
//! parsing and factorization, the differentiable model with hand-written
//! backward passes, AdamW training with step-decay scheduling, top-k
//! evaluation, random hyperparameter search, and a synthetic data generator
//! for end-to-end experiments.

pub mod checkpoint;
pub mod error;
pub mod evaluation;
pub mod event_log;
pub mod linalg;
pub mod model;
pub mod neural;
pub mod ontology;
pub mod pos_encoding;
pub mod rng;
pub mod synthgen;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
