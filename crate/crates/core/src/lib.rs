//! Graph-to-sequence text generation.
//!
//! The crate turns graph-structured inputs (reified RDF triple sets,
//! semantic dependency graphs) into text with a gated, direction-aware graph
//! convolutional encoder and an attention LSTM decoder. Everything, down to
//! the automatic differentiation, is implemented here on plain `f64`
//! buffers.

pub mod check;
pub mod decoder;
pub mod encoders;
pub mod error;
pub mod graph;
pub mod ingestion;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod recurrent;
pub mod toy;
pub mod training;
pub mod vocab;

pub use error::{Error, Result};
