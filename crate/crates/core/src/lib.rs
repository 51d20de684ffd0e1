//! Hierarchical recurrent sequence labeling for lawsuit-style documents.
//!
//! A sentence-level bidirectional GRU encodes tokens, a document-level
//! bidirectional GRU encodes the resulting sentence vectors, and two heads
//! tag entities (softmax or linear-chain CRF) and classify sentence roles.
//! Everything, including gradients, is implemented directly on dense `f64`
//! matrices.

pub mod cli;
pub mod crf;
pub mod data;
pub mod extract;
pub mod linalg;
pub mod model;
pub mod nn;
pub mod train;
