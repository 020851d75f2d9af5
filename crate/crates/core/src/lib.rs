//! Hypergraph random-walk discovery prediction.
//!
//! Papers become hyperedges over author, material and property nodes. From
//! that structure the crate derives author-mediated transition
//! probabilities, biased deepwalk sequences and embeddings, social-density
//! signals, shortest-path "alienness", fused rankings of unstudied
//! candidates and a cumulative hit-rate evaluation.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod fixtures;
pub mod gnn;
pub mod hypergraph;
pub mod math;
pub mod quantile;
pub mod rng;
pub mod scoring;
pub mod social;
pub mod transition;
pub mod walks;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
