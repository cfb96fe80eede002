//! Deterministic federated-learning simulator for comparing client-selection
//! strategies: random sampling, highest-loss, and agglomerative clustering of
//! client weight vectors.

// Negated comparisons on floats are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster;
pub mod config;
pub mod data;
pub mod error;
pub mod model;
pub mod report;
pub mod rng;
pub mod selection;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
