//! Core of a communication-efficient distributed sparse learner.
//!
//! The master machine solves a shifted ℓ1-regularized problem on its own shard
//! each round, hard-thresholds the minimizer to `k` entries and broadcasts the
//! sparse iterate. Workers answer with their local gradient restricted to the
//! broadcast support, so both directions carry `O(k)` scalars instead of `O(d)`.
//!
//! This crate is `no_std` (it needs `alloc`). Everything here is deterministic:
//! IO, sockets, file formats and the CLI live in the `twoway` crate.
#![no_std]
#![forbid(unsafe_code)]
// `!(x >= 0.0)` is how NaN gets rejected along with negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cluster;
pub mod datagen;
pub mod engine;
mod error;
pub mod model;
pub mod prox;
pub mod sparse;

pub use error::{Error, Result};
pub use model::{Dataset, LossConstants, LossKind, Shard};
pub use sparse::{DenseVector, Norm, SparseSlice, SupportSet};
