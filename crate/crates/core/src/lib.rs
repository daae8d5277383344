//! Collaborative-filtering matrix factorization with automatic selection of
//! the latent dimension.
//!
//! The annealing sampler in [`anneal`] explores the Boltzmann posterior of
//! the user/item factors, moving between latent dimensions with
//! Helmert-rotated birth and death proposals ([`helmert`]), while
//! [`eb`] adapts the two regularization weights online. [`als`] provides
//! the classical alternating least-squares baseline.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod als;
pub mod anneal;
pub mod eb;
pub mod error;
pub mod experiment;
pub mod factor;
pub mod helmert;
pub mod ratings;

pub use error::{Error, Result};
pub use factor::{FactorState, HyperParams};
pub use ratings::SparseRatings;
