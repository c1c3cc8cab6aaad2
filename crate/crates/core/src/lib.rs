//! Counterfactual proximity scoring for item-based collaborative-filtering
//! explanations.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every algorithmic piece:
//! the interaction dataset and its synthetic-history helpers, an ALS-trained
//! matrix-factorization model, full-retrain and warm-start counterfactual
//! scoring, the Item-Sim / Genre-Jacc baselines, explanation enumeration and
//! selection, and the statistics used to compare scores against human ratings.
//! File formats, the command line and parallel scheduling live in the `cfprox`
//! crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod baselines;
pub mod counterfactual;
pub mod dataset;
mod error;
pub mod explain;
mod ids;
mod linalg;
pub mod mf;
pub mod stats;

pub use error::{Error, Result};
pub use ids::{ItemId, UserId};
