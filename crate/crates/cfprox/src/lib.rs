//! File formats, configuration and the command pipeline around
//! [`cfprox_core`].

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod movielens;
pub mod pipeline;
pub mod report;
pub mod synthetic;

pub use error::{CliError, Result};
