//! File formats, synthetic data, evaluation and benchmarking around
//! [`gnfalign_core`].

pub mod bench;
pub mod config;
pub mod error;
pub mod eval;
pub mod manifest;
pub mod metrics;
pub mod model_io;
pub mod pgm;
pub mod pts;
pub mod synth;
#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use gnfalign_core as core;
