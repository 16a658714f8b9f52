#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cascade;
pub mod crop;
pub mod dimred;
pub mod error;
pub mod features;
mod kernels;
pub mod neural_forest;
pub mod shape_model;

pub use error::{Error, Result};
pub use nalgebra;
