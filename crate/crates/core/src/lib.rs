pub mod discretization;
pub mod error;
pub mod euler;
pub mod fluxes;
pub mod geometry;
pub mod harness;
pub mod kernels_batched;
pub mod means;
pub mod operators;
pub mod timeint;
mod tensor;

pub use error::{Error, Result};
