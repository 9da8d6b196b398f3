pub mod anm;
pub mod baselines;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod numerics;
pub mod signal;
pub mod spectrum;

pub use error::{Error, Result};
