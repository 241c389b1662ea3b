//! Masked-reconstruction foundation model for wireless channel tensors.

pub mod chansim;
pub mod cli;
pub mod encoder;
pub mod error;
pub mod heads;
pub mod numerics;
pub mod pipeline;
pub mod tokenizer;
pub(crate) mod rng;

pub use error::{Error, FormatError, Result};
