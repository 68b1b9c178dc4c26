pub mod baseline;
pub mod blocks;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod export;
pub mod fourier;
pub mod gradcheck;
pub mod graph;
pub mod models;
pub mod nn;
pub mod optim;
pub mod presets;
#[cfg(test)]
mod properties;
pub mod spectral;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{FbmError, Result};
