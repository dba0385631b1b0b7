pub mod benchmark;
pub mod dataprep;
pub mod error;
pub mod explain;
pub mod geometry;
pub mod imageio;
pub mod model;
pub mod morph;
pub mod nn;
pub mod pipeline;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
