//! Transfer-learning diagnostics for small convolutional classifiers.
//!
//! Trains desk-scale networks from pre-trained or random weights on synthetic
//! multi-domain image tasks and analyses the result: block-shuffle sweeps,
//! linear interpolation barriers, Monte-Carlo basin certification, module
//! criticality, representation similarity, and exact convolution spectra.

pub mod basin;
pub mod criticality;
pub mod dataops;
pub mod error;
pub mod exec;
pub mod landscape;
pub mod model;
pub mod numerics;
#[cfg(any(test, feature = "oracles"))]
pub mod oracles;
pub mod persistence;
pub mod similarity;
pub mod spectrum;
pub mod trainer;

pub use error::{Error, Result};
