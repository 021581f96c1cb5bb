//! Optical encoders, decoders and joint training for snapshot spectral imaging.

pub mod data;
pub mod decoders;
mod error;
pub mod exec;
pub mod metrics;
pub mod optics;
pub mod params;
pub mod train;
pub mod viz;

pub use error::{Error, Result};
