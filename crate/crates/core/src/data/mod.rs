//! Spectral cubes, response curves, RGB measurements and their file formats.

mod cube;
mod noise;
mod response;
mod scube;
mod synth;

pub use cube::{crop_patches, default_wavelengths, RgbImage, SpectralCube};
pub use noise::{add_gaussian_noise, gaussian_noise};
pub use response::{load_response_csv, quadrature_weights, save_response_csv, ResponseCurve};
pub use scube::{load_scube, read_scube, save_scube, write_scube, SCUBE_MAGIC, SCUBE_VERSION};
pub use synth::{synth_scene, SynthOptions};
