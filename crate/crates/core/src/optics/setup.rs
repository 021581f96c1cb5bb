use serde::{Deserialize, Serialize};

use crate::data::default_wavelengths;
use crate::error::{Error, Result};

/// Geometry and material of the diffractive optics simulation.
///
/// Lengths keep the unit in their name; internally everything is converted
/// to micrometres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticalSetup {
    pub grid_n: usize,
    pub pitch_um: f64,
    pub aperture_diameter_mm: f64,
    pub delta_n: f64,
    pub scene_distance_d_mm: f64,
    pub propagation_z_mm: f64,
    pub wavelengths_nm: Vec<f64>,
    /// Upper clamp for DOE heights.
    pub h_max_um: f64,
    /// Samples of the 1-D radial height profile.
    pub radial_samples: usize,
    /// Side of the odd PSF window on the image grid.
    pub psf_window: usize,
    /// Simulation samples per image pixel along each axis.
    pub block: usize,
}

impl Default for OpticalSetup {
    fn default() -> Self {
        Self {
            grid_n: 256,
            pitch_um: 4.0,
            aperture_diameter_mm: 1.0,
            delta_n: 0.5,
            scene_distance_d_mm: 1000.0,
            propagation_z_mm: 50.0,
            wavelengths_nm: default_wavelengths(8),
            h_max_um: 1.2,
            radial_samples: 16,
            psf_window: 9,
            block: 8,
        }
    }
}

impl OpticalSetup {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.grid_n < 2 || !self.grid_n.is_power_of_two() {
            return bad(format!("grid_n {} must be a power of two", self.grid_n));
        }
        for (name, v) in [
            ("pitch_um", self.pitch_um),
            ("aperture_diameter_mm", self.aperture_diameter_mm),
            ("delta_n", self.delta_n),
            ("scene_distance_d_mm", self.scene_distance_d_mm),
            ("propagation_z_mm", self.propagation_z_mm),
            ("h_max_um", self.h_max_um),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.wavelengths_nm.is_empty() {
            return bad("no wavelengths".into());
        }
        if let Some(l) = self.wavelengths_nm.iter().find(|l| !(**l > 0.0)) {
            return bad(format!("wavelength {l} nm must be positive"));
        }
        if self.radial_samples < 2 {
            return bad("radial profile needs at least two samples".into());
        }
        if self.psf_window.is_multiple_of(2) {
            return bad(format!("psf_window {} must be odd", self.psf_window));
        }
        if self.block == 0 || !self.block.is_multiple_of(2) {
            return bad(format!("block {} must be even and positive", self.block));
        }
        if self.psf_window * self.block > self.grid_n {
            return bad(format!(
                "psf window {}x{} pixels needs {} samples, grid has {}",
                self.psf_window,
                self.block,
                self.psf_window * self.block,
                self.grid_n
            ));
        }
        Ok(())
    }

    pub fn bands(&self) -> usize {
        self.wavelengths_nm.len()
    }

    pub(crate) fn aperture_radius_um(&self) -> f64 {
        self.aperture_diameter_mm * 500.0
    }

    /// Physical coordinate of sample `i` along an axis; the grid centre is at `(n − 1) / 2`.
    pub(crate) fn coord_um(&self, i: usize) -> f64 {
        (i as f64 - (self.grid_n as f64 - 1.0) / 2.0) * self.pitch_um
    }

    /// Squared radius of every grid sample, row-major.
    pub(crate) fn radius2(&self) -> Vec<f64> {
        let n = self.grid_n;
        (0..n * n)
            .map(|p| {
                let (y, x) = (self.coord_um(p / n), self.coord_um(p % n));
                y * y + x * x
            })
            .collect()
    }

    /// Top-left sample of the centred PSF window.
    pub(crate) fn window_offset(&self) -> usize {
        (self.grid_n - self.psf_window * self.block) / 2
    }
}
