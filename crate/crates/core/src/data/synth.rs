use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cube::{default_wavelengths, SpectralCube};
use crate::error::{Error, Result};

/// Knobs of the synthetic scene generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    /// Piecewise-constant spatial regions (Voronoi cells).
    pub regions: usize,
    /// Endmember spectra mixed inside each region.
    pub endmembers: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            regions: 8,
            endmembers: 6,
        }
    }
}

/// Deterministic synthetic scene with `bands` evenly spaced over 420–700 nm.
///
/// Each Voronoi region carries a convex mixture of random endmember spectra.
/// Endmembers are white noise along λ blurred by a Gaussian of width
/// `smoothness` bands (0 leaves bands independent). The cube is divided by
/// its global maximum.
pub fn synth_scene(seed: u64, h: usize, w: usize, bands: usize, smoothness: f64) -> Result<SpectralCube> {
    synth_scene_with(SynthOptions::default(), seed, h, w, bands, smoothness)
}

pub fn synth_scene_with(
    opts: SynthOptions,
    seed: u64,
    h: usize,
    w: usize,
    bands: usize,
    smoothness: f64,
) -> Result<SpectralCube> {
    if h == 0 || w == 0 || bands == 0 {
        return Err(Error::InvalidArgument(format!(
            "scene dimensions must be positive, got {h}x{w}x{bands}"
        )));
    }
    if !(smoothness >= 0.0) {
        return Err(Error::InvalidArgument(format!("smoothness {smoothness} < 0")));
    }
    if opts.regions == 0 || opts.endmembers == 0 {
        return Err(Error::InvalidArgument("need at least one region and endmember".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let endmembers: Vec<Vec<f64>> = (0..opts.endmembers)
        .map(|_| {
            let raw: Vec<f64> = (0..bands).map(|_| rng.gen::<f64>()).collect();
            smooth(&raw, smoothness)
        })
        .collect();

    let sites: Vec<(f64, f64)> = (0..opts.regions)
        .map(|_| (rng.gen::<f64>() * h as f64, rng.gen::<f64>() * w as f64))
        .collect();

    // Dirichlet(1, …, 1) mixing weights per region.
    let spectra: Vec<Vec<f64>> = (0..opts.regions)
        .map(|_| {
            let e: Vec<f64> = (0..opts.endmembers)
                .map(|_| -(1.0 - rng.gen::<f64>()).ln())
                .collect();
            let total: f64 = e.iter().sum();
            (0..bands)
                .map(|l| {
                    e.iter()
                        .zip(&endmembers)
                        .map(|(a, em)| a / total * em[l])
                        .sum()
                })
                .collect()
        })
        .collect();

    let mut values = Vec::with_capacity(h * w * bands);
    for y in 0..h {
        for x in 0..w {
            let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
            let region = sites
                .iter()
                .enumerate()
                .map(|(i, &(sy, sx))| (i, (py - sy).powi(2) + (px - sx).powi(2)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i)
                .expect("at least one region");
            values.extend_from_slice(&spectra[region]);
        }
    }

    let max = values.iter().copied().fold(0.0f64, f64::max);
    let scale = if max > 0.0 { 1.0 / max } else { 1.0 };
    let values = values
        .into_iter()
        .map(|v| ((v * scale) as f32).clamp(0.0, 1.0))
        .collect();
    SpectralCube::new(h, w, default_wavelengths(bands), values)
}

fn smooth(raw: &[f64], sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return raw.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let n = raw.len() as isize;
    (0..n)
        .map(|i| {
            let (mut acc, mut norm) = (0.0, 0.0);
            for d in -radius..=radius {
                let j = i + d;
                if j < 0 || j >= n {
                    continue;
                }
                let k = (-0.5 * (d as f64 / sigma).powi(2)).exp();
                acc += k * raw[j as usize];
                norm += k;
            }
            acc / norm
        })
        .collect()
}
