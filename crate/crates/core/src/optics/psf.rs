use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use uem_autodiff::{Tape, Tensor, Var};

use super::setup::OpticalSetup;
use crate::error::{Error, Result};
use crate::exec::par_map;

/// Fractional profile index of every grid sample: `r / r_aperture · (R − 1)`.
fn radial_positions(setup: &OpticalSetup) -> Vec<f64> {
    let scale = (setup.radial_samples - 1) as f64 / setup.aperture_radius_um();
    setup.radius2().iter().map(|r2| r2.sqrt() * scale).collect()
}

/// Rotationally symmetric `[n, n]` height map from a radial profile.
///
/// The profile spans radius 0 to the aperture edge; samples beyond the edge
/// take the last value.
pub fn radial_to_2d(tape: &mut Tape, profile: Var, setup: &OpticalSetup) -> Result<Var> {
    let n = setup.grid_n;
    if tape.shape(profile) != [setup.radial_samples] {
        return Err(Error::InvalidArgument(format!(
            "height profile shape {:?}, expected [{}]",
            tape.shape(profile),
            setup.radial_samples
        )));
    }
    Ok(tape.radial_interp(profile, &radial_positions(setup), &[n, n])?)
}

/// Constants of the propagation for one wavelength.
struct BandOptics {
    /// Circular aperture `A`, duplicated over the pair axis.
    aperture: Tensor,
    /// Point-source phase `2π/λ · r²/(2d)`.
    base_phase: Tensor,
    /// `2π Δn / λ`, multiplying the height map.
    phase_per_um: f64,
    /// Fresnel transfer function `[n, n, 2]` in FFT order.
    transfer: Tensor,
}

fn fftfreq(i: usize, n: usize, d: f64) -> f64 {
    let k = if i < n.div_ceil(2) { i as f64 } else { i as f64 - n as f64 };
    k / (n as f64 * d)
}

impl BandOptics {
    fn new(setup: &OpticalSetup, lambda_nm: f64) -> Self {
        let n = setup.grid_n;
        let lambda = lambda_nm * 1e-3;
        let d = setup.scene_distance_d_mm * 1e3;
        let z = setup.propagation_z_mm * 1e3;
        let r2 = setup.radius2();
        let rad2 = setup.aperture_radius_um().powi(2);
        let aperture = Tensor::from_fn([n, n, 2], |i| if r2[i / 2] <= rad2 { 1.0 } else { 0.0 });
        let k = 2.0 * PI / lambda;
        let base_phase = Tensor::from_fn([n, n], |i| k * r2[i] / (2.0 * d));
        let mut transfer = Tensor::zeros([n, n, 2]);
        let carrier = k * z;
        for (p, pair) in transfer.data_mut().chunks_exact_mut(2).enumerate() {
            let fy = fftfreq(p / n, n, setup.pitch_um);
            let fx = fftfreq(p % n, n, setup.pitch_um);
            let ph = carrier - PI * lambda * z * (fx * fx + fy * fy);
            pair[0] = ph.cos();
            pair[1] = ph.sin();
        }
        Self {
            aperture,
            base_phase,
            phase_per_um: 2.0 * PI * setup.delta_n / lambda,
            transfer,
        }
    }
}

/// Everything [`BandOptics`] depends on, bit-exact.
type BandKey = [u64; 7];

fn band_key(setup: &OpticalSetup, lambda_nm: f64) -> BandKey {
    [
        setup.grid_n as u64,
        setup.pitch_um.to_bits(),
        setup.aperture_diameter_mm.to_bits(),
        setup.delta_n.to_bits(),
        setup.scene_distance_d_mm.to_bits(),
        setup.propagation_z_mm.to_bits(),
        lambda_nm.to_bits(),
    ]
}

/// Bands kept; one band of a 256 grid is about 2.6 MB.
const BAND_CACHE: usize = 32;

/// Propagation constants are recomputed for every step otherwise; the
/// cache keeps the most recently used bands.
fn band_optics(setup: &OpticalSetup, lambda_nm: f64) -> Arc<BandOptics> {
    static CACHE: Mutex<Vec<(BandKey, Arc<BandOptics>)>> = Mutex::new(Vec::new());
    let key = band_key(setup, lambda_nm);
    if let Some(hit) = CACHE.lock().expect("band cache").iter().find(|(k, _)| *k == key) {
        return hit.1.clone();
    }
    let made = Arc::new(BandOptics::new(setup, lambda_nm));
    let mut cache = CACHE.lock().expect("band cache");
    if cache.len() >= BAND_CACHE {
        cache.remove(0);
    }
    cache.push((key, made.clone()));
    made
}

/// Intermediate fields of one band's propagation.
struct BandVars {
    doe_field: Var,
    sensor_intensity: Var,
    psf: Var,
}

fn band_forward(tape: &mut Tape, height_map: Var, setup: &OpticalSetup, lambda_nm: f64) -> Result<BandVars> {
    let c = band_optics(setup, lambda_nm);
    let scaled = tape.scale(height_map, c.phase_per_um);
    let base = tape.constant(c.base_phase.clone());
    let phase = tape.add(scaled, base)?;
    let wave = tape.complex_exp(phase);
    let aperture = tape.constant(c.aperture.clone());
    let doe_field = tape.mul(wave, aperture)?;
    let spectrum = tape.fft2(doe_field)?;
    let transfer = tape.constant(c.transfer.clone());
    let propagated = tape.complex_mul(spectrum, transfer)?;
    let sensor = tape.ifft2(propagated)?;
    let sensor_intensity = tape.complex_abs2(sensor)?;
    let off = setup.window_offset();
    let small = tape.area_downsample(sensor_intensity, off, off, setup.block, setup.psf_window)?;
    let psf = tape.normalize_sum(small)?;
    Ok(BandVars {
        doe_field,
        sensor_intensity,
        psf,
    })
}

/// Per-band PSFs `[k, k, L]` of the DOE described by a radial height profile.
///
/// Every band: phase delay `2πΔn·H/λ` on a point-source wave, circular
/// aperture, Fresnel transfer over `z`, squared magnitude, box-downsampling
/// to the image grid and normalization to unit sum.
pub fn height_to_psf(tape: &mut Tape, profile: Var, setup: &OpticalSetup) -> Result<Var> {
    setup.validate()?;
    let hmap = radial_to_2d(tape, profile, setup)?;
    let k = setup.psf_window;
    let mut bands = Vec::with_capacity(setup.bands());
    for &lambda in &setup.wavelengths_nm {
        let b = band_forward(tape, hmap, setup, lambda)?;
        bands.push(tape.reshape(b.psf, &[k, k, 1])?);
    }
    Ok(tape.concat(&bands)?)
}

/// Plain-value propagation of a height profile with its energy bookkeeping.
#[derive(Debug, Clone)]
pub struct PsfDerivation {
    /// `[k, k, L]`, unit sum per band.
    pub psf: Tensor,
    /// `Σ|U_doe|²` per band.
    pub doe_energy: Vec<f64>,
    /// `Σ|U_sensor|²` per band, before windowing.
    pub sensor_energy: Vec<f64>,
    /// `|U_sensor|²` on the full grid, per band.
    pub sensor_intensity: Vec<Tensor>,
}

pub fn derive_psf(profile: &Tensor, setup: &OpticalSetup) -> Result<PsfDerivation> {
    setup.validate()?;
    let k = setup.psf_window;
    let l = setup.bands();
    let per_band = par_map(&setup.wavelengths_nm, |_, &lambda| -> Result<_> {
        let mut tape = Tape::new();
        let p = tape.constant(profile.clone());
        let hmap = radial_to_2d(&mut tape, p, setup)?;
        let b = band_forward(&mut tape, hmap, setup, lambda)?;
        let energy = |v: Var| tape.value(v).data().iter().map(|a| a * a).sum::<f64>();
        Ok((
            tape.value(b.psf).clone(),
            energy(b.doe_field),
            tape.value(b.sensor_intensity).sum(),
            tape.value(b.sensor_intensity).clone(),
        ))
    });
    let mut psf = Tensor::zeros([k, k, l]);
    let mut out = PsfDerivation {
        psf: Tensor::zeros([0]),
        doe_energy: Vec::with_capacity(l),
        sensor_energy: Vec::with_capacity(l),
        sensor_intensity: Vec::with_capacity(l),
    };
    for (band, r) in per_band.into_iter().enumerate() {
        let (p, de, se, si) = r?;
        for (i, v) in p.data().iter().enumerate() {
            psf.data_mut()[i * l + band] = *v;
        }
        out.doe_energy.push(de);
        out.sensor_energy.push(se);
        out.sensor_intensity.push(si);
    }
    out.psf = psf;
    Ok(out)
}

/// PSF stack derived band by band on separate tapes, kept for the
/// vector-Jacobian product back to the height profile.
pub struct DerivedPsf {
    bands: Vec<(Tape, Var, Var)>,
    psf: Tensor,
}

impl DerivedPsf {
    pub fn compute(profile: &Tensor, setup: &OpticalSetup) -> Result<Self> {
        setup.validate()?;
        let k = setup.psf_window;
        let l = setup.bands();
        let built = par_map(&setup.wavelengths_nm, |_, &lambda| -> Result<_> {
            let mut tape = Tape::new();
            let p = tape.param(profile.clone());
            let hmap = radial_to_2d(&mut tape, p, setup)?;
            let b = band_forward(&mut tape, hmap, setup, lambda)?;
            Ok((tape, p, b.psf))
        });
        let bands = built.into_iter().collect::<Result<Vec<_>>>()?;
        let mut psf = Tensor::zeros([k, k, l]);
        for (band, (tape, _, out)) in bands.iter().enumerate() {
            for (i, v) in tape.value(*out).data().iter().enumerate() {
                psf.data_mut()[i * l + band] = *v;
            }
        }
        Ok(Self { bands, psf })
    }

    pub fn psf(&self) -> &Tensor {
        &self.psf
    }

    /// Gradient with respect to the height profile for an upstream gradient
    /// `seed` shaped like the PSF stack. Bands are summed in order.
    pub fn vjp(&self, seed: &Tensor) -> Result<Tensor> {
        if seed.shape() != self.psf.shape() {
            return Err(uem_autodiff::Error::ShapeMismatch {
                op: "psf_vjp",
                lhs: self.psf.shape().to_vec(),
                rhs: seed.shape().to_vec(),
            }
            .into());
        }
        let l = self.bands.len();
        let k = self.psf.shape()[0];
        let parts = par_map(&self.bands, |band, (tape, p, out)| -> Result<Tensor> {
            let s = Tensor::from_fn([k, k], |i| seed.data()[i * l + band]);
            let mut g = tape.backward_with_seed(*out, s)?;
            Ok(g.take(*p).unwrap_or_else(|| Tensor::zeros(tape.shape(*p).to_vec())))
        });
        let mut total: Option<Tensor> = None;
        for part in parts {
            let part = part?;
            match total.as_mut() {
                None => total = Some(part),
                Some(t) => t.axpy(1.0, &part)?,
            }
        }
        Ok(total.expect("at least one band"))
    }
}
