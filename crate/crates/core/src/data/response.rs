use std::fs;
use std::path::Path;

use uem_autodiff::Tensor;

use crate::error::{Error, Result};

/// Filter-plus-sensor response `W(λ)`: three channels (r, g, b) over `L` bands.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseCurve {
    wavelengths_nm: Vec<f64>,
    /// Channel-major `3 × L`.
    weights: Vec<f64>,
    constrained_positive: bool,
}

impl ResponseCurve {
    pub fn new(wavelengths_nm: Vec<f64>, weights: Vec<f64>, constrained_positive: bool) -> Result<Self> {
        let l = wavelengths_nm.len();
        if l == 0 {
            return Err(Error::InvalidArgument("response needs at least one band".into()));
        }
        if let Some(row) = wavelengths_nm.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonAscending { row: row + 1 });
        }
        if weights.len() != 3 * l {
            return Err(Error::InvalidArgument(format!(
                "{} weights for 3 channels x {l} bands",
                weights.len()
            )));
        }
        if constrained_positive {
            if let Some(i) = weights.iter().position(|&v| v < 0.0) {
                return Err(Error::ConstraintViolation {
                    channel: i / l,
                    band: i % l,
                    value: weights[i],
                });
            }
        }
        Ok(Self {
            wavelengths_nm,
            weights,
            constrained_positive,
        })
    }

    /// Build from a `[3, L]` tensor.
    pub fn from_tensor(wavelengths_nm: Vec<f64>, t: &Tensor, constrained_positive: bool) -> Result<Self> {
        if t.shape() != [3, wavelengths_nm.len()] {
            return Err(Error::BandMismatch(t.last_dim(), wavelengths_nm.len()));
        }
        Self::new(wavelengths_nm, t.data().to_vec(), constrained_positive)
    }

    /// Smooth camera-like response with red, green and blue lobes peaking
    /// near 600, 540 and 460 nm. Each channel is scaled so that
    /// `Σ_l W[c][l]·Δλ_l = 1`, which keeps RGB values on the cube's scale.
    pub fn camera_like(wavelengths_nm: &[f64]) -> Result<Self> {
        let lobes = [(600.0, 45.0), (540.0, 40.0), (460.0, 35.0)];
        let q = quadrature_weights(wavelengths_nm);
        let mut weights = Vec::with_capacity(3 * wavelengths_nm.len());
        for (mu, sigma) in lobes {
            let raw: Vec<f64> = wavelengths_nm
                .iter()
                .map(|&l| (-0.5 * ((l - mu) / sigma).powi(2)).exp())
                .collect();
            let norm: f64 = raw.iter().zip(&q).map(|(w, q)| w * q).sum();
            weights.extend(raw.iter().map(|w| w / norm));
        }
        Self::new(wavelengths_nm.to_vec(), weights, true)
    }

    pub fn bands(&self) -> usize {
        self.wavelengths_nm.len()
    }

    pub fn wavelengths_nm(&self) -> &[f64] {
        &self.wavelengths_nm
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, channel: usize, band: usize) -> f64 {
        self.weights[channel * self.bands() + band]
    }

    pub fn constrained_positive(&self) -> bool {
        self.constrained_positive
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new([3, self.bands()], self.weights.clone()).expect("layout is consistent")
    }
}

/// Integration weights for `∫ · dλ` over a band grid.
///
/// Uniform grids use the spacing for every band. Non-uniform grids use the
/// trapezoidal rule. A single band gets weight 1.
pub fn quadrature_weights(wavelengths_nm: &[f64]) -> Vec<f64> {
    let l = wavelengths_nm.len();
    if l < 2 {
        return vec![1.0; l];
    }
    let steps: Vec<f64> = wavelengths_nm.windows(2).map(|w| w[1] - w[0]).collect();
    let first = steps[0];
    if steps.iter().all(|s| (s - first).abs() <= 1e-9 * first.abs()) {
        return vec![first; l];
    }
    (0..l)
        .map(|i| {
            let left = if i > 0 { steps[i - 1] } else { 0.0 };
            let right = if i < l - 1 { steps[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

/// Parse a `wavelength_nm,r,g,b` CSV.
pub fn load_response_csv(path: impl AsRef<Path>, constrained_positive: bool) -> Result<ResponseCurve> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_response_csv(&text, constrained_positive)
}

pub(crate) fn parse_response_csv(text: &str, constrained_positive: bool) -> Result<ResponseCurve> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Csv {
        line: 1,
        reason: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != ["wavelength_nm", "r", "g", "b"] {
        return Err(Error::Csv {
            line: 1,
            reason: format!("expected header wavelength_nm,r,g,b, got {header:?}"),
        });
    }
    let mut wl = Vec::new();
    let mut ch: [Vec<f64>; 3] = Default::default();
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::Csv {
                line: i + 1,
                reason: format!("expected 4 columns, found {}", fields.len()),
            });
        }
        let nums = fields
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Csv {
                line: i + 1,
                reason: e.to_string(),
            })?;
        if let Some(&prev) = wl.last() {
            if nums[0] <= prev {
                return Err(Error::NonAscending { row: wl.len() });
            }
        }
        wl.push(nums[0]);
        for c in 0..3 {
            ch[c].push(nums[c + 1]);
        }
    }
    let weights = ch.concat();
    ResponseCurve::new(wl, weights, constrained_positive)
}

pub fn save_response_csv(curve: &ResponseCurve, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("wavelength_nm,r,g,b\n");
    for (l, wl) in curve.wavelengths_nm().iter().enumerate() {
        out.push_str(&format!(
            "{wl},{},{},{}\n",
            curve.weight(0, l),
            curve.weight(1, l),
            curve.weight(2, l)
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
