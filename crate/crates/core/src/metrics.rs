//! Reconstruction quality metrics and the nearest-neighbour RGB baseline.
//!
//! Cubes are `[H, W, L]` tensors; PSNR assumes radiance normalized to `[0, 1]`.

use serde::{Deserialize, Serialize};
use uem_autodiff::Tensor;

use crate::data::ResponseCurve;
use crate::error::{Error, Result};

/// Reported PSNR for a zero-error reconstruction.
pub const PSNR_CAP_DB: f64 = 99.0;

fn check(op: &'static str, pred: &Tensor, gt: &Tensor) -> Result<usize> {
    if pred.shape() != gt.shape() || gt.is_empty() {
        return Err(uem_autodiff::Error::ShapeMismatch {
            op,
            lhs: pred.shape().to_vec(),
            rhs: gt.shape().to_vec(),
        }
        .into());
    }
    Ok(gt.last_dim().max(1))
}

fn db(peak: f64, mse: f64) -> f64 {
    if mse == 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB)
    }
}

/// `10 log10(max² / MSE)`, capped at 99 dB.
pub fn psnr(pred: &Tensor, gt: &Tensor, max_val: f64) -> Result<f64> {
    check("psnr", pred, gt)?;
    let mse = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(p, g)| (p - g) * (p - g))
        .sum::<f64>()
        / gt.len() as f64;
    Ok(db(max_val, mse))
}

/// Per-band PSNR averaged over bands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsnrSi {
    pub db: f64,
    /// Bands whose ground truth is identically zero (left out of the mean).
    pub skipped_bands: usize,
}

/// PSNR with each band's peak set to that band's ground-truth maximum.
pub fn psnr_si(pred: &Tensor, gt: &Tensor) -> Result<PsnrSi> {
    let l = check("psnr_si", pred, gt)?;
    let mut peak = vec![f64::NEG_INFINITY; l];
    let mut sq = vec![0.0; l];
    for (i, (p, g)) in pred.data().iter().zip(gt.data()).enumerate() {
        peak[i % l] = peak[i % l].max(*g);
        sq[i % l] += (p - g) * (p - g);
    }
    let n = (gt.len() / l) as f64;
    let used: Vec<f64> = (0..l)
        .filter(|&b| peak[b] > 0.0)
        .map(|b| db(peak[b], sq[b] / n))
        .collect();
    let value = if used.is_empty() {
        0.0
    } else {
        used.iter().sum::<f64>() / used.len() as f64
    };
    Ok(PsnrSi {
        db: value,
        skipped_bands: l - used.len(),
    })
}

/// Mean spectral angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sam {
    pub rad: f64,
    /// Pixels where either spectrum has zero norm.
    pub skipped_pixels: usize,
}

impl Sam {
    pub fn degrees(&self) -> f64 {
        self.rad.to_degrees()
    }
}

/// Per-pixel spectral angle `arccos(⟨u, v⟩ / ‖u‖‖v‖)`, averaged over pixels.
pub fn sam(pred: &Tensor, gt: &Tensor) -> Result<Sam> {
    let l = check("sam", pred, gt)?;
    let (mut total, mut used, mut skipped) = (0.0, 0usize, 0usize);
    for (u, v) in pred.data().chunks_exact(l).zip(gt.data().chunks_exact(l)) {
        let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
        let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if nu < 1e-12 || nv < 1e-12 {
            skipped += 1;
            continue;
        }
        total += (dot / (nu * nv).max(1e-12)).clamp(-1.0, 1.0).acos();
        used += 1;
    }
    Ok(Sam {
        rad: if used == 0 { 0.0 } else { total / used as f64 },
        skipped_pixels: skipped,
    })
}

/// Band means below this are treated as empty and left out of ERGAS.
pub const ERGAS_MEAN_GUARD: f64 = 1e-8;

/// Per-band ground-truth means; the ERGAS loss reuses these.
pub(crate) fn band_means(gt: &Tensor) -> Vec<f64> {
    let l = gt.last_dim().max(1);
    let mut m = vec![0.0; l];
    for (i, g) in gt.data().iter().enumerate() {
        m[i % l] += g;
    }
    let n = (gt.len() / l) as f64;
    m.iter_mut().for_each(|a| *a /= n);
    m
}

/// `100 · ratio · sqrt(mean_l (RMSE_l / μ_l)²)` over bands with `μ_l > 1e-8`.
pub fn ergas(pred: &Tensor, gt: &Tensor, ratio: f64) -> Result<f64> {
    let l = check("ergas", pred, gt)?;
    let mu = band_means(gt);
    let mut sq = vec![0.0; l];
    for (i, (p, g)) in pred.data().iter().zip(gt.data()).enumerate() {
        sq[i % l] += (p - g) * (p - g);
    }
    let n = (gt.len() / l) as f64;
    let (mut acc, mut used) = (0.0, 0usize);
    for b in 0..l {
        if mu[b] > ERGAS_MEAN_GUARD {
            acc += (sq[b] / n) / (mu[b] * mu[b]);
            used += 1;
        }
    }
    if used == 0 {
        return Ok(0.0);
    }
    Ok(100.0 * ratio * (acc / used as f64).sqrt())
}

/// For every band, the RGB channel with the largest response weight (ties to the lowest channel).
pub fn nn_assignment(response: &ResponseCurve) -> Vec<usize> {
    assignment_from_weights(&response.to_tensor())
}

/// [`nn_assignment`] for a raw `[3, L]` weight array.
pub fn assignment_from_weights(w: &Tensor) -> Vec<usize> {
    let l = w.last_dim();
    let d = w.data();
    (0..l)
        .map(|b| {
            let mut best = 0;
            for c in 1..3 {
                if d[c * l + b] > d[best * l + b] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Copy into band `l` the RGB channel assigned to it by [`nn_assignment`].
pub fn nn_baseline(rgb: &Tensor, response: &ResponseCurve) -> Result<Tensor> {
    if rgb.shape().len() != 3 || rgb.shape()[2] != 3 {
        return Err(Error::InvalidArgument(format!(
            "baseline expects an [H, W, 3] image, got {:?}",
            rgb.shape()
        )));
    }
    let assign = nn_assignment(response);
    let l = assign.len();
    let (h, w) = (rgb.shape()[0], rgb.shape()[1]);
    let src = rgb.data();
    let mut out = Vec::with_capacity(h * w * l);
    for px in src.chunks_exact(3) {
        out.extend(assign.iter().map(|&c| px[c]));
    }
    Ok(Tensor::new(vec![h, w, l], out)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr_db: f64,
    pub psnr_si_db: f64,
    pub sam_rad: f64,
    pub ergas: f64,
    #[serde(default)]
    pub skipped_bands: usize,
    #[serde(default)]
    pub skipped_pixels: usize,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "psnr,psnr_si,sam,ergas";

    pub fn evaluate(pred: &Tensor, gt: &Tensor) -> Result<Self> {
        let si = psnr_si(pred, gt)?;
        let s = sam(pred, gt)?;
        Ok(Self {
            psnr_db: psnr(pred, gt, 1.0)?,
            psnr_si_db: si.db,
            sam_rad: s.rad,
            ergas: ergas(pred, gt, 1.0)?,
            skipped_bands: si.skipped_bands,
            skipped_pixels: s.skipped_pixels,
        })
    }

    /// Field-wise arithmetic mean; `None` for an empty slice.
    pub fn mean(reports: &[MetricReport]) -> Option<Self> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(Self {
            psnr_db: avg(|r| r.psnr_db),
            psnr_si_db: avg(|r| r.psnr_si_db),
            sam_rad: avg(|r| r.sam_rad),
            ergas: avg(|r| r.ergas),
            skipped_bands: reports.iter().map(|r| r.skipped_bands).sum(),
            skipped_pixels: reports.iter().map(|r| r.skipped_pixels).sum(),
        })
    }

    pub fn sam_degrees(&self) -> f64 {
        self.sam_rad.to_degrees()
    }

    /// `psnr,psnr_si,sam,ergas` row with shortest round-trip float formatting.
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.psnr_db, self.psnr_si_db, self.sam_rad, self.ergas)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(shape: [usize; 3], f: impl Fn(usize) -> f64) -> Tensor {
        Tensor::from_fn(shape.to_vec(), f)
    }

    #[test]
    fn psnr_cap_and_arithmetic() {
        let g = cube([2, 2, 3], |i| i as f64 / 12.0);
        assert_eq!(psnr(&g, &g, 1.0).unwrap(), 99.0);
        let p = g.map(|v| v + 0.1);
        assert!((psnr(&p, &g, 1.0).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = Tensor::zeros([2, 2, 3]);
        let b = Tensor::zeros([2, 2, 4]);
        assert!(psnr(&a, &b, 1.0).is_err());
        assert!(sam(&a, &b).is_err());
    }

    #[test]
    fn zero_band_is_skipped_in_psnr_si() {
        let g = cube([2, 2, 2], |i| if i % 2 == 0 { 0.0 } else { 0.5 });
        let p = g.map(|v| v + 0.05);
        let r = psnr_si(&p, &g).unwrap();
        assert_eq!(r.skipped_bands, 1);
        let expect = 10.0 * (0.25f64 / 0.0025).log10();
        assert!((r.db - expect).abs() < 1e-12);
    }

    #[test]
    fn sam_scale_invariance_and_orthogonality() {
        let g = cube([3, 3, 4], |i| 0.1 + (i % 7) as f64 / 7.0);
        let p = g.map(|v| 2.0 * v);
        assert!(sam(&p, &g).unwrap().rad.abs() < 1e-7);
        let a = Tensor::new(vec![1, 1, 2], vec![1.0, 0.0]).unwrap();
        let b = Tensor::new(vec![1, 1, 2], vec![0.0, 1.0]).unwrap();
        assert_eq!(sam(&a, &b).unwrap().rad, std::f64::consts::FRAC_PI_2);
        let z = Tensor::zeros([1, 1, 2]);
        assert_eq!(sam(&z, &b).unwrap().skipped_pixels, 1);
    }

    #[test]
    fn ergas_single_band_rmse_equal_mean_is_100() {
        let g = Tensor::full([2, 2, 1], 0.5);
        let p = Tensor::full([2, 2, 1], 1.0);
        assert!((ergas(&p, &g, 1.0).unwrap() - 100.0).abs() < 1e-12);
        assert_eq!(ergas(&g, &g, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn baseline_identity_response_copies_channels() {
        let w = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let r = ResponseCurve::new(vec![450.0, 550.0, 650.0], w, true).unwrap();
        let rgb = cube([2, 3, 3], |i| i as f64);
        assert_eq!(nn_baseline(&rgb, &r).unwrap(), rgb);
    }

    #[test]
    fn report_mean_and_csv() {
        let a = MetricReport {
            psnr_db: 10.0,
            psnr_si_db: 20.0,
            sam_rad: 0.1,
            ergas: 5.0,
            skipped_bands: 0,
            skipped_pixels: 0,
        };
        let b = MetricReport {
            psnr_db: 30.0,
            ..a
        };
        let m = MetricReport::mean(&[a, b]).unwrap();
        assert_eq!(m.psnr_db, 20.0);
        assert_eq!(m.csv_row(), "20,20,0.1,5");
        let back: MetricReport = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }
}
