use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use uem_autodiff::Tensor;

use super::adam::{adam_step, AdamState, Projections};
use super::config::TrainConfig;
use super::model::Model;
use crate::data::{crop_patches, gaussian_noise, load_response_csv, ResponseCurve, SpectralCube};
use crate::error::{Error, Result};
use crate::exec::par_map;
use crate::metrics::{nn_baseline, MetricReport};
use crate::optics::{encode_wem, EncoderConfig, EncoderVariant, DOE_HEIGHTS, RESPONSE};
use crate::params::{group_seed, ParamStore};

/// Outcome of a training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    /// Mean training loss per epoch.
    pub train_loss: Vec<f64>,
    /// Validation metrics after each epoch.
    pub val_metrics: Vec<MetricReport>,
    /// Nearest-neighbour baseline on the validation set under the fixed response.
    pub baseline: MetricReport,
    pub wall_time_s: f64,
    pub parameter_count: usize,
    #[serde(skip)]
    pub model: Option<Model>,
}

impl TrainReport {
    pub fn final_metrics(&self) -> &MetricReport {
        self.val_metrics.last().expect("at least one epoch")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `epoch,train_loss,psnr,psnr_si,sam,ergas`, one row per epoch.
    pub fn loss_csv(&self) -> String {
        let mut s = format!("epoch,train_loss,{}\n", MetricReport::CSV_HEADER);
        for (e, (l, m)) in self.train_loss.iter().zip(&self.val_metrics).enumerate() {
            s.push_str(&format!("{},{},{}\n", e + 1, l, m.csv_row()));
        }
        s
    }

    /// `(train_loss, val_metrics)`, the part that must repeat under a fixed seed.
    pub fn history(&self) -> (&[f64], &[MetricReport]) {
        (&self.train_loss, &self.val_metrics)
    }
}

fn band_grid(train: &[SpectralCube], val: &[SpectralCube]) -> Result<Vec<f64>> {
    let first = train
        .first()
        .ok_or_else(|| Error::InvalidArgument("training set is empty".into()))?;
    if val.is_empty() {
        return Err(Error::InvalidArgument("validation set is empty".into()));
    }
    let wl = first.wavelengths_nm().to_vec();
    for c in train.iter().chain(val) {
        if c.bands() != wl.len() {
            return Err(Error::BandMismatch(c.bands(), wl.len()));
        }
        if c.wavelengths_nm() != wl.as_slice() {
            return Err(Error::InvalidArgument("cubes do not share a wavelength grid".into()));
        }
    }
    Ok(wl)
}

fn to_items(cubes: &[SpectralCube], cfg: &TrainConfig) -> Result<Vec<Tensor>> {
    let mut out = Vec::new();
    for c in cubes {
        if cfg.patch_size > 0 {
            let stride = if cfg.patch_stride > 0 { cfg.patch_stride } else { cfg.patch_size };
            out.extend(crop_patches(c, cfg.patch_size, stride)?.iter().map(SpectralCube::to_tensor));
        } else {
            out.push(c.to_tensor());
        }
    }
    let shape = out[0].shape().to_vec();
    if let Some(t) = out.iter().find(|t| t.shape() != shape.as_slice()) {
        return Err(Error::InvalidArgument(format!(
            "items must share one size, got {:?} and {:?}",
            shape,
            t.shape()
        )));
    }
    Ok(out)
}

/// Fixed response of the non-learnable casts on the data's band grid.
pub fn fixed_response(cfg: &TrainConfig, wavelengths_nm: &[f64]) -> Result<ResponseCurve> {
    match &cfg.response_csv {
        Some(p) => {
            let r = load_response_csv(p, false)?;
            if r.bands() != wavelengths_nm.len() {
                return Err(Error::BandMismatch(r.bands(), wavelengths_nm.len()));
            }
            Ok(r)
        }
        None => ResponseCurve::camera_like(wavelengths_nm),
    }
}

fn noise_for(cfg: &TrainConfig, shape: &[usize], tag: &str) -> Option<Tensor> {
    (cfg.noise_sigma > 0.0).then(|| {
        let mut s = shape.to_vec();
        *s.last_mut().expect("rank 3") = 3;
        gaussian_noise(&s, cfg.noise_sigma, group_seed(cfg.seed, tag))
    })
}

fn validate_model(model: &Model, cfg: &TrainConfig, items: &[Tensor]) -> Result<MetricReport> {
    let psf = model.derived_psf()?;
    let reports = par_map(items, |i, gt| -> Result<MetricReport> {
        let noise = noise_for(cfg, gt.shape(), &format!("val-noise/{i}"));
        let (_, pred) = model.run_with(gt, psf.as_ref(), noise.as_ref())?;
        MetricReport::evaluate(&pred, gt)
    });
    let reports = reports.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::mean(&reports).expect("nonempty validation set"))
}

fn baseline_metrics(cfg: &TrainConfig, response: &ResponseCurve, items: &[Tensor]) -> Result<MetricReport> {
    let reports = par_map(items, |i, gt| -> Result<MetricReport> {
        let mut rgb = encode_wem(gt, response)?;
        if let Some(n) = noise_for(cfg, gt.shape(), &format!("val-noise/{i}")) {
            rgb.axpy(1.0, &n)?;
        }
        MetricReport::evaluate(&nn_baseline(&rgb, response)?, gt)
    });
    let reports = reports.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::mean(&reports).expect("nonempty validation set"))
}

/// Joint optimization of the configured cast and decoder.
pub fn train_joint(cfg: &TrainConfig, train: &[SpectralCube], val: &[SpectralCube]) -> Result<TrainReport> {
    let wl = band_grid(train, val)?;
    let response = fixed_response(cfg, &wl)?;
    train_with_response(cfg, &response, train, val)
}

/// [`train_joint`] with an explicit fixed response.
pub fn train_with_response(
    cfg: &TrainConfig,
    response: &ResponseCurve,
    train: &[SpectralCube],
    val: &[SpectralCube],
) -> Result<TrainReport> {
    let start = Instant::now();
    cfg.validate()?;
    let wl = band_grid(train, val)?;
    if response.bands() != wl.len() {
        return Err(Error::BandMismatch(response.bands(), wl.len()));
    }
    let train_items = to_items(train, cfg)?;
    let val_items = to_items(val, cfg)?;
    let (h, w) = (train_items[0].shape()[0], train_items[0].shape()[1]);
    if val_items[0].shape() != train_items[0].shape() {
        return Err(Error::InvalidArgument("training and validation items differ in size".into()));
    }
    let mut setup = cfg.optics.clone();
    setup.wavelengths_nm = wl;
    let encoder = EncoderConfig {
        variant: cfg.encoder,
        height: h,
        width: w,
        setup,
        response: response.clone(),
    };
    let mut model = Model::init(cfg.seed, encoder, cfg.decoder)?;
    let trainable = model.trainable_names(&cfg.freeze);
    let mut projections = Projections::default();
    if cfg.positive_response() && trainable.iter().any(|n| n == RESPONSE) {
        projections.nonnegative.push(RESPONSE.into());
    }
    if cfg.clamp_heights && cfg.encoder == EncoderVariant::PemP {
        projections.boxed.push((DOE_HEIGHTS.into(), 0.0, cfg.optics.h_max_um));
    }

    let baseline = baseline_metrics(cfg, response, &val_items)?;
    let mut state = AdamState::new();
    let mut train_loss = Vec::with_capacity(cfg.epochs);
    let mut val_metrics = Vec::with_capacity(cfg.epochs);
    let n = train_items.len();
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        if cfg.batch_size < n {
            let mut rng = ChaCha8Rng::seed_from_u64(group_seed(cfg.seed, &format!("shuffle/{epoch}")));
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let psf = model.derived_psf()?;
            let psf_t = psf.as_ref().map(|p| p.psf());
            let results = par_map(batch, |_, &idx| {
                let cube = &train_items[idx];
                let noise = noise_for(cfg, cube.shape(), &format!("noise/{epoch}/{idx}"));
                model.item_gradients(cube, psf_t, noise.as_ref(), cfg.loss, &trainable)
            });
            let mut total = ParamStore::new();
            let mut batch_loss = 0.0;
            for r in results {
                let (l, grads) = r?;
                batch_loss += l;
                for (name, g) in grads {
                    match total.get_mut(&name) {
                        Some(t) => t.axpy(1.0, &g)?,
                        None => total.insert(name, g),
                    }
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    loss: batch_loss,
                });
            }
            epoch_loss += batch_loss;
            let inv = 1.0 / batch.len() as f64;
            for (_, g) in total.iter_mut() {
                g.data_mut().iter_mut().for_each(|v| *v *= inv);
            }
            model.fold_psf_gradient(psf.as_ref(), &mut total)?;
            if total.iter().any(|(_, g)| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    loss: batch_loss * inv,
                });
            }
            adam_step(&mut model.params, &total, &mut state, cfg.learning_rate, &projections)?;
        }
        train_loss.push(epoch_loss / n as f64);
        val_metrics.push(validate_model(&model, cfg, &val_items)?);
    }
    Ok(TrainReport {
        config: cfg.clone(),
        train_loss,
        val_metrics,
        baseline,
        wall_time_s: start.elapsed().as_secs_f64(),
        parameter_count: model.params.numel(),
        model: Some(model),
    })
}

/// Joint optimization of mask, PSF, response and decoder together.
pub fn train_full_uem(cfg: &TrainConfig, train: &[SpectralCube], val: &[SpectralCube]) -> Result<TrainReport> {
    let cfg = TrainConfig {
        encoder: EncoderVariant::UemI,
        ..cfg.clone()
    };
    train_joint(&cfg, train, val)
}

/// Validation result of one response candidate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateResult {
    pub index: usize,
    pub metrics: MetricReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseSelection {
    /// Index of the winning candidate.
    pub best: usize,
    /// Candidates from best to worst.
    pub ranking: Vec<CandidateResult>,
}

/// Train a WEM-P decoder per candidate under the same config and seed and
/// rank by validation PSNR, then lower SAM, then input order.
pub fn select_response(
    candidates: &[ResponseCurve],
    cfg: &TrainConfig,
    train: &[SpectralCube],
    val: &[SpectralCube],
) -> Result<ResponseSelection> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no response candidates".into()));
    }
    let cfg = TrainConfig {
        encoder: EncoderVariant::WemP,
        ..cfg.clone()
    };
    let runs = par_map(candidates, |index, r| -> Result<CandidateResult> {
        let report = train_with_response(&cfg, r, train, val)?;
        Ok(CandidateResult {
            index,
            metrics: *report.final_metrics(),
        })
    });
    let mut ranking = runs.into_iter().collect::<Result<Vec<_>>>()?;
    ranking.sort_by(|a, b| {
        b.metrics
            .psnr_db
            .total_cmp(&a.metrics.psnr_db)
            .then(a.metrics.sam_rad.total_cmp(&b.metrics.sam_rad))
            .then(a.index.cmp(&b.index))
    });
    Ok(ResponseSelection {
        best: ranking[0].index,
        ranking,
    })
}
