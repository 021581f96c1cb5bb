use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::loss::LossKind;
use crate::decoders::{DecoderConfig, DecoderKind};
use crate::error::{Error, Result};
use crate::optics::{EncoderVariant, OpticalSetup};

/// `key = value` lines; `#` starts a comment. Keys are dotted (`train.epochs`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: Vec<(String, String, usize)>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, String, usize)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body.split_once('=').ok_or_else(|| Error::Config {
                line,
                reason: format!("expected `key = value`, got {body:?}"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::Config {
                    line,
                    reason: "empty key".into(),
                });
            }
            if entries.iter().any(|(e, _, _)| e == k) {
                return Err(Error::Config {
                    line,
                    reason: format!("duplicate key {k:?}"),
                });
            }
            entries.push((k.to_string(), v.to_string(), line));
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _, _)| k == key).map(|(_, v, _)| v.as_str())
    }

    fn line(&self, key: &str) -> usize {
        self.entries.iter().find(|(k, _, _)| k == key).map_or(0, |e| e.2)
    }

    /// Typed value of `key`, if present.
    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>().map_err(|e| Error::Config {
                    line: self.line(key),
                    reason: format!("{key}: {e}"),
                })
            })
            .transpose()
    }

    /// Comma-separated list of floats.
    pub fn floats(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim().parse::<f64>().map_err(|e| Error::Config {
                            line: self.line(key),
                            reason: format!("{key}: {e}"),
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn keys(&self) -> impl Iterator<Item = (&str, usize)> {
        self.entries.iter().map(|(k, _, l)| (k.as_str(), *l))
    }
}

/// Everything a training run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub encoder: EncoderVariant,
    pub decoder: DecoderConfig,
    pub loss: LossKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub noise_sigma: f64,
    /// `0` trains on whole cubes.
    pub patch_size: usize,
    pub patch_stride: usize,
    pub optics: OpticalSetup,
    /// Fixed response for non-learnable casts; a camera-like curve if unset.
    pub response_csv: Option<PathBuf>,
    /// Clamp learnable responses to `≥ 0`; defaults to on for `wem-i-pc` only.
    pub project_positive: Option<bool>,
    /// Keep DOE heights inside `[0, h_max]`.
    pub clamp_heights: bool,
    /// Parameters excluded from optimization regardless of the cast.
    pub freeze: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderVariant::WemI,
            decoder: DecoderConfig::default(),
            loss: LossKind::Mae,
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 8,
            seed: 0,
            noise_sigma: 0.0,
            patch_size: 0,
            patch_stride: 0,
            optics: OpticalSetup::default(),
            response_csv: None,
            project_positive: None,
            clamp_heights: true,
            freeze: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be ≥ 0", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise sigma {} < 0", self.noise_sigma)));
        }
        self.decoder.validate()?;
        self.optics.validate()
    }

    pub fn positive_response(&self) -> bool {
        self.project_positive.unwrap_or(self.encoder.positive_response())
    }

    /// Apply `encoder.*`, `decoder.*`, `train.*` and `optics.*` keys. Keys
    /// in other sections are left for the caller.
    pub fn apply(&mut self, kv: &KvConfig) -> Result<()> {
        for (key, line) in kv.keys() {
            let known = KNOWN.contains(&key);
            let section = key.split('.').next().unwrap_or("");
            if !known && ["encoder", "decoder", "train", "optics"].contains(&section) {
                return Err(Error::Config {
                    line,
                    reason: format!("unknown key {key:?}"),
                });
            }
        }
        macro_rules! set {
            ($key:literal, $field:expr) => {
                if let Some(v) = kv.parsed($key)? {
                    $field = v;
                }
            };
        }
        set!("encoder.variant", self.encoder);
        if let Some(p) = kv.get("encoder.response") {
            self.response_csv = Some(PathBuf::from(p));
        }
        set!("decoder.kind", self.decoder.kind);
        set!("decoder.kernel", self.decoder.kernel);
        set!("decoder.hidden", self.decoder.hidden);
        set!("decoder.unet_depth", self.decoder.unet_depth);
        set!("decoder.unet_base_width", self.decoder.unet_base_width);
        set!("decoder.unet_max_width", self.decoder.unet_max_width);
        set!("decoder.stages", self.decoder.stages);
        set!("decoder.stage_depth", self.decoder.stage_depth);
        set!("train.loss", self.loss);
        set!("train.learning_rate", self.learning_rate);
        set!("train.epochs", self.epochs);
        set!("train.batch_size", self.batch_size);
        set!("train.seed", self.seed);
        set!("train.noise_sigma", self.noise_sigma);
        set!("train.patch_size", self.patch_size);
        set!("train.patch_stride", self.patch_stride);
        if let Some(v) = kv.parsed::<bool>("train.project_positive")? {
            self.project_positive = Some(v);
        }
        set!("train.clamp_heights", self.clamp_heights);
        if let Some(v) = kv.get("train.freeze") {
            self.freeze = v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect();
        }
        set!("optics.grid_n", self.optics.grid_n);
        set!("optics.pitch_um", self.optics.pitch_um);
        set!("optics.aperture_diameter_mm", self.optics.aperture_diameter_mm);
        set!("optics.delta_n", self.optics.delta_n);
        set!("optics.scene_distance_d_mm", self.optics.scene_distance_d_mm);
        set!("optics.propagation_z_mm", self.optics.propagation_z_mm);
        if let Some(w) = kv.floats("optics.wavelengths_nm")? {
            self.optics.wavelengths_nm = w;
        }
        set!("optics.h_max_um", self.optics.h_max_um);
        set!("optics.radial_samples", self.optics.radial_samples);
        set!("optics.psf_window", self.optics.psf_window);
        set!("optics.block", self.optics.block);
        Ok(())
    }

    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(kv)?;
        Ok(cfg)
    }

    /// The same settings in `key = value` form.
    pub fn to_kv(&self) -> String {
        let o = &self.optics;
        let d = &self.decoder;
        let wl: Vec<String> = o.wavelengths_nm.iter().map(|w| w.to_string()).collect();
        let mut lines = vec![
            format!("encoder.variant = {}", self.encoder),
            format!("decoder.kind = {}", d.kind),
            format!("decoder.kernel = {}", d.kernel),
            format!("decoder.hidden = {}", d.hidden),
            format!("decoder.unet_depth = {}", d.unet_depth),
            format!("decoder.unet_base_width = {}", d.unet_base_width),
            format!("decoder.unet_max_width = {}", d.unet_max_width),
            format!("decoder.stages = {}", d.stages),
            format!("decoder.stage_depth = {}", d.stage_depth),
            format!("train.loss = {}", self.loss),
            format!("train.learning_rate = {}", self.learning_rate),
            format!("train.epochs = {}", self.epochs),
            format!("train.batch_size = {}", self.batch_size),
            format!("train.seed = {}", self.seed),
            format!("train.noise_sigma = {}", self.noise_sigma),
            format!("train.patch_size = {}", self.patch_size),
            format!("train.patch_stride = {}", self.patch_stride),
            format!("train.clamp_heights = {}", self.clamp_heights),
            format!("train.freeze = {}", self.freeze.join(",")),
            format!("optics.grid_n = {}", o.grid_n),
            format!("optics.pitch_um = {}", o.pitch_um),
            format!("optics.aperture_diameter_mm = {}", o.aperture_diameter_mm),
            format!("optics.delta_n = {}", o.delta_n),
            format!("optics.scene_distance_d_mm = {}", o.scene_distance_d_mm),
            format!("optics.propagation_z_mm = {}", o.propagation_z_mm),
            format!("optics.wavelengths_nm = {}", wl.join(",")),
            format!("optics.h_max_um = {}", o.h_max_um),
            format!("optics.radial_samples = {}", o.radial_samples),
            format!("optics.psf_window = {}", o.psf_window),
            format!("optics.block = {}", o.block),
        ];
        if let Some(p) = &self.response_csv {
            lines.push(format!("encoder.response = {}", p.display()));
        }
        if let Some(p) = self.project_positive {
            lines.push(format!("train.project_positive = {p}"));
        }
        lines.join("\n") + "\n"
    }
}

const KNOWN: &[&str] = &[
    "encoder.variant",
    "encoder.response",
    "decoder.kind",
    "decoder.kernel",
    "decoder.hidden",
    "decoder.unet_depth",
    "decoder.unet_base_width",
    "decoder.unet_max_width",
    "decoder.stages",
    "decoder.stage_depth",
    "train.loss",
    "train.learning_rate",
    "train.epochs",
    "train.batch_size",
    "train.seed",
    "train.noise_sigma",
    "train.patch_size",
    "train.patch_stride",
    "train.project_positive",
    "train.clamp_heights",
    "train.freeze",
    "optics.grid_n",
    "optics.pitch_um",
    "optics.aperture_diameter_mm",
    "optics.delta_n",
    "optics.scene_distance_d_mm",
    "optics.propagation_z_mm",
    "optics.wavelengths_nm",
    "optics.h_max_um",
    "optics.radial_samples",
    "optics.psf_window",
    "optics.block",
];

impl FromStr for DecoderConfig {
    type Err = Error;

    /// Default configuration of the named decoder kind.
    fn from_str(s: &str) -> Result<Self> {
        Ok(Self {
            kind: s.parse::<DecoderKind>()?,
            ..Self::default()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let kv = KvConfig::parse(
            "# run\nencoder.variant = pem-i\ntrain.epochs = 3  # short\noptics.wavelengths_nm = 450, 550,650\ndata.train = x.scube\n",
        )
        .unwrap();
        let c = TrainConfig::from_kv(&kv).unwrap();
        assert_eq!(c.encoder, EncoderVariant::PemI);
        assert_eq!(c.epochs, 3);
        assert_eq!(c.optics.wavelengths_nm, vec![450.0, 550.0, 650.0]);
        assert_eq!(kv.get("data.train"), Some("x.scube"));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = KvConfig::parse("a = 1\nnonsense\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }));
        let kv = KvConfig::parse("train.epochs = x\n").unwrap();
        assert!(matches!(TrainConfig::from_kv(&kv), Err(Error::Config { line: 1, .. })));
        let kv = KvConfig::parse("\ntrain.epoch = 2\n").unwrap();
        assert!(matches!(TrainConfig::from_kv(&kv), Err(Error::Config { line: 2, .. })));
    }

    #[test]
    fn kv_echo_round_trips() {
        let c = TrainConfig {
            encoder: EncoderVariant::WemIPc,
            learning_rate: 0.25,
            freeze: vec!["a".into(), "b".into()],
            project_positive: Some(false),
            ..TrainConfig::default()
        };
        let back = TrainConfig::from_kv(&KvConfig::parse(&c.to_kv()).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn validation() {
        let mut c = TrainConfig::default();
        c.validate().unwrap();
        c.epochs = 0;
        assert!(c.validate().is_err());
    }
}
