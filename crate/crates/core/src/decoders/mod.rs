//! Reconstruction networks from RGB measurements back to spectral cubes.

mod simconv;
mod unet;
mod unfold;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use uem_autodiff::{Tape, Tensor, Var};

use crate::error::{Error, Result};
use crate::optics::BoundOperator;
use crate::params::{group_seed, ParamStore};

pub use simconv::{init_sim_conv, sim_conv_forward};
pub use unet::{init_res_unet, res_unet_forward, UNetShape};
pub use unfold::{
    init_unfolding, model_step, model_step_aem, model_step_pem, model_step_wem, unfold_init, unfolding_forward,
    zero_stage_projections,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderKind {
    SimConv,
    ResUNet,
    Unfolding,
}

impl DecoderKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::SimConv => "simconv",
            Self::ResUNet => "resunet",
            Self::Unfolding => "unfolding",
        }
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "simconv" | "sim-conv" | "sim-conv-net" => Ok(Self::SimConv),
            "resunet" | "res-unet" | "res-u-net" => Ok(Self::ResUNet),
            "unfolding" | "unfolding-net" => Ok(Self::Unfolding),
            _ => Err(Error::InvalidArgument(format!("unknown decoder {s:?}"))),
        }
    }
}

/// Decoder hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub kind: DecoderKind,
    /// Spatial kernel size of every convolution (odd).
    pub kernel: usize,
    /// Sim-Conv-Net hidden width.
    pub hidden: usize,
    /// Standalone Res-U-Net depth.
    pub unet_depth: usize,
    /// Channels at the first U-Net level; doubled per level up to `unet_max_width`.
    pub unet_base_width: usize,
    pub unet_max_width: usize,
    /// Unfolding stages `K`.
    pub stages: usize,
    /// Depth of the Res-U-Net inside every unfolding stage.
    pub stage_depth: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            kind: DecoderKind::SimConv,
            kernel: 3,
            hidden: 31,
            unet_depth: 7,
            unet_base_width: 16,
            unet_max_width: 64,
            stages: 4,
            stage_depth: 4,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("decoder kernel {} must be odd", self.kernel)));
        }
        if self.hidden == 0 || self.unet_base_width == 0 || self.unet_max_width == 0 {
            return Err(Error::InvalidArgument("decoder widths must be positive".into()));
        }
        if self.unet_depth == 0 || self.stage_depth == 0 || self.stages == 0 {
            return Err(Error::InvalidArgument("depths and stage count must be at least 1".into()));
        }
        Ok(())
    }

    /// Smallest spatial size multiple the decoder accepts.
    pub fn size_multiple(&self) -> usize {
        match self.kind {
            DecoderKind::SimConv => 1,
            DecoderKind::ResUNet => 1 << (self.unet_depth - 1),
            DecoderKind::Unfolding => 1 << (self.stage_depth - 1),
        }
    }
}

/// Initial decoder tensors, named `decoder.*`.
pub fn init_decoder(seed: u64, cfg: &DecoderConfig, bands: usize) -> Result<ParamStore> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    match cfg.kind {
        DecoderKind::SimConv => init_sim_conv(&mut store, seed, cfg, bands),
        DecoderKind::ResUNet => init_res_unet(&mut store, seed, "decoder.unet", &UNetShape::standalone(cfg, bands)),
        DecoderKind::Unfolding => init_unfolding(&mut store, seed, cfg, bands),
    }
    Ok(store)
}

/// Run the configured decoder on `rgb[H, W, 3]`.
pub fn decode(tape: &mut Tape, cfg: &DecoderConfig, vars: &Vars, rgb: Var, op: &BoundOperator) -> Result<Var> {
    match cfg.kind {
        DecoderKind::SimConv => sim_conv_forward(tape, vars, rgb),
        DecoderKind::ResUNet => {
            res_unet_forward(tape, vars, "decoder.unet", &UNetShape::standalone(cfg, op.bands()), rgb)
        }
        DecoderKind::Unfolding => unfolding_forward(tape, cfg, vars, rgb, op),
    }
}

/// Tape handles of named tensors.
#[derive(Debug, Clone, Default)]
pub struct Vars {
    entries: Vec<(String, Var)>,
}

impl Vars {
    /// Record every tensor of `store`; names accepted by `trainable` become parameters.
    pub fn bind(tape: &mut Tape, store: &ParamStore, trainable: &dyn Fn(&str) -> bool) -> Self {
        let entries = store
            .iter()
            .map(|(n, t)| {
                let v = if trainable(n) {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                };
                (n.to_string(), v)
            })
            .collect();
        Self { entries }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name:?}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.entries.iter().map(|(n, v)| (n.as_str(), *v))
    }
}

/// `U(−b, b)` weights with `b = gain / √fan_in`, deterministic per name.
pub(crate) fn init_weight(seed: u64, name: &str, shape: &[usize], fan_in: usize, gain: f64) -> Tensor {
    let bound = gain / (fan_in as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(group_seed(seed, name));
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-bound..=bound))
}

/// Gain for layers followed by a ReLU.
pub(crate) const RELU_GAIN: f64 = 2.449_489_742_783_178; // √6

/// Gain for linear output layers.
pub(crate) const LINEAR_GAIN: f64 = 1.732_050_807_568_877_2; // √3

/// Conv layer `name.w[k, k, cin, cout]` and `name.b[cout]`.
pub(crate) fn init_conv(store: &mut ParamStore, seed: u64, name: &str, k: usize, cin: usize, cout: usize, gain: f64) {
    let w = format!("{name}.w");
    store.insert(w.clone(), init_weight(seed, &w, &[k, k, cin, cout], k * k * cin, gain));
    store.insert(format!("{name}.b"), Tensor::zeros([cout]));
}

pub(crate) fn conv(tape: &mut Tape, vars: &Vars, name: &str, x: Var) -> Result<Var> {
    let y = tape.conv2d(x, vars.get(&format!("{name}.w"))?)?;
    Ok(tape.add_bias(y, vars.get(&format!("{name}.b"))?)?)
}
