use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use uem_autodiff::{Tape, Tensor, Var};

use super::encode::{BoundOperator, MaskParams, OpticalOperator};
use super::psf::derive_psf;
use super::setup::OpticalSetup;
use crate::data::{quadrature_weights, ResponseCurve};
use crate::error::{Error, Result};
use crate::params::{group_seed, ParamStore};

pub const MASK_LOGITS: &str = "encoder.mask.logits";
pub const MASK_IDEAL: &str = "encoder.mask.ideal";
pub const DOE_HEIGHTS: &str = "encoder.doe.heights";
pub const PSF_FREE: &str = "encoder.psf.free";
/// Tape-only leaf carrying a PSF stack derived from [`DOE_HEIGHTS`].
pub const PSF_DERIVED: &str = "encoder.psf.derived";
pub const RESPONSE: &str = "encoder.response";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderVariant {
    AemP,
    AemI,
    PemP,
    PemI,
    WemP,
    WemI,
    WemIPc,
    UemI,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Amplitude,
    Phase,
    Wavelength,
    Unified,
}

impl EncoderVariant {
    pub const ALL: [EncoderVariant; 8] = [
        Self::AemP,
        Self::AemI,
        Self::PemP,
        Self::PemI,
        Self::WemP,
        Self::WemI,
        Self::WemIPc,
        Self::UemI,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::AemP => "aem-p",
            Self::AemI => "aem-i",
            Self::PemP => "pem-p",
            Self::PemI => "pem-i",
            Self::WemP => "wem-p",
            Self::WemI => "wem-i",
            Self::WemIPc => "wem-i-pc",
            Self::UemI => "uem-i",
        }
    }

    pub fn family(self) -> Family {
        match self {
            Self::AemP | Self::AemI => Family::Amplitude,
            Self::PemP | Self::PemI => Family::Phase,
            Self::WemP | Self::WemI | Self::WemIPc => Family::Wavelength,
            Self::UemI => Family::Unified,
        }
    }

    /// Encoder parameters the optimizer may touch.
    pub fn trainable(self) -> &'static [&'static str] {
        match self {
            Self::AemP => &[MASK_LOGITS],
            Self::AemI => &[MASK_IDEAL],
            Self::PemP => &[DOE_HEIGHTS],
            Self::PemI => &[PSF_FREE],
            Self::WemP => &[],
            Self::WemI | Self::WemIPc => &[RESPONSE],
            Self::UemI => &[MASK_IDEAL, PSF_FREE, RESPONSE],
        }
    }

    pub fn positive_response(self) -> bool {
        self == Self::WemIPc
    }
}

impl fmt::Display for EncoderVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EncoderVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}

/// What an encoder needs besides its learnable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub variant: EncoderVariant,
    /// Image size the mask is defined on.
    pub height: usize,
    pub width: usize,
    /// Optics for the derived PSF; its wavelengths, PSF window and profile
    /// length are used by every variant.
    pub setup: OpticalSetup,
    /// Fixed response of the non-learnable casts.
    pub response: ResponseCurve,
}

impl EncoderConfig {
    pub fn bands(&self) -> usize {
        self.setup.bands()
    }

    pub fn validate(&self) -> Result<()> {
        self.setup.validate()?;
        if self.response.bands() != self.bands() {
            return Err(Error::BandMismatch(self.response.bands(), self.bands()));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidArgument("encoder image size must be positive".into()));
        }
        Ok(())
    }

    pub fn quadrature(&self) -> Vec<f64> {
        quadrature_weights(&self.setup.wavelengths_nm)
    }
}

fn uniform(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(lo..hi))
}

/// Initial encoder tensors for `cfg.variant`, deterministic per seed.
///
/// Every variant carries a response entry; only the learnable casts train it.
pub fn init_encoder(seed: u64, cfg: &EncoderConfig) -> Result<ParamStore> {
    cfg.validate()?;
    let (h, w, l) = (cfg.height, cfg.width, cfg.bands());
    let k = cfg.setup.psf_window;
    let s = 1.0 / (l as f64).sqrt();
    let mut store = ParamStore::new();
    let response = match cfg.variant {
        EncoderVariant::WemI | EncoderVariant::UemI => uniform(&[3, l], -s, s, group_seed(seed, RESPONSE)),
        EncoderVariant::WemIPc => uniform(&[3, l], 0.0, s, group_seed(seed, RESPONSE)),
        _ => cfg.response.to_tensor(),
    };
    match cfg.variant {
        EncoderVariant::AemP => {
            store.insert(MASK_LOGITS, uniform(&[h, w], -0.1, 0.1, group_seed(seed, MASK_LOGITS)));
        }
        EncoderVariant::AemI => store.insert(MASK_IDEAL, Tensor::full([h, w, l], 0.5)),
        EncoderVariant::PemP => {
            let hm = cfg.setup.h_max_um;
            let r = cfg.setup.radial_samples;
            store.insert(DOE_HEIGHTS, uniform(&[r], 0.0, hm, group_seed(seed, DOE_HEIGHTS)));
        }
        EncoderVariant::PemI => {
            let std = 1.0 / (k * k) as f64;
            let normal = Normal::new(0.0, std).expect("positive std");
            let mut rng = ChaCha8Rng::seed_from_u64(group_seed(seed, PSF_FREE));
            store.insert(PSF_FREE, Tensor::from_fn([k, k, l], |_| normal.sample(&mut rng)));
        }
        EncoderVariant::WemP | EncoderVariant::WemI | EncoderVariant::WemIPc => {}
        EncoderVariant::UemI => {
            store.insert(MASK_IDEAL, Tensor::ones([h, w, l]));
            store.insert(PSF_FREE, delta_psf(k, l));
        }
    }
    store.insert(RESPONSE, response);
    Ok(store)
}

/// `[k, k, L]` stack of centred unit impulses.
pub fn delta_psf(k: usize, l: usize) -> Tensor {
    let c = k / 2;
    Tensor::from_fn([k, k, l], |i| if i / l == c * k + c { 1.0 } else { 0.0 })
}

/// Encoder tensors recorded on a tape.
pub struct EncoderBinding {
    pub op: BoundOperator,
    /// Leaves created as parameters, by name.
    pub params: Vec<(String, Var)>,
}

/// Record the encoder on `tape`. Names for which `trainable` is true become
/// parameter leaves, the rest constants. PEM-P needs its derived PSF stack,
/// which is recorded under [`PSF_DERIVED`] when the heights are trainable.
pub fn bind_encoder(
    tape: &mut Tape,
    cfg: &EncoderConfig,
    store: &ParamStore,
    derived_psf: Option<&Tensor>,
    trainable: &dyn Fn(&str) -> bool,
) -> Result<EncoderBinding> {
    let l = cfg.bands();
    let mut params = Vec::new();
    let mut leaf = |tape: &mut Tape, name: &str, value: &Tensor| -> Var {
        if trainable(name) {
            let v = tape.param(value.clone());
            params.push((name.to_string(), v));
            v
        } else {
            tape.constant(value.clone())
        }
    };
    let response = leaf(tape, RESPONSE, store.require(RESPONSE)?);
    let (mut mask, mut shear, mut psf) = (None, false, None);
    match cfg.variant {
        EncoderVariant::AemP => {
            let logits = leaf(tape, MASK_LOGITS, store.require(MASK_LOGITS)?);
            let b = tape.binarize_ste(logits);
            mask = Some(tape.broadcast_last(b, l));
            shear = true;
        }
        EncoderVariant::AemI => mask = Some(leaf(tape, MASK_IDEAL, store.require(MASK_IDEAL)?)),
        EncoderVariant::PemP => {
            let p = derived_psf.ok_or_else(|| {
                Error::InvalidArgument("pem-p binding needs the derived PSF stack".into())
            })?;
            let name = if trainable(DOE_HEIGHTS) { PSF_DERIVED } else { "" };
            psf = Some(if name.is_empty() {
                tape.constant(p.clone())
            } else {
                let v = tape.param(p.clone());
                params.push((PSF_DERIVED.to_string(), v));
                v
            });
        }
        EncoderVariant::PemI => psf = Some(leaf(tape, PSF_FREE, store.require(PSF_FREE)?)),
        EncoderVariant::WemP | EncoderVariant::WemI | EncoderVariant::WemIPc => {}
        EncoderVariant::UemI => {
            mask = Some(leaf(tape, MASK_IDEAL, store.require(MASK_IDEAL)?));
            psf = Some(leaf(tape, PSF_FREE, store.require(PSF_FREE)?));
        }
    }
    Ok(EncoderBinding {
        op: BoundOperator {
            mask,
            shear,
            psf,
            response,
            quadrature: cfg.quadrature(),
        },
        params,
    })
}

/// The optical operator described by stored encoder tensors.
pub fn operator_from_store(cfg: &EncoderConfig, store: &ParamStore) -> Result<OpticalOperator> {
    let wl = cfg.setup.wavelengths_nm.clone();
    let response = ResponseCurve::from_tensor(wl, store.require(RESPONSE)?, false)?;
    let (mut mask, mut psf) = (None, None);
    match cfg.variant {
        EncoderVariant::AemP => mask = Some(MaskParams::Physical(store.require(MASK_LOGITS)?.clone())),
        EncoderVariant::AemI => mask = Some(MaskParams::Ideal(store.require(MASK_IDEAL)?.clone())),
        EncoderVariant::PemP => psf = Some(derive_psf(store.require(DOE_HEIGHTS)?, &cfg.setup)?.psf),
        EncoderVariant::PemI => psf = Some(store.require(PSF_FREE)?.clone()),
        EncoderVariant::WemP | EncoderVariant::WemI | EncoderVariant::WemIPc => {}
        EncoderVariant::UemI => {
            mask = Some(MaskParams::Ideal(store.require(MASK_IDEAL)?.clone()));
            psf = Some(store.require(PSF_FREE)?.clone());
        }
    }
    Ok(OpticalOperator { mask, psf, response })
}
