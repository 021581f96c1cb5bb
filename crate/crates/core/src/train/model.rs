use serde::{Deserialize, Serialize};
use uem_autodiff::{Tape, Tensor, Var};

use super::loss::{loss_on_tape, LossKind};
use crate::data::ResponseCurve;
use crate::decoders::{decode, init_decoder, DecoderConfig, Vars};
use crate::error::{Error, Result};
use crate::optics::{bind_encoder, init_encoder, DerivedPsf, EncoderConfig, EncoderVariant, DOE_HEIGHTS, PSF_DERIVED, RESPONSE};
use crate::params::ParamStore;

/// Encoder plus decoder with all their tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub params: ParamStore,
}

/// Everything except the tensors, stored alongside them in checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelMeta {
    pub variant: EncoderVariant,
    pub height: usize,
    pub width: usize,
    pub setup: crate::optics::OpticalSetup,
    pub decoder: DecoderConfig,
}

impl Model {
    pub fn init(seed: u64, encoder: EncoderConfig, decoder: DecoderConfig) -> Result<Self> {
        let mut params = init_encoder(seed, &encoder)?;
        params.extend(init_decoder(seed, &decoder, encoder.bands())?);
        Ok(Self {
            encoder,
            decoder,
            params,
        })
    }

    pub fn meta(&self) -> ModelMeta {
        ModelMeta {
            variant: self.encoder.variant,
            height: self.encoder.height,
            width: self.encoder.width,
            setup: self.encoder.setup.clone(),
            decoder: self.decoder,
        }
    }

    /// Rebuild from checkpoint contents.
    pub fn from_parts(meta: ModelMeta, params: ParamStore) -> Result<Self> {
        let response = ResponseCurve::from_tensor(meta.setup.wavelengths_nm.clone(), params.require(RESPONSE)?, false)?;
        let encoder = EncoderConfig {
            variant: meta.variant,
            height: meta.height,
            width: meta.width,
            setup: meta.setup,
            response,
        };
        encoder.validate()?;
        Ok(Self {
            encoder,
            decoder: meta.decoder,
            params,
        })
    }

    /// Names the optimizer updates: the cast's encoder set plus the decoder,
    /// minus anything in `freeze`.
    pub fn trainable_names(&self, freeze: &[String]) -> Vec<String> {
        let enc = self.encoder.variant.trainable();
        self.params
            .names()
            .into_iter()
            .filter(|n| enc.contains(n) || n.starts_with("decoder."))
            .filter(|n| !freeze.iter().any(|f| f == n))
            .map(String::from)
            .collect()
    }

    /// PSF stack of a PEM-P encoder, kept for the backward pass.
    pub fn derived_psf(&self) -> Result<Option<DerivedPsf>> {
        if self.encoder.variant != EncoderVariant::PemP {
            return Ok(None);
        }
        Ok(Some(DerivedPsf::compute(self.params.require(DOE_HEIGHTS)?, &self.encoder.setup)?))
    }

    /// Record encode (plus optional additive noise) and decode of one cube.
    /// Returns the reconstruction and every parameter leaf.
    pub fn record(
        &self,
        tape: &mut Tape,
        cube: &Tensor,
        psf: Option<&Tensor>,
        noise: Option<&Tensor>,
        trainable: &dyn Fn(&str) -> bool,
    ) -> Result<(Var, Var, Vec<(String, Var)>)> {
        let mut decoder_store = ParamStore::new();
        for (n, t) in self.params.iter().filter(|(n, _)| n.starts_with("decoder.")) {
            decoder_store.insert(n, t.clone());
        }
        let enc = bind_encoder(tape, &self.encoder, &self.params, psf, trainable)?;
        let vars = Vars::bind(tape, &decoder_store, trainable);
        let x = tape.constant(cube.clone());
        let mut rgb = enc.op.forward(tape, x)?;
        if let Some(n) = noise {
            let n = tape.constant(n.clone());
            rgb = tape.add(rgb, n)?;
        }
        let pred = decode(tape, &self.decoder, &vars, rgb, &enc.op)?;
        let mut leaves = enc.params;
        leaves.extend(
            vars.iter()
                .filter(|(n, _)| trainable(n))
                .map(|(n, v)| (n.to_string(), v)),
        );
        Ok((rgb, pred, leaves))
    }

    /// RGB measurement and reconstruction of `cube`, without gradients.
    pub fn run(&self, cube: &Tensor, noise: Option<&Tensor>) -> Result<(Tensor, Tensor)> {
        let psf = self.derived_psf()?;
        self.run_with(cube, psf.as_ref(), noise)
    }

    /// As [`Model::run`] with a PSF already derived from the current heights.
    pub fn run_with(&self, cube: &Tensor, psf: Option<&DerivedPsf>, noise: Option<&Tensor>) -> Result<(Tensor, Tensor)> {
        let mut tape = Tape::new();
        let (rgb, pred, _) = self.record(&mut tape, cube, psf.map(|p| p.psf()), noise, &|_| false)?;
        Ok((tape.value(rgb).clone(), tape.value(pred).clone()))
    }

    /// Loss of one cube and its gradient for every name in `trainable`, in
    /// binding order. A PEM-P encoder reports the gradient of its derived PSF
    /// stack under [`PSF_DERIVED`].
    pub fn item_gradients(
        &self,
        cube: &Tensor,
        psf: Option<&Tensor>,
        noise: Option<&Tensor>,
        loss: LossKind,
        trainable: &[String],
    ) -> Result<(f64, Vec<(String, Tensor)>)> {
        let is_trainable = |n: &str| trainable.iter().any(|t| t == n);
        let mut tape = Tape::new();
        let (_, pred, leaves) = self.record(&mut tape, cube, psf, noise, &is_trainable)?;
        let l = loss_on_tape(&mut tape, loss, pred, cube)?;
        let value = tape.value(l).item().expect("scalar loss");
        let mut grads = tape.backward(l)?;
        let out = leaves
            .into_iter()
            .map(|(n, v)| {
                let g = grads.take(v).unwrap_or_else(|| Tensor::zeros(tape.shape(v).to_vec()));
                (n, g)
            })
            .collect();
        Ok((value, out))
    }

    /// Loss of one cube and its gradient per stored parameter in `trainable`,
    /// with any PSF gradient already carried through to the DOE heights.
    pub fn gradients(
        &self,
        cube: &Tensor,
        noise: Option<&Tensor>,
        loss: LossKind,
        trainable: &[String],
    ) -> Result<(f64, ParamStore)> {
        let psf = self.derived_psf()?;
        let (value, list) = self.item_gradients(cube, psf.as_ref().map(|p| p.psf()), noise, loss, trainable)?;
        let mut grads = ParamStore::new();
        for (n, g) in list {
            grads.insert(n, g);
        }
        self.fold_psf_gradient(psf.as_ref(), &mut grads)?;
        Ok((value, grads))
    }

    /// Map a [`PSF_DERIVED`] gradient back onto the DOE heights.
    pub(crate) fn fold_psf_gradient(&self, psf: Option<&DerivedPsf>, grads: &mut ParamStore) -> Result<()> {
        let Some(g) = grads.get(PSF_DERIVED).cloned() else {
            return Ok(());
        };
        let psf = psf.ok_or_else(|| Error::InvalidArgument("PSF gradient without a derived PSF".into()))?;
        let mut rest = ParamStore::new();
        for (n, t) in grads.iter() {
            if n != PSF_DERIVED {
                rest.insert(n, t.clone());
            }
        }
        rest.insert(DOE_HEIGHTS, psf.vjp(&g)?);
        *grads = rest;
        Ok(())
    }
}
