use uem_autodiff::{Tape, Tensor, Var};

use super::unet::{init_res_unet, res_unet_forward, UNetShape};
use super::{DecoderConfig, Vars};
use crate::data::ResponseCurve;
use crate::error::{Error, Result};
use crate::metrics::{assignment_from_weights, nn_baseline};
use crate::optics::{BoundOperator, MaskParams, OpticalOperator};
use crate::params::ParamStore;

/// Step length and penalty both start here.
const INIT_STEP: f64 = 0.01;

fn stage(s: usize) -> String {
    format!("decoder.unfold.s{s}")
}

/// Softplus inverse, so that the stored raw value maps back to `v`.
fn softplus_inv(v: f64) -> f64 {
    v.exp_m1().ln()
}

pub fn init_unfolding(store: &mut ParamStore, seed: u64, cfg: &DecoderConfig, bands: usize) {
    let shape = UNetShape::stage(cfg, bands);
    for s in 0..cfg.stages {
        let p = stage(s);
        store.insert(format!("{p}.alpha"), Tensor::scalar(softplus_inv(INIT_STEP)));
        store.insert(format!("{p}.eta"), Tensor::scalar(softplus_inv(INIT_STEP)));
        init_res_unet(store, seed, &format!("{p}.net"), &shape);
    }
}

/// Zero the final projection of every stage network, turning each stage
/// into a pure model-driven step.
pub fn zero_stage_projections(store: &mut ParamStore) {
    for (name, t) in store.iter_mut() {
        if name.starts_with("decoder.unfold.") && name.contains(".net.proj.") {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// `Z₀`: nearest-neighbour expansion of the RGB image.
pub fn unfold_init(rgb: &Tensor, response: &ResponseCurve) -> Result<Tensor> {
    nn_baseline(rgb, response)
}

/// `I − α(2Oᵀ(O(I) − rgb) + 2η(I − Z))` for one-element `α`, `η`.
pub fn model_step(
    tape: &mut Tape,
    op: &BoundOperator,
    i_prev: Var,
    z_prev: Var,
    rgb: Var,
    alpha: Var,
    eta: Var,
) -> Result<Var> {
    let pred = op.forward(tape, i_prev)?;
    let resid = tape.sub(pred, rgb)?;
    let back = op.adjoint(tape, resid)?;
    let data = tape.scale(back, 2.0);
    let gap = tape.sub(i_prev, z_prev)?;
    let gap = tape.scale(gap, 2.0);
    let prior = tape.scale_by(gap, eta)?;
    let grad = tape.add(data, prior)?;
    let step = tape.scale_by(grad, alpha)?;
    Ok(tape.sub(i_prev, step)?)
}

fn plain_step(op: &OpticalOperator, i_prev: &Tensor, z_prev: &Tensor, rgb: &Tensor, alpha: f64, eta: f64) -> Result<Tensor> {
    if !(alpha > 0.0 && eta > 0.0) {
        return Err(Error::InvalidArgument(format!("step length {alpha} and penalty {eta} must be positive")));
    }
    let (h, w) = match i_prev.shape() {
        &[h, w, _] => (h, w),
        s => return Err(Error::InvalidArgument(format!("expected [H, W, L], got {s:?}"))),
    };
    let mut tape = Tape::new();
    let bound = BoundOperator::constants(&mut tape, op, (h, w))?;
    let i = tape.constant(i_prev.clone());
    let z = tape.constant(z_prev.clone());
    let y = tape.constant(rgb.clone());
    let a = tape.constant(Tensor::scalar(alpha));
    let e = tape.constant(Tensor::scalar(eta));
    let out = model_step(&mut tape, &bound, i, z, y, a, e)?;
    Ok(tape.value(out).clone())
}

pub fn model_step_wem(
    i_prev: &Tensor,
    z_prev: &Tensor,
    rgb: &Tensor,
    response: &ResponseCurve,
    alpha: f64,
    eta: f64,
) -> Result<Tensor> {
    plain_step(&OpticalOperator::wem(response.clone()), i_prev, z_prev, rgb, alpha, eta)
}

#[allow(clippy::too_many_arguments)]
pub fn model_step_aem(
    i_prev: &Tensor,
    z_prev: &Tensor,
    rgb: &Tensor,
    mask: &MaskParams,
    response: &ResponseCurve,
    alpha: f64,
    eta: f64,
) -> Result<Tensor> {
    let op = OpticalOperator {
        mask: Some(mask.clone()),
        psf: None,
        response: response.clone(),
    };
    plain_step(&op, i_prev, z_prev, rgb, alpha, eta)
}

#[allow(clippy::too_many_arguments)]
pub fn model_step_pem(
    i_prev: &Tensor,
    z_prev: &Tensor,
    rgb: &Tensor,
    psf: &Tensor,
    response: &ResponseCurve,
    alpha: f64,
    eta: f64,
) -> Result<Tensor> {
    let op = OpticalOperator {
        mask: None,
        psf: Some(psf.clone()),
        response: response.clone(),
    };
    plain_step(&op, i_prev, z_prev, rgb, alpha, eta)
}

/// HQS unrolled for `K` stages: model step, then a residual U-Net prior.
pub fn unfolding_forward(tape: &mut Tape, cfg: &DecoderConfig, vars: &Vars, rgb: Var, op: &BoundOperator) -> Result<Var> {
    let l = op.bands();
    let assign = assignment_from_weights(tape.value(op.response));
    let onehot = Tensor::from_fn([3, l], |i| if assign[i % l] == i / l { 1.0 } else { 0.0 });
    let onehot = tape.constant(onehot);
    let z0 = tape.channel_matmul(rgb, onehot)?;
    let shape = UNetShape::stage(cfg, l);
    let (mut i, mut z) = (z0, z0);
    for s in 0..cfg.stages {
        let p = stage(s);
        let alpha = tape.softplus(vars.get(&format!("{p}.alpha"))?);
        let eta = tape.softplus(vars.get(&format!("{p}.eta"))?);
        i = model_step(tape, op, i, z, rgb, alpha, eta)?;
        z = res_unet_forward(tape, vars, &format!("{p}.net"), &shape, i)?;
    }
    Ok(z)
}
