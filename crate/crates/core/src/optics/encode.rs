use uem_autodiff::{Tape, Tensor, Var};

use crate::data::{quadrature_weights, ResponseCurve};
use crate::error::{Error, Result};

/// Amplitude code of an AEM.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskParams {
    /// `[H, W]` logits, binarized and sheared across bands.
    Physical(Tensor),
    /// `[H, W, L]` float mask applied without shear.
    Ideal(Tensor),
}

/// `1` where `sigmoid(logit) ≥ 0.5`, else `0`.
pub fn binarize_mask(logits: &Tensor) -> Tensor {
    logits.map(|v| if v >= 0.0 { 1.0 } else { 0.0 })
}

/// Band `l` of `[H, W, L]` moves `l` rows up; vacated rows are zero.
pub fn dispersive_shear(cube: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let x = tape.constant(cube.clone());
    let y = tape.shear(x, 1)?;
    Ok(tape.value(y).clone())
}

/// `rgb[.., c] = Σ_l W[c][l] · I[.., l] · Δλ_l`.
pub fn integrate_response(cube: &Tensor, response: &ResponseCurve) -> Result<Tensor> {
    OpticalOperator::wem(response.clone()).forward(cube)
}

pub fn encode_wem(cube: &Tensor, response: &ResponseCurve) -> Result<Tensor> {
    integrate_response(cube, response)
}

pub fn encode_aem(cube: &Tensor, mask: &MaskParams, response: &ResponseCurve) -> Result<Tensor> {
    encode_uem(cube, Some(mask), None, response)
}

pub fn encode_pem(cube: &Tensor, psf: &Tensor, response: &ResponseCurve) -> Result<Tensor> {
    encode_uem(cube, None, Some(psf), response)
}

/// Amplitude, then per-band PSF, then response; `None` terms are unit terms.
pub fn encode_uem(
    cube: &Tensor,
    mask: Option<&MaskParams>,
    psf: Option<&Tensor>,
    response: &ResponseCurve,
) -> Result<Tensor> {
    let op = OpticalOperator {
        mask: mask.cloned(),
        psf: psf.cloned(),
        response: response.clone(),
    };
    op.forward(cube)
}

/// The linear map from a scene cube to the RGB measurement, with its adjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalOperator {
    pub mask: Option<MaskParams>,
    pub psf: Option<Tensor>,
    pub response: ResponseCurve,
}

impl OpticalOperator {
    pub fn wem(response: ResponseCurve) -> Self {
        Self {
            mask: None,
            psf: None,
            response,
        }
    }

    pub fn forward(&self, cube: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let op = BoundOperator::constants(&mut tape, self, cube_hw(cube)?)?;
        let x = tape.constant(cube.clone());
        let y = op.forward(&mut tape, x)?;
        Ok(tape.value(y).clone())
    }

    pub fn adjoint(&self, rgb: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let op = BoundOperator::constants(&mut tape, self, cube_hw(rgb)?)?;
        let y = tape.constant(rgb.clone());
        let x = op.adjoint(&mut tape, y)?;
        Ok(tape.value(x).clone())
    }
}

fn cube_hw(t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        &[h, w, _] => Ok((h, w)),
        s => Err(Error::InvalidArgument(format!("expected an [H, W, C] array, got {s:?}"))),
    }
}

/// Optical operator whose terms live on a tape.
#[derive(Debug, Clone)]
pub struct BoundOperator {
    /// `[H, W, L]` amplitude, already broadcast over bands.
    pub mask: Option<Var>,
    /// Apply the dispersive shear after the mask.
    pub shear: bool,
    /// `[k, k, L]` per-band PSF.
    pub psf: Option<Var>,
    /// `[3, L]` response.
    pub response: Var,
    pub quadrature: Vec<f64>,
}

impl BoundOperator {
    /// Record `op`'s terms as constants for `[h, w, ·]` images.
    pub fn constants(tape: &mut Tape, op: &OpticalOperator, (h, w): (usize, usize)) -> Result<Self> {
        let l = op.response.bands();
        let (mask, shear) = match &op.mask {
            None => (None, false),
            Some(MaskParams::Physical(logits)) => {
                if logits.shape() != [h, w] {
                    return Err(shape_err("mask", logits.shape(), &[h, w]));
                }
                let b = tape.constant(binarize_mask(logits));
                (Some(tape.broadcast_last(b, l)), true)
            }
            Some(MaskParams::Ideal(m)) => {
                if m.shape() != [h, w, l] {
                    return Err(shape_err("mask", m.shape(), &[h, w, l]));
                }
                (Some(tape.constant(m.clone())), false)
            }
        };
        let psf = match &op.psf {
            None => None,
            Some(p) => {
                if p.shape().len() != 3 || p.shape()[2] != l {
                    return Err(Error::BandMismatch(p.last_dim(), l));
                }
                Some(tape.constant(p.clone()))
            }
        };
        let response = tape.constant(op.response.to_tensor());
        Ok(Self {
            mask,
            shear,
            psf,
            response,
            quadrature: quadrature_weights(op.response.wavelengths_nm()),
        })
    }

    pub fn bands(&self) -> usize {
        self.quadrature.len()
    }

    /// `[H, W, L] → [H, W, 3]`.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let l = tape.shape(x).last().copied().unwrap_or(0);
        if tape.shape(x).len() != 3 || l != self.bands() {
            return Err(Error::BandMismatch(l, self.bands()));
        }
        let mut v = x;
        if let Some(m) = self.mask {
            v = tape.mul(v, m)?;
            if self.shear {
                v = tape.shear(v, 1)?;
            }
        }
        if let Some(p) = self.psf {
            v = tape.depthwise_conv2d(v, p)?;
        }
        Ok(tape.weighted_sum_over_lambda(v, self.response, &self.quadrature)?)
    }

    /// `[H, W, 3] → [H, W, L]`, the transpose of [`BoundOperator::forward`].
    pub fn adjoint(&self, tape: &mut Tape, y: Var) -> Result<Var> {
        if tape.shape(y).len() != 3 || tape.shape(y)[2] != 3 {
            return Err(shape_err("adjoint input", tape.shape(y), &[0, 0, 3]));
        }
        let mut v = tape.expand_over_lambda(y, self.response, &self.quadrature)?;
        if let Some(p) = self.psf {
            let flipped = tape.flip2d(p)?;
            v = tape.depthwise_conv2d(v, flipped)?;
        }
        if let Some(m) = self.mask {
            if self.shear {
                v = tape.shear(v, -1)?;
            }
            v = tape.mul(v, m)?;
        }
        Ok(v)
    }
}

fn shape_err(what: &str, got: &[usize], want: &[usize]) -> Error {
    Error::InvalidArgument(format!("{what} shape {got:?}, expected {want:?}"))
}
