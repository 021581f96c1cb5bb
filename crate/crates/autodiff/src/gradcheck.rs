//! Finite-difference oracles for tape gradients.

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// `|ad − fd| / max(|fd|, 1e-8)`.
pub fn relative_error(ad: f64, fd: f64) -> f64 {
    (ad - fd).abs() / fd.abs().max(1e-8)
}

/// Central difference `(f(x + ε e_i) − f(x − ε e_i)) / 2ε` for coordinate `i`.
pub fn central_difference(f: impl Fn(&Tensor) -> Result<f64>, x: &Tensor, i: usize, eps: f64) -> Result<f64> {
    let mut probe = x.clone();
    let orig = probe.data()[i];
    probe.data_mut()[i] = orig + eps;
    let fp = f(&probe)?;
    probe.data_mut()[i] = orig - eps;
    let fm = f(&probe)?;
    Ok((fp - fm) / (2.0 * eps))
}

fn evaluate<F>(f: &F, x: &Tensor) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    let out = f(&mut tape, v)?;
    let value = tape.value(out);
    value
        .item()
        .ok_or_else(|| Error::NonScalarLoss(value.shape().to_vec()))
}

/// Max relative error between the tape gradient of scalar `f` at `x` and
/// central differences, over every coordinate of `x`.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let coords: Vec<usize> = (0..x.len()).collect();
    grad_check_coords(f, x, eps, &coords)
}

/// As [`grad_check`], restricted to the listed coordinates.
pub fn grad_check_coords<F>(f: F, x: &Tensor, eps: f64, coords: &[usize]) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let v = tape.param(x.clone());
    let out = f(&mut tape, v)?;
    let grads = tape.backward(out)?;
    let zeros = Tensor::zeros(x.shape().to_vec());
    let ad = grads.get(v).unwrap_or(&zeros);

    let mut worst: f64 = 0.0;
    for &i in coords {
        let fd = central_difference(|p| evaluate(&f, p), x, i, eps)?;
        worst = worst.max(relative_error(ad.data()[i], fd));
    }
    Ok(worst)
}
