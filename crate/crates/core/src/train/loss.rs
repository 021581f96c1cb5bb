use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use uem_autodiff::{Tape, Tensor, Var};

use crate::error::{Error, Result};
use crate::metrics::{band_means, ERGAS_MEAN_GUARD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mae,
    Mse,
    Ergas,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Mae => "mae",
            Self::Mse => "mse",
            Self::Ergas => "ergas",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mae" | "l1" => Ok(Self::Mae),
            "mse" | "l2" => Ok(Self::Mse),
            "ergas" => Ok(Self::Ergas),
            _ => Err(Error::InvalidArgument(format!("unknown loss {s:?}"))),
        }
    }
}

/// Record `kind(pred, gt)` on the tape; `gt` is a constant.
pub fn loss_on_tape(tape: &mut Tape, kind: LossKind, pred: Var, gt: &Tensor) -> Result<Var> {
    if tape.shape(pred) != gt.shape() {
        return Err(uem_autodiff::Error::ShapeMismatch {
            op: "loss",
            lhs: tape.shape(pred).to_vec(),
            rhs: gt.shape().to_vec(),
        }
        .into());
    }
    let g = tape.constant(gt.clone());
    let diff = tape.sub(pred, g)?;
    Ok(match kind {
        LossKind::Mae => {
            let a = tape.abs(diff);
            tape.mean(a)
        }
        LossKind::Mse => {
            let s = tape.square(diff);
            tape.mean(s)
        }
        LossKind::Ergas => {
            let mu = band_means(gt);
            let used = mu.iter().filter(|&&m| m > ERGAS_MEAN_GUARD).count();
            if used == 0 {
                let zero = tape.scale(diff, 0.0);
                return Ok(tape.sum(zero));
            }
            let w: Vec<f64> = mu
                .iter()
                .map(|&m| if m > ERGAS_MEAN_GUARD { 1.0 / (m * m) } else { 0.0 })
                .collect();
            let sq = tape.square(diff);
            let mse = tape.channel_mean(sq);
            let rel = tape.scale_channels(mse, &w)?;
            let total = tape.sum(rel);
            let avg = tape.scale(total, 1.0 / used as f64);
            let root = tape.sqrt(avg)?;
            tape.scale(root, 100.0)
        }
    })
}

fn eval(kind: LossKind, pred: &Tensor, gt: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let p = tape.constant(pred.clone());
    let l = loss_on_tape(&mut tape, kind, p, gt)?;
    Ok(tape.value(l).item().expect("scalar loss"))
}

/// Mean absolute error.
pub fn loss_mae(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    eval(LossKind::Mae, pred, gt)
}

/// Mean squared error.
pub fn loss_mse(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    eval(LossKind::Mse, pred, gt)
}

/// ERGAS as a differentiable loss.
pub fn loss_ergas(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    eval(LossKind::Ergas, pred, gt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ergas;

    fn rand_cube(seed: u64) -> Tensor {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn([3, 3, 2], |_| rng.gen::<f64>())
    }

    #[test]
    fn identity_is_zero() {
        let g = rand_cube(1);
        assert_eq!(loss_mae(&g, &g).unwrap(), 0.0);
        assert_eq!(loss_mse(&g, &g).unwrap(), 0.0);
        assert_eq!(loss_ergas(&g, &g).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset() {
        let g = rand_cube(2);
        let p = g.map(|v| v + 0.1);
        assert!((loss_mae(&p, &g).unwrap() - 0.1).abs() < 1e-12);
        assert!((loss_mse(&p, &g).unwrap() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn mae_matches_loop() {
        let (p, g) = (rand_cube(3), rand_cube(4));
        let mut acc = 0.0;
        for i in 0..g.len() {
            acc += (p.data()[i] - g.data()[i]).abs();
        }
        assert!((loss_mae(&p, &g).unwrap() - acc / 18.0).abs() <= 1e-12);
    }

    #[test]
    fn ergas_loss_equals_metric() {
        let (p, mut g) = (rand_cube(5), rand_cube(6));
        let e = loss_ergas(&p, &g).unwrap();
        assert!((e - ergas(&p, &g, 1.0).unwrap()).abs() <= 1e-12 * e);
        for i in (0..g.len()).step_by(2) {
            g.data_mut()[i] = 0.0;
        }
        let e = loss_ergas(&p, &g).unwrap();
        assert!((e - ergas(&p, &g, 1.0).unwrap()).abs() <= 1e-12 * e);
    }

    #[test]
    fn shape_mismatch() {
        assert!(loss_mae(&Tensor::zeros([2, 2, 2]), &Tensor::zeros([2, 2, 3])).is_err());
    }
}
