use uem_autodiff::Tensor;

use crate::error::Result;
use crate::params::ParamStore;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates per parameter.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    m: ParamStore,
    v: ParamStore,
    t: u64,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// Constraints re-imposed after every update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Projections {
    /// Clamped to `≥ 0`.
    pub nonnegative: Vec<String>,
    /// Clamped to `[lo, hi]`.
    pub boxed: Vec<(String, f64, f64)>,
}

impl Projections {
    pub fn apply(&self, params: &mut ParamStore) {
        for name in &self.nonnegative {
            if let Some(t) = params.get_mut(name) {
                t.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        for (name, lo, hi) in &self.boxed {
            if let Some(t) = params.get_mut(name) {
                t.data_mut().iter_mut().for_each(|v| *v = v.clamp(*lo, *hi));
            }
        }
    }
}

/// Bias-corrected Adam on every parameter named in `grads`, then projections.
/// Parameters without a gradient entry are left untouched.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &ParamStore,
    state: &mut AdamState,
    lr: f64,
    projections: &Projections,
) -> Result<()> {
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for (name, g) in grads.iter() {
        let p = params.get_mut(name).ok_or_else(|| {
            crate::Error::Checkpoint(format!("gradient for unknown parameter {name:?}"))
        })?;
        if p.shape() != g.shape() {
            return Err(uem_autodiff::Error::ShapeMismatch {
                op: "adam_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            }
            .into());
        }
        if !state.m.contains(name) {
            state.m.insert(name, Tensor::zeros(g.shape().to_vec()));
            state.v.insert(name, Tensor::zeros(g.shape().to_vec()));
        }
        let m = state.m.get_mut(name).expect("inserted above");
        for (mi, gi) in m.data_mut().iter_mut().zip(g.data()) {
            *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
        }
        let v = state.v.get_mut(name).expect("inserted above");
        for (vi, gi) in v.data_mut().iter_mut().zip(g.data()) {
            *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
        }
        let (m, v) = (state.m.get(name).expect("present"), state.v.get(name).expect("present"));
        for ((pi, mi), vi) in p.data_mut().iter_mut().zip(m.data()).zip(v.data()) {
            let mhat = mi / c1;
            let vhat = vi / c2;
            *pi -= lr * mhat / (vhat.sqrt() + EPSILON);
        }
    }
    projections.apply(params);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(v: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        let n = v.len();
        s.insert("p", Tensor::new([n], v).unwrap());
        s
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = store(vec![0.3, -0.2]);
        let before = p.clone();
        let mut st = AdamState::new();
        adam_step(&mut p, &store(vec![0.0, 0.0]), &mut st, 1e-3, &Projections::default()).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let grads = [1e-6, -3.0, 250.0, -0.01];
        let mut p = store(vec![0.0; 4]);
        let mut st = AdamState::new();
        adam_step(&mut p, &store(grads.to_vec()), &mut st, 1e-3, &Projections::default()).unwrap();
        for (x, g) in p.get("p").unwrap().data().iter().zip(grads) {
            // |g| / (|g| + ε) of lr, opposite in sign to g.
            let expect = -1e-3 * g.signum() * g.abs() / (g.abs() + EPSILON);
            assert!((x - expect).abs() < 1e-12, "{x} vs {expect}");
        }
    }

    #[test]
    fn projections_clamp() {
        let mut p = store(vec![0.0, 0.0]);
        p.insert("h", Tensor::new([2], vec![0.0, 1.0]).unwrap());
        let mut g = store(vec![1.0, -1.0]);
        g.insert("h", Tensor::new([2], vec![1.0, -1.0]).unwrap());
        let proj = Projections {
            nonnegative: vec!["p".into()],
            boxed: vec![("h".into(), 0.0, 1.0)],
        };
        adam_step(&mut p, &g, &mut AdamState::new(), 0.1, &proj).unwrap();
        assert_eq!(p.get("p").unwrap().data()[0], 0.0);
        assert!(p.get("p").unwrap().data()[1] > 0.0);
        assert_eq!(p.get("h").unwrap().data(), &[0.0, 1.0]);
    }
}
