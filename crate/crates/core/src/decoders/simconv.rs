use uem_autodiff::{Tape, Var};

use super::{conv, init_conv, DecoderConfig, Vars, LINEAR_GAIN, RELU_GAIN};
use crate::error::Result;
use crate::params::ParamStore;

const LAYERS: usize = 4;

fn layer(i: usize) -> String {
    format!("decoder.simconv.l{i}")
}

/// Four convolutions `3 → hidden → hidden → hidden → L`.
pub fn init_sim_conv(store: &mut ParamStore, seed: u64, cfg: &DecoderConfig, bands: usize) {
    let widths = [3, cfg.hidden, cfg.hidden, cfg.hidden, bands];
    for i in 0..LAYERS {
        let gain = if i + 1 < LAYERS { RELU_GAIN } else { LINEAR_GAIN };
        init_conv(store, seed, &layer(i), cfg.kernel, widths[i], widths[i + 1], gain);
    }
}

/// conv → ReLU three times, then a linear conv.
pub fn sim_conv_forward(tape: &mut Tape, vars: &Vars, rgb: Var) -> Result<Var> {
    let mut x = rgb;
    for i in 0..LAYERS {
        x = conv(tape, vars, &layer(i), x)?;
        if i + 1 < LAYERS {
            x = tape.relu(x);
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoders::init_decoder;
    use uem_autodiff::Tensor;

    #[test]
    fn zero_weights_give_zero_cube() {
        let mut store = init_decoder(0, &DecoderConfig::default(), 5).unwrap();
        for (_, t) in store.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let mut tape = Tape::new();
        let vars = Vars::bind(&mut tape, &store, &|_| false);
        let rgb = tape.constant(Tensor::from_fn([6, 7, 3], |i| i as f64));
        let out = sim_conv_forward(&mut tape, &vars, rgb).unwrap();
        assert_eq!(tape.shape(out), &[6, 7, 5]);
        assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
    }
}
