use uem_autodiff::{Tape, Tensor, Var};

use super::{conv, init_conv, init_weight, DecoderConfig, Vars, LINEAR_GAIN, RELU_GAIN};
use crate::error::{Error, Result};
use crate::params::ParamStore;

/// Structure of one Res-U-Net.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UNetShape {
    pub depth: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub base_width: usize,
    pub max_width: usize,
    pub kernel: usize,
    /// Add the input to the output (requires `in == out`).
    pub global_skip: bool,
}

impl UNetShape {
    pub fn standalone(cfg: &DecoderConfig, bands: usize) -> Self {
        Self {
            depth: cfg.unet_depth,
            in_channels: 3,
            out_channels: bands,
            base_width: cfg.unet_base_width,
            max_width: cfg.unet_max_width,
            kernel: cfg.kernel,
            global_skip: false,
        }
    }

    pub fn stage(cfg: &DecoderConfig, bands: usize) -> Self {
        Self {
            depth: cfg.stage_depth,
            in_channels: bands,
            out_channels: bands,
            base_width: cfg.unet_base_width,
            max_width: cfg.unet_max_width,
            kernel: cfg.kernel,
            global_skip: true,
        }
    }

    fn width(&self, level: usize) -> usize {
        (self.base_width << level.min(20)).min(self.max_width)
    }

    /// `(name, in, out)` of every residual block in execution order.
    fn blocks(&self) -> Vec<(String, usize, usize)> {
        let d = self.depth;
        let mut out = Vec::new();
        let mut cin = self.in_channels;
        for i in 0..d - 1 {
            out.push((format!("down{i}"), cin, self.width(i)));
            cin = self.width(i);
        }
        out.push(("mid".to_string(), cin, self.width(d - 1)));
        for i in (0..d - 1).rev() {
            out.push((format!("up{i}"), self.width(i + 1) + self.width(i), self.width(i)));
        }
        out
    }
}

fn init_block(store: &mut ParamStore, seed: u64, name: &str, k: usize, cin: usize, cout: usize) {
    init_conv(store, seed, &format!("{name}.conv1"), k, cin, cout, RELU_GAIN);
    init_conv(store, seed, &format!("{name}.conv2"), k, cout, cout, LINEAR_GAIN);
    if cin != cout {
        let s = format!("{name}.skip.w");
        store.insert(s.clone(), init_weight(seed, &s, &[cin, cout], cin, LINEAR_GAIN));
    }
}

/// `skip(x) + conv2(relu(conv1(x)))`, skip being identity or a 1×1 projection.
fn block(tape: &mut Tape, vars: &Vars, name: &str, x: Var) -> Result<Var> {
    let h = conv(tape, vars, &format!("{name}.conv1"), x)?;
    let h = tape.relu(h);
    let h = conv(tape, vars, &format!("{name}.conv2"), h)?;
    let skip = match vars.get(&format!("{name}.skip.w")) {
        Ok(p) => tape.channel_matmul(x, p)?,
        Err(_) => x,
    };
    Ok(tape.add(skip, h)?)
}

pub fn init_res_unet(store: &mut ParamStore, seed: u64, prefix: &str, shape: &UNetShape) {
    for (name, cin, cout) in shape.blocks() {
        init_block(store, seed, &format!("{prefix}.{name}"), shape.kernel, cin, cout);
    }
    let p = format!("{prefix}.proj.w");
    let w0 = shape.width(0);
    store.insert(p.clone(), init_weight(seed, &p, &[w0, shape.out_channels], w0, LINEAR_GAIN));
    store.insert(format!("{prefix}.proj.b"), Tensor::zeros([shape.out_channels]));
}

/// Residual U-Net: average-pool down path, nearest-neighbour up path with
/// concatenated skips, and a final 1×1 projection.
pub fn res_unet_forward(tape: &mut Tape, vars: &Vars, prefix: &str, shape: &UNetShape, x: Var) -> Result<Var> {
    let dims = tape.shape(x).to_vec();
    let m = 1usize << (shape.depth - 1);
    if dims.len() != 3 || !dims[0].is_multiple_of(m) || !dims[1].is_multiple_of(m) {
        return Err(Error::InvalidArgument(format!(
            "res-unet of depth {} needs height and width divisible by {m}, got {dims:?}",
            shape.depth
        )));
    }
    let d = shape.depth;
    let mut h = x;
    let mut skips = Vec::with_capacity(d - 1);
    for i in 0..d - 1 {
        h = block(tape, vars, &format!("{prefix}.down{i}"), h)?;
        skips.push(h);
        h = tape.avgpool2(h)?;
    }
    h = block(tape, vars, &format!("{prefix}.mid"), h)?;
    for i in (0..d - 1).rev() {
        h = tape.upsample2(h)?;
        h = tape.concat(&[h, skips[i]])?;
        h = block(tape, vars, &format!("{prefix}.up{i}"), h)?;
    }
    let out = tape.channel_matmul(h, vars.get(&format!("{prefix}.proj.w"))?)?;
    let out = tape.add_bias(out, vars.get(&format!("{prefix}.proj.b"))?)?;
    if shape.global_skip {
        Ok(tape.add(x, out)?)
    } else {
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(shape: &UNetShape, input: Tensor) -> Result<Tensor> {
        let mut store = ParamStore::new();
        init_res_unet(&mut store, 3, "u", shape);
        let mut tape = Tape::new();
        let vars = Vars::bind(&mut tape, &store, &|_| false);
        let x = tape.constant(input);
        let y = res_unet_forward(&mut tape, &vars, "u", shape, x)?;
        Ok(tape.value(y).clone())
    }

    fn shape(depth: usize) -> UNetShape {
        UNetShape {
            depth,
            in_channels: 3,
            out_channels: 5,
            base_width: 4,
            max_width: 8,
            kernel: 3,
            global_skip: false,
        }
    }

    #[test]
    fn output_shape_and_divisibility() {
        let y = run(&shape(3), Tensor::from_fn([8, 12, 3], |i| (i % 5) as f64)).unwrap();
        assert_eq!(y.shape(), &[8, 12, 5]);
        let err = run(&shape(3), Tensor::zeros([6, 8, 3])).unwrap_err();
        assert!(err.to_string().contains("divisible by 4"), "{err}");
    }

    #[test]
    fn depth_one_is_block_plus_projection() {
        let s = shape(1);
        let mut store = ParamStore::new();
        init_res_unet(&mut store, 3, "u", &s);
        assert_eq!(
            store.names(),
            vec!["u.mid.conv1.w", "u.mid.conv1.b", "u.mid.conv2.w", "u.mid.conv2.b", "u.mid.skip.w", "u.proj.w", "u.proj.b"]
        );
        let y = run(&s, Tensor::from_fn([3, 5, 3], |i| i as f64 * 0.1)).unwrap();
        assert_eq!(y.shape(), &[3, 5, 5]);
    }

    #[test]
    fn widths_double_and_saturate() {
        let s = shape(4);
        assert_eq!((0..4).map(|i| s.width(i)).collect::<Vec<_>>(), vec![4, 8, 8, 8]);
    }
}
