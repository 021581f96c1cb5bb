use crate::error::{Error, Result};
use crate::fft::{fft2_in_place, Direction};
use crate::ops::{self, Hwc};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    ScaleBy(Var, Var),
    BroadcastLast(Var),
    ScaleChannels(Var, Vec<f64>),
    ChannelMatmul(Var, Var),
    Transpose(Var),
    Conv2d { x: Var, w: Var },
    DepthwiseConv2d { x: Var, k: Var },
    AddBias(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Softplus(Var),
    Abs(Var),
    Square(Var),
    Sqrt(Var),
    Shift2d { x: Var, dy: isize, dx: isize },
    Shear { x: Var, step: isize },
    Pad2d { x: Var, top: usize, left: usize },
    Crop2d { x: Var, top: usize, left: usize },
    Sum(Var),
    Mean(Var),
    ChannelMean(Var),
    Fft2(Var),
    Ifft2(Var),
    ComplexExp(Var),
    ComplexMul(Var, Var),
    ComplexAbs2(Var),
    NormalizeSum(Var),
    BinarizeSte(Var),
    RadialInterp { profile: Var, lo: Vec<usize>, frac: Vec<f64> },
    AreaDownsample { x: Var, top: usize, left: usize, block: usize },
    AvgPool2(Var),
    Upsample2(Var),
    Concat(Vec<Var>),
    SliceChannels { x: Var, start: usize },
    Flip2d(Var),
    Reshape(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of primitive applications for one forward pass.
///
/// Nodes are appended in evaluation order, so inputs always precede their
/// consumers and a reverse sweep visits each node once.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a parameter leaf; `None` when it did not influence the output.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn hwc(op: &'static str, shape: &[usize]) -> Result<Hwc> {
    Hwc::of(shape).ok_or_else(|| Error::InvalidShape {
        op,
        shape: shape.to_vec(),
        reason: "expected [H, W] or [H, W, C]",
    })
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn complex_shape(op: &'static str, t: &Tensor) -> Result<()> {
    if t.shape().last() != Some(&2) {
        return Err(Error::InvalidShape {
            op,
            shape: t.shape().to_vec(),
            reason: "complex values need a trailing axis of length 2",
        });
    }
    Ok(())
}

fn odd_kernel(op: &'static str, shape: &[usize]) -> Result<(usize, usize)> {
    let (kh, kw) = (shape[0], shape[1]);
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::InvalidShape {
            op,
            shape: shape.to_vec(),
            reason: "kernel sides must be odd",
        });
    }
    Ok((kh, kw))
}

fn t(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::new(shape.to_vec(), data).expect("kernel output matches its shape")
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A leaf that is not differentiated.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    /// A leaf whose gradient is reported by [`Tape::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push_raw(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push_raw(value, op, rg)
    }

    // ---- elementwise ------------------------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    fn binary(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(op, ta, tb)?;
        ta.zip_with(tb, f)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x).map(|a| a * c);
        self.push(v, Op::Scale(x, c), &[x])
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x).map(|a| a + c);
        self.push(v, Op::AddScalar(x), &[x])
    }

    /// `x · s` for a one-element `s`.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        let sv = self.value(s).item().ok_or_else(|| Error::InvalidShape {
            op: "scale_by",
            shape: self.shape(s).to_vec(),
            reason: "scale must hold a single value",
        })?;
        let v = self.value(x).map(|a| a * sv);
        Ok(self.push(v, Op::ScaleBy(x, s), &[x, s]))
    }

    /// Repeat `x` along a new trailing axis of length `n`.
    pub fn broadcast_last(&mut self, x: Var, n: usize) -> Var {
        let xv = self.value(x);
        let mut shape = xv.shape().to_vec();
        shape.push(n);
        let data = xv
            .data()
            .iter()
            .flat_map(|&a| std::iter::repeat_n(a, n))
            .collect();
        self.push(t(&shape, data), Op::BroadcastLast(x), &[x])
    }

    /// Multiply channel `c` of `x[.., C]` by the constant `q[c]`.
    pub fn scale_channels(&mut self, x: Var, q: &[f64]) -> Result<Var> {
        let xv = self.value(x);
        if xv.last_dim() != q.len() {
            return Err(Error::ShapeMismatch {
                op: "scale_channels",
                lhs: xv.shape().to_vec(),
                rhs: vec![q.len()],
            });
        }
        let c = q.len();
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &a)| a * q[i % c])
            .collect();
        let v = t(xv.shape(), data);
        Ok(self.push(v, Op::ScaleChannels(x, q.to_vec()), &[x]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| a.max(0.0));
        self.push(v, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).map(ops::sigmoid);
        self.push(v, Op::Sigmoid(x), &[x])
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let v = self.value(x).map(ops::softplus);
        self.push(v, Op::Softplus(x), &[x])
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::abs);
        self.push(v, Op::Abs(x), &[x])
    }

    pub fn square(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| a * a);
        self.push(v, Op::Square(x), &[x])
    }

    /// Square root; the gradient at exactly zero is taken as zero.
    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        if self.value(x).data().iter().any(|&a| a < 0.0) {
            return Err(Error::InvalidArgument {
                op: "sqrt",
                reason: "negative input".into(),
            });
        }
        let v = self.value(x).map(f64::sqrt);
        Ok(self.push(v, Op::Sqrt(x), &[x]))
    }

    /// Forward: 1 where `sigmoid(x) ≥ 0.5` (i.e. `x ≥ 0`), else 0.
    /// Backward: the sigmoid derivative (straight-through estimator).
    pub fn binarize_ste(&mut self, x: Var) -> Var {
        let v = self
            .value(x)
            .map(|a| if ops::sigmoid(a) >= 0.5 { 1.0 } else { 0.0 });
        self.push(v, Op::BinarizeSte(x), &[x])
    }

    // ---- reductions -------------------------------------------------------

    pub fn sum(&mut self, x: Var) -> Var {
        let v = Tensor::scalar(self.value(x).sum());
        self.push(v, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let v = Tensor::scalar(xv.sum() / xv.len() as f64);
        self.push(v, Op::Mean(x), &[x])
    }

    /// Mean over all leading axes of `x[.., C]`, giving `[C]`.
    pub fn channel_mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let c = xv.last_dim();
        let p = xv.len() / c;
        let mut acc = vec![0.0; c];
        for (i, &a) in xv.data().iter().enumerate() {
            acc[i % c] += a;
        }
        acc.iter_mut().for_each(|a| *a /= p as f64);
        self.push(t(&[c], acc), Op::ChannelMean(x), &[x])
    }

    /// `x / Σx`; the sum must be nonzero.
    pub fn normalize_sum(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let s = xv.sum();
        if s == 0.0 || !s.is_finite() {
            return Err(Error::InvalidArgument {
                op: "normalize_sum",
                reason: format!("cannot normalize by sum {s}"),
            });
        }
        let v = xv.map(|a| a / s);
        Ok(self.push(v, Op::NormalizeSum(x), &[x]))
    }

    // ---- linear algebra over the channel axis ------------------------------

    /// `x[.., Cin] · w[Cin, Cout]` (a 1×1 convolution).
    pub fn channel_matmul(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let cin = xv.last_dim();
        if wv.shape().len() != 2 || wv.shape()[0] != cin {
            return Err(Error::ShapeMismatch {
                op: "channel_matmul",
                lhs: xv.shape().to_vec(),
                rhs: wv.shape().to_vec(),
            });
        }
        let cout = wv.shape()[1];
        let p = xv.len() / cin;
        let mut out = vec![0.0; p * cout];
        crate::linalg::gemm(p, cin, cout, xv.data(), wv.data(), 0.0, &mut out);
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().expect("rank ≥ 1") = cout;
        Ok(self.push(t(&shape, out), Op::ChannelMatmul(x, w), &[x, w]))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let &[r, c] = xv.shape() else {
            return Err(Error::InvalidShape {
                op: "transpose",
                shape: xv.shape().to_vec(),
                reason: "expected a matrix",
            });
        };
        let d = xv.data();
        let data = (0..r * c).map(|k| d[(k % r) * c + k / r]).collect();
        Ok(self.push(t(&[c, r], data), Op::Transpose(x), &[x]))
    }

    /// `Σ_l w[c, l] · q[l] · x[.., l]` for each output channel `c`.
    ///
    /// `q` holds constant quadrature weights.
    pub fn weighted_sum_over_lambda(&mut self, x: Var, w: Var, q: &[f64]) -> Result<Var> {
        let wv = self.value(w);
        if wv.shape().len() != 2 || wv.shape()[1] != q.len() {
            return Err(Error::ShapeMismatch {
                op: "weighted_sum_over_lambda",
                lhs: wv.shape().to_vec(),
                rhs: vec![q.len()],
            });
        }
        let xq = self.scale_channels(x, q)?;
        let wt = self.transpose(w)?;
        self.channel_matmul(xq, wt)
    }

    /// Adjoint of [`Tape::weighted_sum_over_lambda`] in `x`:
    /// `out[.., l] = q[l] · Σ_c w[c, l] · y[.., c]`.
    pub fn expand_over_lambda(&mut self, y: Var, w: Var, q: &[f64]) -> Result<Var> {
        let spread = self.channel_matmul(y, w)?;
        self.scale_channels(spread, q)
    }

    // ---- spatial ----------------------------------------------------------

    /// Dense "same" convolution: `x[H, W, Cin]`, `w[kh, kw, Cin, Cout]`, zero padding.
    pub fn conv2d(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let g = hwc("conv2d", xv.shape())?;
        let ws = wv.shape();
        if ws.len() != 4 || ws[2] != g.c {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: xv.shape().to_vec(),
                rhs: ws.to_vec(),
            });
        }
        let (kh, kw) = odd_kernel("conv2d", ws)?;
        let cout = ws[3];
        let out = ops::conv2d_forward(xv.data(), g, wv.data(), kh, kw, cout);
        Ok(self.push(t(&[g.h, g.w, cout], out), Op::Conv2d { x, w }, &[x, w]))
    }

    /// Per-channel "same" convolution: `x[H, W, C]`, `k[kh, kw, C]`, zero padding.
    pub fn depthwise_conv2d(&mut self, x: Var, k: Var) -> Result<Var> {
        let (xv, kv) = (self.value(x), self.value(k));
        let g = hwc("depthwise_conv2d", xv.shape())?;
        let ks = kv.shape();
        if Hwc::of(ks).map(|kg| kg.c) != Some(g.c) {
            return Err(Error::ShapeMismatch {
                op: "depthwise_conv2d",
                lhs: xv.shape().to_vec(),
                rhs: ks.to_vec(),
            });
        }
        let (kh, kw) = odd_kernel("depthwise_conv2d", ks)?;
        let out = ops::depthwise_forward(xv.data(), g, kv.data(), kh, kw);
        let shape = xv.shape().to_vec();
        Ok(self.push(t(&shape, out), Op::DepthwiseConv2d { x, k }, &[x, k]))
    }

    /// Add `b[C]` to every position of `x[.., C]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        let c = xv.last_dim();
        if bv.len() != c {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                lhs: xv.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let bd = bv.data();
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &a)| a + bd[i % c])
            .collect();
        let v = t(xv.shape(), data);
        Ok(self.push(v, Op::AddBias(x, b), &[x, b]))
    }

    /// Integer translation with zero fill: `y[i, j] = x[i − dy, j − dx]`.
    pub fn shift2d(&mut self, x: Var, dy: isize, dx: isize) -> Result<Var> {
        let xv = self.value(x);
        let g = hwc("shift2d", xv.shape())?;
        let v = t(xv.shape(), ops::shift2d(xv.data(), g, dy, dx));
        Ok(self.push(v, Op::Shift2d { x, dy, dx }, &[x]))
    }

    /// Channel `l` of `x[H, W, L]` moves `l · step` rows toward row 0, zero fill.
    pub fn shear(&mut self, x: Var, step: isize) -> Result<Var> {
        let xv = self.value(x);
        let g = hwc("shear", xv.shape())?;
        let v = t(xv.shape(), ops::shear(xv.data(), g, step));
        Ok(self.push(v, Op::Shear { x, step }, &[x]))
    }

    pub fn pad2d(&mut self, x: Var, top: usize, bottom: usize, left: usize, right: usize) -> Result<Var> {
        let xv = self.value(x);
        let g = hwc("pad2d", xv.shape())?;
        let go = Hwc {
            h: g.h + top + bottom,
            w: g.w + left + right,
            c: g.c,
        };
        let mut out = vec![0.0; go.pixels() * go.c];
        ops::paste(xv.data(), g, &mut out, go, top, left);
        let mut shape = xv.shape().to_vec();
        shape[0] = go.h;
        shape[1] = go.w;
        Ok(self.push(t(&shape, out), Op::Pad2d { x, top, left }, &[x]))
    }

    pub fn crop2d(&mut self, x: Var, top: usize, left: usize, h: usize, w: usize) -> Result<Var> {
        let xv = self.value(x);
        let g = hwc("crop2d", xv.shape())?;
        if top + h > g.h || left + w > g.w {
            return Err(Error::InvalidArgument {
                op: "crop2d",
                reason: format!("window {h}x{w} at ({top}, {left}) exceeds {}x{}", g.h, g.w),
            });
        }
        let go = Hwc { h, w, c: g.c };
        let out = ops::window(xv.data(), g, go, top, left);
        let mut shape = xv.shape().to_vec();
        shape[0] = h;
        shape[1] = w;
        Ok(self.push(t(&shape, out), Op::Crop2d { x, top, left }, &[x]))
    }

    /// Box-average `block × block` tiles of the `size·block` square window
    /// at `(top, left)` of a rank-2 array, giving `[size, size]`.
    pub fn area_downsample(&mut self, x: Var, top: usize, left: usize, block: usize, size: usize) -> Result<Var> {
        let xv = self.value(x);
        let &[h, w] = xv.shape() else {
            return Err(Error::InvalidShape {
                op: "area_downsample",
                shape: xv.shape().to_vec(),
                reason: "expected a rank-2 array",
            });
        };
        if block == 0 || top + size * block > h || left + size * block > w {
            return Err(Error::InvalidArgument {
                op: "area_downsample",
                reason: format!("{size} blocks of {block} at ({top}, {left}) exceed {h}x{w}"),
            });
        }
        let d = xv.data();
        let inv = 1.0 / (block * block) as f64;
        let mut out = vec![0.0; size * size];
        for i in 0..size * block {
            for j in 0..size * block {
                out[(i / block) * size + j / block] += d[(top + i) * w + left + j] * inv;
            }
        }
        Ok(self.push(
            t(&[size, size], out),
            Op::AreaDownsample { x, top, left, block },
            &[x],
        ))
    }

    pub fn avgpool2(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let g = hwc("avgpool2", xv.shape())?;
        if g.h % 2 != 0 || g.w % 2 != 0 {
            return Err(Error::InvalidShape {
                op: "avgpool2",
                shape: xv.shape().to_vec(),
                reason: "spatial sides must be even",
            });
        }
        let mut shape = xv.shape().to_vec();
        shape[0] /= 2;
        shape[1] /= 2;
        let v = t(&shape, ops::avgpool2(xv.data(), g));
        Ok(self.push(v, Op::AvgPool2(x), &[x]))
    }

    /// Nearest-neighbour 2× upsampling.
    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let g = hwc("upsample2", xv.shape())?;
        let mut shape = xv.shape().to_vec();
        shape[0] *= 2;
        shape[1] *= 2;
        let v = t(&shape, ops::upsample2(xv.data(), g));
        Ok(self.push(v, Op::Upsample2(x), &[x]))
    }

    /// Spatially flip a kernel `[kh, kw, ..]`.
    pub fn flip2d(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape().len() < 2 {
            return Err(Error::InvalidShape {
                op: "flip2d",
                shape: xv.shape().to_vec(),
                reason: "expected rank ≥ 2",
            });
        }
        let (kh, kw) = (xv.shape()[0], xv.shape()[1]);
        let v = t(xv.shape(), ops::flip2d(xv.data(), kh, kw));
        Ok(self.push(v, Op::Flip2d(x), &[x]))
    }

    /// Concatenate along the trailing axis; leading axes must agree.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = xs.first().ok_or_else(|| Error::InvalidArgument {
            op: "concat",
            reason: "no inputs".into(),
        })?;
        let lead = {
            let s = self.shape(*first);
            s[..s.len().saturating_sub(1)].to_vec()
        };
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.shape(x);
            if s.is_empty() || s[..s.len() - 1] != lead[..] {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: self.shape(*first).to_vec(),
                    rhs: s.to_vec(),
                });
            }
            widths.push(*s.last().expect("nonempty"));
        }
        let total: usize = widths.iter().sum();
        let p: usize = lead.iter().product();
        let mut out = Vec::with_capacity(p * total);
        for i in 0..p {
            for (&x, &c) in xs.iter().zip(&widths) {
                out.extend_from_slice(&self.value(x).data()[i * c..(i + 1) * c]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        Ok(self.push(t(&shape, out), Op::Concat(xs.to_vec()), xs))
    }

    /// Channels `start..start + len` of `x[.., C]`.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let c = xv.last_dim();
        if start + len > c || xv.shape().is_empty() {
            return Err(Error::InvalidArgument {
                op: "slice_channels",
                reason: format!("{start}..{} out of {c} channels", start + len),
            });
        }
        let p = xv.len() / c;
        let mut out = Vec::with_capacity(p * len);
        for i in 0..p {
            out.extend_from_slice(&xv.data()[i * c + start..i * c + start + len]);
        }
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().expect("rank ≥ 1") = len;
        Ok(self.push(t(&shape, out), Op::SliceChannels { x, start }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).clone().reshape(shape.to_vec())?;
        Ok(self.push(v, Op::Reshape(x), &[x]))
    }

    /// Sample a 1-D radial profile on a 2-D grid by linear interpolation.
    ///
    /// `pos[p]` is the fractional profile index for grid point `p`; it is
    /// clamped to `[0, R − 1]`.
    pub fn radial_interp(&mut self, profile: Var, pos: &[f64], shape: &[usize]) -> Result<Var> {
        let pv = self.value(profile);
        let r = pv.len();
        if r < 2 || pv.shape().len() != 1 {
            return Err(Error::InvalidShape {
                op: "radial_interp",
                shape: pv.shape().to_vec(),
                reason: "profile needs at least two radial samples",
            });
        }
        if shape.iter().product::<usize>() != pos.len() {
            return Err(Error::DataLength {
                shape: shape.to_vec(),
                expected: shape.iter().product(),
                actual: pos.len(),
            });
        }
        let mut lo = Vec::with_capacity(pos.len());
        let mut frac = Vec::with_capacity(pos.len());
        let d = pv.data();
        let mut out = Vec::with_capacity(pos.len());
        for &q in pos {
            let q = q.clamp(0.0, (r - 1) as f64);
            let i = (q.floor() as usize).min(r - 2);
            let f = q - i as f64;
            out.push((1.0 - f) * d[i] + f * d[i + 1]);
            lo.push(i);
            frac.push(f);
        }
        Ok(self.push(
            t(shape, out),
            Op::RadialInterp { profile, lo, frac },
            &[profile],
        ))
    }

    // ---- complex ----------------------------------------------------------

    /// Unitary forward 2-D DFT of `x[rows, cols, 2]`.
    pub fn fft2(&mut self, x: Var) -> Result<Var> {
        let v = self.fft_value("fft2", x, Direction::Forward)?;
        Ok(self.push(v, Op::Fft2(x), &[x]))
    }

    /// Unitary inverse 2-D DFT of `x[rows, cols, 2]`.
    pub fn ifft2(&mut self, x: Var) -> Result<Var> {
        let v = self.fft_value("ifft2", x, Direction::Inverse)?;
        Ok(self.push(v, Op::Ifft2(x), &[x]))
    }

    fn fft_value(&self, op: &'static str, x: Var, dir: Direction) -> Result<Tensor> {
        let xv = self.value(x);
        let &[r, c, 2] = xv.shape() else {
            return Err(Error::InvalidShape {
                op,
                shape: xv.shape().to_vec(),
                reason: "expected [rows, cols, 2]",
            });
        };
        let mut data = xv.data().to_vec();
        fft2_in_place(&mut data, r, c, dir)?;
        Ok(t(xv.shape(), data))
    }

    /// `exp(i·φ)` as `[.., 2]` pairs.
    pub fn complex_exp(&mut self, phase: Var) -> Var {
        let pv = self.value(phase);
        let mut shape = pv.shape().to_vec();
        shape.push(2);
        let data = pv.data().iter().flat_map(|&p| [p.cos(), p.sin()]).collect();
        self.push(t(&shape, data), Op::ComplexExp(phase), &[phase])
    }

    pub fn complex_mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        complex_shape("complex_mul", av)?;
        same_shape("complex_mul", av, bv)?;
        let data = av
            .data()
            .chunks_exact(2)
            .zip(bv.data().chunks_exact(2))
            .flat_map(|(p, q)| [p[0] * q[0] - p[1] * q[1], p[0] * q[1] + p[1] * q[0]])
            .collect();
        let v = t(av.shape(), data);
        Ok(self.push(v, Op::ComplexMul(a, b), &[a, b]))
    }

    /// `|z|²`, dropping the pair axis.
    pub fn complex_abs2(&mut self, z: Var) -> Result<Var> {
        let zv = self.value(z);
        complex_shape("complex_abs2", zv)?;
        let shape = zv.shape()[..zv.shape().len() - 1].to_vec();
        let data = zv
            .data()
            .chunks_exact(2)
            .map(|p| p[0] * p[0] + p[1] * p[1])
            .collect();
        Ok(self.push(t(&shape, data), Op::ComplexAbs2(z), &[z]))
    }

    // ---- backward ---------------------------------------------------------

    /// Gradients of the scalar `loss` with respect to every parameter leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        self.backward_with_seed(loss, Tensor::ones(lv.shape().to_vec()))
    }

    /// Vector-Jacobian product: back-propagate `seed` (shaped like `output`).
    pub fn backward_with_seed(&self, output: Var, seed: Tensor) -> Result<Gradients> {
        if seed.shape() != self.shape(output) {
            return Err(Error::ShapeMismatch {
                op: "backward",
                lhs: self.shape(output).to_vec(),
                rhs: seed.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if !self.nodes[output.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[output.0] = Some(seed);
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.node_vjp(node, &g, &mut grads);
        }
        // Only leaves keep their gradient.
        for (i, n) in self.nodes.iter().enumerate() {
            if !matches!(n.op, Op::Leaf) || !n.requires_grad {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing
                .axpy(1.0, &g)
                .expect("gradient shapes agree with their node"),
            slot @ None => *slot = Some(g),
        }
    }

    fn acc_data(&self, grads: &mut [Option<Tensor>], v: Var, data: Vec<f64>) {
        if self.nodes[v.0].requires_grad {
            let shape = self.shape(v).to_vec();
            self.acc(grads, v, t(&shape, data));
        }
    }

    fn node_vjp(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.requires_grad(*a) {
                    self.acc(grads, *a, g.zip_with(bv, |x, y| x * y).expect("same shape"));
                }
                if self.requires_grad(*b) {
                    self.acc(grads, *b, g.zip_with(av, |x, y| x * y).expect("same shape"));
                }
            }
            Op::Scale(x, c) => self.acc(grads, *x, g.map(|v| v * c)),
            Op::AddScalar(x) => self.acc(grads, *x, g.clone()),
            Op::ScaleBy(x, s) => {
                let sv = self.value(*s).data()[0];
                self.acc(grads, *x, g.map(|v| v * sv));
                if self.requires_grad(*s) {
                    let ds = g.dot(self.value(*x)).expect("same shape");
                    let shape = self.shape(*s).to_vec();
                    self.acc(grads, *s, t(&shape, vec![ds]));
                }
            }
            Op::BroadcastLast(x) => {
                let n = y.last_dim();
                let data = gd.chunks_exact(n).map(|c| c.iter().sum()).collect();
                self.acc_data(grads, *x, data);
            }
            Op::ScaleChannels(x, q) => {
                let c = q.len();
                let data = gd.iter().enumerate().map(|(i, &v)| v * q[i % c]).collect();
                self.acc_data(grads, *x, data);
            }
            Op::ChannelMatmul(x, w) => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (cin, cout) = (wv.shape()[0], wv.shape()[1]);
                let p = xv.len() / cin;
                if self.requires_grad(*x) {
                    let mut gx = vec![0.0; p * cin];
                    crate::linalg::gemm_nt(p, cout, cin, gd, wv.data(), 0.0, &mut gx);
                    self.acc_data(grads, *x, gx);
                }
                if self.requires_grad(*w) {
                    let mut gw = vec![0.0; cin * cout];
                    crate::linalg::gemm_tn(cin, p, cout, xv.data(), gd, 0.0, &mut gw);
                    self.acc_data(grads, *w, gw);
                }
            }
            Op::Transpose(x) => {
                // y is r×c and x is c×r with x[i, j] = y[j, i]
                let (r, c) = (y.shape()[0], y.shape()[1]);
                let mut out = vec![0.0; r * c];
                for i in 0..c {
                    for j in 0..r {
                        out[i * r + j] = gd[j * c + i];
                    }
                }
                self.acc_data(grads, *x, out);
            }
            Op::Conv2d { x, w } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let g3 = Hwc::of(xv.shape()).expect("checked in forward");
                let ws = wv.shape();
                let (gx, gw) = ops::conv2d_backward(
                    xv.data(),
                    g3,
                    wv.data(),
                    ws[0],
                    ws[1],
                    ws[3],
                    gd,
                    self.requires_grad(*x),
                    self.requires_grad(*w),
                );
                if let Some(gx) = gx {
                    self.acc_data(grads, *x, gx);
                }
                if let Some(gw) = gw {
                    self.acc_data(grads, *w, gw);
                }
            }
            Op::DepthwiseConv2d { x, k } => {
                let (xv, kv) = (self.value(*x), self.value(*k));
                let g3 = Hwc::of(xv.shape()).expect("checked in forward");
                let (gx, gk) = ops::depthwise_backward(
                    xv.data(),
                    g3,
                    kv.data(),
                    kv.shape()[0],
                    kv.shape()[1],
                    gd,
                );
                self.acc_data(grads, *x, gx);
                self.acc_data(grads, *k, gk);
            }
            Op::AddBias(x, b) => {
                self.acc(grads, *x, g.clone());
                if self.requires_grad(*b) {
                    let c = y.last_dim();
                    let mut gb = vec![0.0; c];
                    for (i, &v) in gd.iter().enumerate() {
                        gb[i % c] += v;
                    }
                    self.acc_data(grads, *b, gb);
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let data = gd
                    .iter()
                    .zip(xv.data())
                    .map(|(&g, &a)| if a > 0.0 { g } else { 0.0 })
                    .collect();
                self.acc_data(grads, *x, data);
            }
            Op::Sigmoid(x) => {
                let data = gd
                    .iter()
                    .zip(y.data())
                    .map(|(&g, &s)| g * s * (1.0 - s))
                    .collect();
                self.acc_data(grads, *x, data);
            }
            Op::Softplus(x) => {
                let xv = self.value(*x);
                let data = gd
                    .iter()
                    .zip(xv.data())
                    .map(|(&g, &a)| g * ops::sigmoid(a))
                    .collect();
                self.acc_data(grads, *x, data);
            }
            Op::Abs(x) => {
                let xv = self.value(*x);
                let data = gd
                    .iter()
                    .zip(xv.data())
                    .map(|(&g, &a)| {
                        if a > 0.0 {
                            g
                        } else if a < 0.0 {
                            -g
                        } else {
                            0.0
                        }
                    })
                    .collect();
                self.acc_data(grads, *x, data);
            }
            Op::Square(x) => {
                let xv = self.value(*x);
                let data = gd.iter().zip(xv.data()).map(|(&g, &a)| 2.0 * a * g).collect();
                self.acc_data(grads, *x, data);
            }
            Op::Sqrt(x) => {
                let data = gd
                    .iter()
                    .zip(y.data())
                    .map(|(&g, &s)| if s > 0.0 { 0.5 * g / s } else { 0.0 })
                    .collect();
                self.acc_data(grads, *x, data);
            }
            Op::BinarizeSte(x) => {
                let xv = self.value(*x);
                let data = gd
                    .iter()
                    .zip(xv.data())
                    .map(|(&g, &a)| {
                        let s = ops::sigmoid(a);
                        g * s * (1.0 - s)
                    })
                    .collect();
                self.acc_data(grads, *x, data);
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                self.acc_data(grads, *x, vec![gd[0]; n]);
            }
            Op::Mean(x) => {
                let n = self.value(*x).len();
                self.acc_data(grads, *x, vec![gd[0] / n as f64; n]);
            }
            Op::ChannelMean(x) => {
                let xv = self.value(*x);
                let c = gd.len();
                let p = (xv.len() / c) as f64;
                let data = (0..xv.len()).map(|i| gd[i % c] / p).collect();
                self.acc_data(grads, *x, data);
            }
            Op::NormalizeSum(x) => {
                let s = self.value(*x).sum();
                let gy: f64 = gd.iter().zip(y.data()).map(|(g, y)| g * y).sum();
                let data = gd.iter().map(|&g| (g - gy) / s).collect();
                self.acc_data(grads, *x, data);
            }
            Op::Shift2d { x, dy, dx } => {
                let g3 = Hwc::of(y.shape()).expect("checked in forward");
                self.acc_data(grads, *x, ops::shift2d(gd, g3, -dy, -dx));
            }
            Op::Shear { x, step } => {
                let g3 = Hwc::of(y.shape()).expect("checked in forward");
                self.acc_data(grads, *x, ops::shear(gd, g3, -step));
            }
            Op::Pad2d { x, top, left } => {
                let gs = Hwc::of(self.shape(*x)).expect("checked in forward");
                let gp = Hwc::of(y.shape()).expect("checked in forward");
                self.acc_data(grads, *x, ops::window(gd, gp, gs, *top, *left));
            }
            Op::Crop2d { x, top, left } => {
                let gs = Hwc::of(self.shape(*x)).expect("checked in forward");
                let gc = Hwc::of(y.shape()).expect("checked in forward");
                let mut out = vec![0.0; gs.pixels() * gs.c];
                ops::paste(gd, gc, &mut out, gs, *top, *left);
                self.acc_data(grads, *x, out);
            }
            Op::AreaDownsample { x, top, left, block } => {
                let w = self.shape(*x)[1];
                let size = y.shape()[0];
                let inv = 1.0 / (block * block) as f64;
                let mut out = vec![0.0; self.value(*x).len()];
                for i in 0..size * block {
                    for j in 0..size * block {
                        out[(top + i) * w + left + j] = gd[(i / block) * size + j / block] * inv;
                    }
                }
                self.acc_data(grads, *x, out);
            }
            Op::AvgPool2(x) => {
                let gx = Hwc::of(self.shape(*x)).expect("checked in forward");
                self.acc_data(grads, *x, ops::avgpool2_adjoint(gd, gx));
            }
            Op::Upsample2(x) => {
                let gx = Hwc::of(self.shape(*x)).expect("checked in forward");
                self.acc_data(grads, *x, ops::upsample2_adjoint(gd, gx));
            }
            Op::Flip2d(x) => {
                let (kh, kw) = (y.shape()[0], y.shape()[1]);
                self.acc_data(grads, *x, ops::flip2d(gd, kh, kw));
            }
            Op::Concat(xs) => {
                let total = y.last_dim();
                let p = y.len() / total;
                let mut offset = 0;
                for &x in xs {
                    let c = self.value(x).last_dim();
                    if self.requires_grad(x) {
                        let mut out = Vec::with_capacity(p * c);
                        for i in 0..p {
                            out.extend_from_slice(&gd[i * total + offset..i * total + offset + c]);
                        }
                        self.acc_data(grads, x, out);
                    }
                    offset += c;
                }
            }
            Op::SliceChannels { x, start } => {
                let c = self.value(*x).last_dim();
                let len = y.last_dim();
                let p = y.len() / len;
                let mut out = vec![0.0; p * c];
                for i in 0..p {
                    out[i * c + start..i * c + start + len].copy_from_slice(&gd[i * len..(i + 1) * len]);
                }
                self.acc_data(grads, *x, out);
            }
            Op::Reshape(x) => self.acc_data(grads, *x, gd.to_vec()),
            Op::RadialInterp { profile, lo, frac } => {
                let mut out = vec![0.0; self.value(*profile).len()];
                for ((&g, &i), &f) in gd.iter().zip(lo).zip(frac) {
                    out[i] += (1.0 - f) * g;
                    out[i + 1] += f * g;
                }
                self.acc_data(grads, *profile, out);
            }
            Op::Fft2(x) | Op::Ifft2(x) => {
                // The adjoint of a unitary transform is its inverse.
                let dir = if matches!(node.op, Op::Fft2(_)) {
                    Direction::Inverse
                } else {
                    Direction::Forward
                };
                let s = y.shape();
                let mut data = gd.to_vec();
                fft2_in_place(&mut data, s[0], s[1], dir).expect("validated in forward");
                self.acc_data(grads, *x, data);
            }
            Op::ComplexExp(p) => {
                let data = gd
                    .chunks_exact(2)
                    .zip(y.data().chunks_exact(2))
                    .map(|(g, z)| -z[1] * g[0] + z[0] * g[1])
                    .collect();
                self.acc_data(grads, *p, data);
            }
            Op::ComplexMul(a, b) => {
                // dL/da = G · conj(b), dL/db = G · conj(a)
                let conj_mul = |other: &Tensor| -> Vec<f64> {
                    gd.chunks_exact(2)
                        .zip(other.data().chunks_exact(2))
                        .flat_map(|(g, q)| [g[0] * q[0] + g[1] * q[1], g[1] * q[0] - g[0] * q[1]])
                        .collect()
                };
                if self.requires_grad(*a) {
                    let d = conj_mul(self.value(*b));
                    self.acc_data(grads, *a, d);
                }
                if self.requires_grad(*b) {
                    let d = conj_mul(self.value(*a));
                    self.acc_data(grads, *b, d);
                }
            }
            Op::ComplexAbs2(z) => {
                let zv = self.value(*z);
                let data = zv
                    .data()
                    .chunks_exact(2)
                    .zip(gd)
                    .flat_map(|(p, &g)| [2.0 * p[0] * g, 2.0 * p[1] * g])
                    .collect();
                self.acc_data(grads, *z, data);
            }
        }
    }
}
