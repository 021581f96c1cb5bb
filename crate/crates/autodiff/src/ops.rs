//! Slice-level kernels shared by the forward and backward passes.

use crate::linalg::{gemm, gemm_nt, gemm_tn};

/// Spatial geometry of an `[H, W, C]` array (rank-2 arrays are `C = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Hwc {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Hwc {
    pub fn of(shape: &[usize]) -> Option<Self> {
        match *shape {
            [h, w] => Some(Self { h, w, c: 1 }),
            [h, w, c] => Some(Self { h, w, c }),
            _ => None,
        }
    }

    #[inline]
    pub fn idx(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.w + x) * self.c + c
    }

    pub fn pixels(&self) -> usize {
        self.h * self.w
    }
}

/// Gather convolution patches: `col[p, (a·kw + b)·C + c] = x[y − a + ph, x − b + pw, c]`.
pub(crate) fn im2col(x: &[f64], g: Hwc, kh: usize, kw: usize) -> Vec<f64> {
    let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
    let kdim = kh * kw * g.c;
    let mut col = vec![0.0; g.pixels() * kdim];
    for i in 0..g.h {
        for j in 0..g.w {
            let row = &mut col[(i * g.w + j) * kdim..(i * g.w + j + 1) * kdim];
            for a in 0..kh {
                let yy = i as isize - a as isize + ph;
                if yy < 0 || yy >= g.h as isize {
                    continue;
                }
                for b in 0..kw {
                    let xx = j as isize - b as isize + pw;
                    if xx < 0 || xx >= g.w as isize {
                        continue;
                    }
                    let src = g.idx(yy as usize, xx as usize, 0);
                    let dst = (a * kw + b) * g.c;
                    row[dst..dst + g.c].copy_from_slice(&x[src..src + g.c]);
                }
            }
        }
    }
    col
}

/// Scatter-add the transpose of [`im2col`].
pub(crate) fn col2im(col: &[f64], g: Hwc, kh: usize, kw: usize) -> Vec<f64> {
    let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
    let kdim = kh * kw * g.c;
    let mut x = vec![0.0; g.pixels() * g.c];
    for i in 0..g.h {
        for j in 0..g.w {
            let row = &col[(i * g.w + j) * kdim..(i * g.w + j + 1) * kdim];
            for a in 0..kh {
                let yy = i as isize - a as isize + ph;
                if yy < 0 || yy >= g.h as isize {
                    continue;
                }
                for b in 0..kw {
                    let xx = j as isize - b as isize + pw;
                    if xx < 0 || xx >= g.w as isize {
                        continue;
                    }
                    let dst = g.idx(yy as usize, xx as usize, 0);
                    let src = (a * kw + b) * g.c;
                    for (d, s) in x[dst..dst + g.c].iter_mut().zip(&row[src..src + g.c]) {
                        *d += s;
                    }
                }
            }
        }
    }
    x
}

pub(crate) fn conv2d_forward(x: &[f64], g: Hwc, w: &[f64], kh: usize, kw: usize, cout: usize) -> Vec<f64> {
    let col = im2col(x, g, kh, kw);
    let mut out = vec![0.0; g.pixels() * cout];
    gemm(g.pixels(), kh * kw * g.c, cout, &col, w, 0.0, &mut out);
    out
}

/// Returns `(grad_x, grad_w)`; `grad_x` is skipped when not needed.
pub(crate) fn conv2d_backward(
    x: &[f64],
    g: Hwc,
    w: &[f64],
    kh: usize,
    kw: usize,
    cout: usize,
    gout: &[f64],
    need_x: bool,
    need_w: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let kdim = kh * kw * g.c;
    let gw = need_w.then(|| {
        let col = im2col(x, g, kh, kw);
        let mut gw = vec![0.0; kdim * cout];
        gemm_tn(kdim, g.pixels(), cout, &col, gout, 0.0, &mut gw);
        gw
    });
    let gx = need_x.then(|| {
        let mut gcol = vec![0.0; g.pixels() * kdim];
        gemm_nt(g.pixels(), cout, kdim, gout, w, 0.0, &mut gcol);
        col2im(&gcol, g, kh, kw)
    });
    (gx, gw)
}

/// Per-channel convolution `y[i,j,c] = Σ k[a,b,c] · x[i − a + ph, j − b + pw, c]`.
pub(crate) fn depthwise_forward(x: &[f64], g: Hwc, k: &[f64], kh: usize, kw: usize) -> Vec<f64> {
    let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
    let mut y = vec![0.0; x.len()];
    for i in 0..g.h {
        for a in 0..kh {
            let yy = i as isize - a as isize + ph;
            if yy < 0 || yy >= g.h as isize {
                continue;
            }
            for j in 0..g.w {
                let dst = g.idx(i, j, 0);
                for b in 0..kw {
                    let xx = j as isize - b as isize + pw;
                    if xx < 0 || xx >= g.w as isize {
                        continue;
                    }
                    let src = g.idx(yy as usize, xx as usize, 0);
                    let kk = (a * kw + b) * g.c;
                    for c in 0..g.c {
                        y[dst + c] += k[kk + c] * x[src + c];
                    }
                }
            }
        }
    }
    y
}

pub(crate) fn depthwise_backward(
    x: &[f64],
    g: Hwc,
    k: &[f64],
    kh: usize,
    kw: usize,
    gout: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
    let mut gx = vec![0.0; x.len()];
    let mut gk = vec![0.0; k.len()];
    for i in 0..g.h {
        for a in 0..kh {
            let yy = i as isize - a as isize + ph;
            if yy < 0 || yy >= g.h as isize {
                continue;
            }
            for j in 0..g.w {
                let dst = g.idx(i, j, 0);
                for b in 0..kw {
                    let xx = j as isize - b as isize + pw;
                    if xx < 0 || xx >= g.w as isize {
                        continue;
                    }
                    let src = g.idx(yy as usize, xx as usize, 0);
                    let kk = (a * kw + b) * g.c;
                    for c in 0..g.c {
                        gx[src + c] += k[kk + c] * gout[dst + c];
                        gk[kk + c] += x[src + c] * gout[dst + c];
                    }
                }
            }
        }
    }
    (gx, gk)
}

/// Translate by `(dy, dx)` pixels, zero fill: `y[i, j] = x[i − dy, j − dx]`.
pub(crate) fn shift2d(x: &[f64], g: Hwc, dy: isize, dx: isize) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for i in 0..g.h {
        let si = i as isize - dy;
        if si < 0 || si >= g.h as isize {
            continue;
        }
        for j in 0..g.w {
            let sj = j as isize - dx;
            if sj < 0 || sj >= g.w as isize {
                continue;
            }
            let src = g.idx(si as usize, sj as usize, 0);
            let dst = g.idx(i, j, 0);
            y[dst..dst + g.c].copy_from_slice(&x[src..src + g.c]);
        }
    }
    y
}

/// Band `l` moves `l · step` rows up: `y[i, j, l] = x[i + l·step, j, l]`.
pub(crate) fn shear(x: &[f64], g: Hwc, step: isize) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for i in 0..g.h {
        for l in 0..g.c {
            let si = i as isize + l as isize * step;
            if si < 0 || si >= g.h as isize {
                continue;
            }
            for j in 0..g.w {
                y[g.idx(i, j, l)] = x[g.idx(si as usize, j, l)];
            }
        }
    }
    y
}

/// Copy `src` (geometry `gs`) into `dst` (geometry `gd`) at offset `(top, left)`.
pub(crate) fn paste(src: &[f64], gs: Hwc, dst: &mut [f64], gd: Hwc, top: usize, left: usize) {
    for i in 0..gs.h {
        let s = gs.idx(i, 0, 0);
        let d = gd.idx(i + top, left, 0);
        dst[d..d + gs.w * gs.c].copy_from_slice(&src[s..s + gs.w * gs.c]);
    }
}

/// Extract the `gd`-sized window of `src` at offset `(top, left)`.
pub(crate) fn window(src: &[f64], gs: Hwc, gd: Hwc, top: usize, left: usize) -> Vec<f64> {
    let mut out = vec![0.0; gd.pixels() * gd.c];
    for i in 0..gd.h {
        let s = gs.idx(i + top, left, 0);
        let d = gd.idx(i, 0, 0);
        out[d..d + gd.w * gd.c].copy_from_slice(&src[s..s + gd.w * gd.c]);
    }
    out
}

pub(crate) fn avgpool2(x: &[f64], g: Hwc) -> Vec<f64> {
    let go = Hwc { h: g.h / 2, w: g.w / 2, c: g.c };
    let mut y = vec![0.0; go.pixels() * g.c];
    for i in 0..go.h {
        for j in 0..go.w {
            for c in 0..g.c {
                let s = x[g.idx(2 * i, 2 * j, c)]
                    + x[g.idx(2 * i, 2 * j + 1, c)]
                    + x[g.idx(2 * i + 1, 2 * j, c)]
                    + x[g.idx(2 * i + 1, 2 * j + 1, c)];
                y[go.idx(i, j, c)] = 0.25 * s;
            }
        }
    }
    y
}

/// Adjoint of [`avgpool2`]; `g` is the geometry of the full-size array.
pub(crate) fn avgpool2_adjoint(gout: &[f64], g: Hwc) -> Vec<f64> {
    let go = Hwc { h: g.h / 2, w: g.w / 2, c: g.c };
    let mut gx = vec![0.0; g.pixels() * g.c];
    for i in 0..g.h {
        for j in 0..g.w {
            for c in 0..g.c {
                gx[g.idx(i, j, c)] = 0.25 * gout[go.idx(i / 2, j / 2, c)];
            }
        }
    }
    gx
}

pub(crate) fn upsample2(x: &[f64], g: Hwc) -> Vec<f64> {
    let go = Hwc { h: g.h * 2, w: g.w * 2, c: g.c };
    let mut y = vec![0.0; go.pixels() * g.c];
    for i in 0..go.h {
        for j in 0..go.w {
            let s = g.idx(i / 2, j / 2, 0);
            let d = go.idx(i, j, 0);
            y[d..d + g.c].copy_from_slice(&x[s..s + g.c]);
        }
    }
    y
}

/// Adjoint of [`upsample2`]; `g` is the geometry of the small array.
pub(crate) fn upsample2_adjoint(gout: &[f64], g: Hwc) -> Vec<f64> {
    let go = Hwc { h: g.h * 2, w: g.w * 2, c: g.c };
    let mut gx = vec![0.0; g.pixels() * g.c];
    for i in 0..go.h {
        for j in 0..go.w {
            for c in 0..g.c {
                gx[g.idx(i / 2, j / 2, c)] += gout[go.idx(i, j, c)];
            }
        }
    }
    gx
}

/// Spatially flip a `[kh, kw, rest..]` kernel.
pub(crate) fn flip2d(k: &[f64], kh: usize, kw: usize) -> Vec<f64> {
    let inner = k.len() / (kh * kw);
    let mut out = vec![0.0; k.len()];
    for a in 0..kh {
        for b in 0..kw {
            let s = (a * kw + b) * inner;
            let d = ((kh - 1 - a) * kw + (kw - 1 - b)) * inner;
            out[d..d + inner].copy_from_slice(&k[s..s + inner]);
        }
    }
    out
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}
