//! PNG and CSV dumps of masks, PSFs, responses and images.
//!
//! PNGs are min–max scaled per image; the scale goes to a `.scale.txt`
//! sidecar so the mapping back to raw values is known. CSVs hold raw values.

use std::fs;
use std::path::{Path, PathBuf};

use uem_autodiff::Tensor;

use crate::error::{Error, Result};

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".scale.txt");
    PathBuf::from(s)
}

fn scale(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

fn to_u8(v: f64, lo: f64, hi: f64) -> u8 {
    if hi > lo {
        (((v - lo) / (hi - lo)) * 255.0).round().clamp(0.0, 255.0) as u8
    } else {
        0
    }
}

fn write_scale(path: &Path, lo: f64, hi: f64) -> Result<()> {
    let p = sidecar(path);
    fs::write(&p, format!("min = {lo}\nmax = {hi}\n")).map_err(|e| Error::io(p, e))
}

/// Grayscale PNG of a row-major `h × w` array. Returns `(min, max)`.
pub fn save_gray_png(values: &[f64], h: usize, w: usize, path: impl AsRef<Path>) -> Result<(f64, f64)> {
    let path = path.as_ref();
    if values.len() != h * w || h == 0 || w == 0 {
        return Err(Error::InvalidArgument(format!("{} values for a {h}x{w} image", values.len())));
    }
    let (lo, hi) = scale(values);
    let px = values.iter().map(|&v| to_u8(v, lo, hi)).collect();
    let img = image::GrayImage::from_raw(w as u32, h as u32, px).expect("buffer size checked");
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    write_scale(path, lo, hi)?;
    Ok((lo, hi))
}

/// Colour PNG of an `[H, W, 3]` image, one scale for all channels.
pub fn save_rgb_png(img: &Tensor, path: impl AsRef<Path>) -> Result<(f64, f64)> {
    let path = path.as_ref();
    let &[h, w, 3] = img.shape() else {
        return Err(Error::InvalidArgument(format!("expected [H, W, 3], got {:?}", img.shape())));
    };
    let (lo, hi) = scale(img.data());
    let px = img.data().iter().map(|&v| to_u8(v, lo, hi)).collect();
    let out = image::RgbImage::from_raw(w as u32, h as u32, px).expect("buffer size checked");
    out.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    write_scale(path, lo, hi)?;
    Ok((lo, hi))
}

/// Rows of comma-separated values with shortest round-trip formatting.
pub fn matrix_csv(values: &[f64], cols: usize) -> String {
    let mut s = String::new();
    for row in values.chunks(cols.max(1)) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn save_matrix_csv(values: &[f64], cols: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, matrix_csv(values, cols)).map_err(|e| Error::io(path, e))
}

/// Channel `c` of an `[H, W, C]` array.
pub fn channel(t: &Tensor, c: usize) -> Vec<f64> {
    let n = t.last_dim();
    t.data().iter().skip(c).step_by(n).copied().collect()
}

/// Per-channel `<stem>_<c>.png` and `<stem>_<c>.csv` for an `[H, W, C]` stack.
pub fn export_stack(t: &Tensor, dir: impl AsRef<Path>, stem: &str) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let (h, w, c) = match t.shape() {
        &[h, w, c] => (h, w, c),
        &[h, w] => (h, w, 1),
        s => return Err(Error::InvalidArgument(format!("cannot export shape {s:?}"))),
    };
    let mut written = Vec::new();
    for b in 0..c {
        let vals = if t.shape().len() == 2 { t.data().to_vec() } else { channel(t, b) };
        let png = dir.join(format!("{stem}_{b}.png"));
        let csv = dir.join(format!("{stem}_{b}.csv"));
        save_gray_png(&vals, h, w, &png)?;
        save_matrix_csv(&vals, w, &csv)?;
        written.push(png);
        written.push(csv);
    }
    Ok(written)
}
