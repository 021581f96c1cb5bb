use uem_autodiff::Tensor;

use crate::error::{Error, Result};

/// `n` wavelengths evenly spaced over 420–700 nm (a single band sits at 560 nm).
pub fn default_wavelengths(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![560.0],
        _ => (0..n)
            .map(|i| 420.0 + 280.0 * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Radiance cube `I(x, y, λ)` with values in `[0, 1]`.
///
/// Values are stored pixel-interleaved (`[row][col][band]`) as `f32`, the
/// precision of the `.scube` format, and widened to `f64` for computation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCube {
    height: usize,
    width: usize,
    wavelengths_nm: Vec<f64>,
    values: Vec<f32>,
}

impl SpectralCube {
    pub fn new(height: usize, width: usize, wavelengths_nm: Vec<f64>, values: Vec<f32>) -> Result<Self> {
        let bands = wavelengths_nm.len();
        if bands == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidHeader(format!(
                "cube dimensions must be positive, got {height}x{width}x{bands}"
            )));
        }
        if let Some(row) = wavelengths_nm.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonAscending { row: row + 1 });
        }
        if values.len() != height * width * bands {
            return Err(Error::InvalidArgument(format!(
                "{} values for a {height}x{width}x{bands} cube",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("cube value {v} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            wavelengths_nm,
            values,
        })
    }

    /// Build from an `[H, W, L]` tensor, rounding to `f32`.
    pub fn from_tensor(t: &Tensor, wavelengths_nm: Vec<f64>) -> Result<Self> {
        let &[h, w, l] = t.shape() else {
            return Err(Error::InvalidArgument(format!(
                "expected [H, W, L] tensor, got {:?}",
                t.shape()
            )));
        };
        if l != wavelengths_nm.len() {
            return Err(Error::BandMismatch(l, wavelengths_nm.len()));
        }
        Self::new(h, w, wavelengths_nm, t.data().iter().map(|&v| v as f32).collect())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.wavelengths_nm.len()
    }

    pub fn wavelengths_nm(&self) -> &[f64] {
        &self.wavelengths_nm
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, y: usize, x: usize, band: usize) -> f32 {
        self.values[(y * self.width + x) * self.bands() + band]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            [self.height, self.width, self.bands()],
            self.values.iter().map(|&v| v as f64).collect(),
        )
        .expect("cube layout is consistent")
    }

    /// Sub-cube of `size × size` pixels whose top-left corner is `(top, left)`.
    pub fn window(&self, top: usize, left: usize, size: usize) -> Result<Self> {
        if top + size > self.height || left + size > self.width {
            return Err(Error::InvalidArgument(format!(
                "window {size} at ({top}, {left}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let l = self.bands();
        let mut values = Vec::with_capacity(size * size * l);
        for y in top..top + size {
            let start = (y * self.width + left) * l;
            values.extend_from_slice(&self.values[start..start + size * l]);
        }
        Self::new(size, size, self.wavelengths_nm.clone(), values)
    }
}

/// Top-left aligned grid of `size × size` patches taken every `stride` pixels.
pub fn crop_patches(cube: &SpectralCube, size: usize, stride: usize) -> Result<Vec<SpectralCube>> {
    if size == 0 || stride == 0 {
        return Err(Error::InvalidArgument("patch size and stride must be positive".into()));
    }
    if size > cube.height() || size > cube.width() {
        return Err(Error::InvalidArgument(format!(
            "patch size {size} exceeds cube {}x{}",
            cube.height(),
            cube.width()
        )));
    }
    let rows = (cube.height() - size) / stride + 1;
    let cols = (cube.width() - size) / stride + 1;
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push(cube.window(r * stride, c * stride, size)?);
        }
    }
    Ok(out)
}

/// Sensor measurement `I_rgb`, `[H, W, 3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width * 3 {
            return Err(Error::InvalidArgument(format!(
                "{} values for a {height}x{width} RGB image",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("RGB image must be finite".into()));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let &[h, w, 3] = t.shape() else {
            return Err(Error::InvalidArgument(format!(
                "expected [H, W, 3] tensor, got {:?}",
                t.shape()
            )));
        };
        Self::new(h, w, t.data().to_vec())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new([self.height, self.width, 3], self.values.clone()).expect("layout is consistent")
    }
}
