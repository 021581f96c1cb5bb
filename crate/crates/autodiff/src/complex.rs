use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Complex array stored as interleaved `(re, im)` pairs.
///
/// `shape` is the logical shape; the backing buffer holds `2 * numel`
/// values. On a tape the same data travels as a real [`Tensor`] whose
/// trailing axis has length two (see [`ComplexTensor::into_pairs`]).
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl ComplexTensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        let expected = 2 * shape.iter().product::<usize>();
        if data.len() != expected {
            return Err(Error::DataLength {
                shape,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let n = 2 * shape.iter().product::<usize>();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn from_parts(shape: impl Into<Vec<usize>>, re: &[f64], im: &[f64]) -> Result<Self> {
        let shape = shape.into();
        if re.len() != im.len() {
            return Err(Error::ShapeMismatch {
                op: "complex_from_parts",
                lhs: vec![re.len()],
                rhs: vec![im.len()],
            });
        }
        let data = re.iter().zip(im).flat_map(|(&r, &i)| [r, i]).collect();
        Self::new(shape, data)
    }

    /// Reinterpret a `[.., 2]` real tensor.
    pub fn from_pairs(t: Tensor) -> Result<Self> {
        let shape = t.shape();
        if shape.last() != Some(&2) {
            return Err(Error::InvalidShape {
                op: "complex_from_pairs",
                shape: shape.to_vec(),
                reason: "trailing axis must have length 2",
            });
        }
        let logical = shape[..shape.len() - 1].to_vec();
        Ok(Self {
            shape: logical,
            data: t.into_data(),
        })
    }

    pub fn into_pairs(self) -> Tensor {
        let mut shape = self.shape;
        shape.push(2);
        Tensor::new(shape, self.data).expect("pair layout is consistent")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len() / 2
    }

    pub fn get(&self, i: usize) -> (f64, f64) {
        (self.data[2 * i], self.data[2 * i + 1])
    }

    pub fn set(&mut self, i: usize, re: f64, im: f64) {
        self.data[2 * i] = re;
        self.data[2 * i + 1] = im;
    }

    /// `Σ |z|²`.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn abs2(&self) -> Vec<f64> {
        self.data
            .chunks_exact(2)
            .map(|p| p[0] * p[0] + p[1] * p[1])
            .collect()
    }
}
