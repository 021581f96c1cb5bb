use std::cell::RefCell;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unitary 2-D DFT of an `rows × cols` complex grid stored as interleaved
/// pairs. Both directions scale by `1/√(rows·cols)`, so the forward and
/// inverse transforms are adjoint to each other and preserve `Σ|z|²`.
pub fn fft2_in_place(data: &mut [f64], rows: usize, cols: usize, dir: Direction) -> Result<()> {
    for n in [rows, cols] {
        if !n.is_power_of_two() {
            return Err(Error::NotPowerOfTwo { op: "fft2", n });
        }
    }
    if data.len() != 2 * rows * cols {
        return Err(Error::DataLength {
            shape: vec![rows, cols, 2],
            expected: 2 * rows * cols,
            actual: data.len(),
        });
    }
    let mut buf: Vec<Complex64> = data
        .chunks_exact(2)
        .map(|p| Complex64::new(p[0], p[1]))
        .collect();

    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let (row_fft, col_fft) = match dir {
            Direction::Forward => (planner.plan_fft_forward(cols), planner.plan_fft_forward(rows)),
            Direction::Inverse => (planner.plan_fft_inverse(cols), planner.plan_fft_inverse(rows)),
        };
        // rows are contiguous; columns go through a transposed copy so the
        // whole pass is one batched call
        row_fft.process(&mut buf);
        let mut t = vec![Complex64::new(0.0, 0.0); rows * cols];
        transpose(&buf, &mut t, rows, cols);
        col_fft.process(&mut t);
        transpose(&t, &mut buf, cols, rows);
    });

    let scale = 1.0 / ((rows * cols) as f64).sqrt();
    for (p, z) in data.chunks_exact_mut(2).zip(&buf) {
        p[0] = z.re * scale;
        p[1] = z.im * scale;
    }
    Ok(())
}

/// `dst[c·rows + r] = src[r·cols + c]`, in cache-sized tiles.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const TILE: usize = 16;
    for r0 in (0..rows).step_by(TILE) {
        for c0 in (0..cols).step_by(TILE) {
            for r in r0..(r0 + TILE).min(rows) {
                for c in c0..(c0 + TILE).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_power_of_two() {
        let mut d = vec![0.0; 2 * 6 * 8];
        assert_eq!(
            fft2_in_place(&mut d, 6, 8, Direction::Forward),
            Err(Error::NotPowerOfTwo { op: "fft2", n: 6 })
        );
    }

    #[test]
    fn delta_transforms_to_constant() {
        let n = 4;
        let mut d = vec![0.0; 2 * n * n];
        d[0] = 1.0;
        fft2_in_place(&mut d, n, n, Direction::Forward).unwrap();
        for p in d.chunks_exact(2) {
            assert!((p[0] - 0.25).abs() < 1e-15 && p[1].abs() < 1e-15);
        }
    }
}
