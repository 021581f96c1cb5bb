use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use uem_autodiff::Tensor;

use super::cube::RgbImage;
use crate::error::Result;

/// Zero-mean white Gaussian noise of standard deviation `sigma`.
pub fn gaussian_noise(shape: &[usize], sigma: f64, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        sigma * z
    })
}

/// `img + n`, `n ~ N(0, σ²)` i.i.d. per value; `sigma = 0` returns `img` unchanged.
pub fn add_gaussian_noise(img: &RgbImage, sigma: f64, seed: u64) -> Result<RgbImage> {
    if sigma < 0.0 {
        return Err(crate::Error::InvalidArgument(format!("noise sigma {sigma} < 0")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let noise = gaussian_noise(&[img.height(), img.width(), 3], sigma, seed);
    let values = img
        .values()
        .iter()
        .zip(noise.data())
        .map(|(a, n)| a + n)
        .collect();
    RgbImage::new(img.height(), img.width(), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(h: usize, w: usize) -> RgbImage {
        RgbImage::new(h, w, vec![0.5; h * w * 3]).unwrap()
    }

    #[test]
    fn zero_sigma_is_identity() {
        let img = flat(4, 4);
        assert_eq!(add_gaussian_noise(&img, 0.0, 9).unwrap(), img);
    }

    #[test]
    fn deterministic_per_seed() {
        let img = flat(4, 4);
        assert_eq!(
            add_gaussian_noise(&img, 0.1, 3).unwrap(),
            add_gaussian_noise(&img, 0.1, 3).unwrap()
        );
        assert_ne!(
            add_gaussian_noise(&img, 0.1, 3).unwrap(),
            add_gaussian_noise(&img, 0.1, 4).unwrap()
        );
    }

    #[test]
    fn sample_moments_match_sigma() {
        // 100_002 draws: |mean| < 3σ/√n and std within 2 % of σ.
        let sigma = 0.2;
        let img = RgbImage::new(1, 33_334, vec![0.0; 100_002]).unwrap();
        let noisy = add_gaussian_noise(&img, sigma, 17).unwrap();
        let n = noisy.values().len() as f64;
        let mean = noisy.values().iter().sum::<f64>() / n;
        let var = noisy.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 3.0 * sigma / n.sqrt(), "mean {mean}");
        assert!((var.sqrt() / sigma - 1.0).abs() < 0.02, "std {}", var.sqrt());
    }

    #[test]
    fn negative_sigma_is_rejected() {
        assert!(add_gaussian_noise(&flat(1, 1), -1.0, 0).is_err());
    }
}
