//! Deterministic synthetic data: sparse signals for the classical solver and
//! procedural grayscale images for desk-scale training and evaluation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::pgd::block_idct2;
use crate::tensor::{Element, Tensor};

/// A `[1,1,b*rows,b*cols]` image whose every `b x b` block has exactly
/// `sparsity` nonzero DCT coefficients, with magnitudes in `[0.5, 1.5]` and
/// random signs.
pub fn sparse_dct_image<T: Element>(
    block_side: usize,
    rows: usize,
    cols: usize,
    sparsity: usize,
    seed: u64,
) -> Result<Tensor<T>> {
    let b = block_side;
    let (h, w) = (rows * b, cols * b);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = vec![T::zero(); h * w];
    let mut slots: Vec<usize> = (0..b * b).collect();
    for by in 0..rows {
        for bx in 0..cols {
            slots.shuffle(&mut rng);
            for &s in &slots[..sparsity.min(b * b)] {
                let mag: f64 = rng.random_range(0.5..1.5);
                let v = if rng.random::<bool>() { mag } else { -mag };
                let (i, j) = (s / b, s % b);
                coeffs[(by * b + i) * w + bx * b + j] = T::from_f64_lossy(v);
            }
        }
    }
    block_idct2(&Tensor::from_vec(&[1, 1, h, w], coeffs)?, b)
}

/// A procedural grayscale image in `[0,1]`: a smooth background gradient,
/// a handful of filled discs and rectangles, a sinusoidal texture patch and
/// mild noise. Different seeds give different scenes.
pub fn procedural_image(height: usize, width: usize, seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hf, wf) = (height as f64, width as f64);
    let base: f64 = rng.random_range(0.2..0.8);
    let gx: f64 = rng.random_range(-0.3..0.3);
    let gy: f64 = rng.random_range(-0.3..0.3);
    let mut img: Vec<f64> = (0..height * width)
        .map(|p| {
            let (y, x) = ((p / width) as f64 / hf, (p % width) as f64 / wf);
            base + gx * (x - 0.5) + gy * (y - 0.5)
        })
        .collect();

    let shapes = rng.random_range(4..9);
    for _ in 0..shapes {
        let level: f64 = rng.random_range(0.0..1.0);
        let cy = rng.random_range(0.0..hf);
        let cx = rng.random_range(0.0..wf);
        let size = rng.random_range(0.05..0.3) * hf.min(wf);
        let disc = rng.random::<bool>();
        let aspect: f64 = rng.random_range(0.5..2.0);
        for (p, v) in img.iter_mut().enumerate() {
            let dy = (p / width) as f64 - cy;
            let dx = (p % width) as f64 - cx;
            let inside = if disc {
                dy * dy + (dx / aspect).powi(2) <= size * size
            } else {
                dy.abs() <= size && dx.abs() <= size * aspect
            };
            if inside {
                *v = level;
            }
        }
    }

    // one oriented stripe texture inside a random window
    let freq: f64 = rng.random_range(0.15..0.6);
    let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let (ty, tx) = (rng.random_range(0.0..hf * 0.6), rng.random_range(0.0..wf * 0.6));
    let (th, tw) = (hf * rng.random_range(0.2..0.4), wf * rng.random_range(0.2..0.4));
    let amp: f64 = rng.random_range(0.1..0.25);
    for (p, v) in img.iter_mut().enumerate() {
        let (y, x) = ((p / width) as f64, (p % width) as f64);
        if y >= ty && y < ty + th && x >= tx && x < tx + tw {
            *v += amp * (freq * (x * theta.cos() + y * theta.sin())).sin();
        }
    }

    let noise = 0.01;
    let data = img
        .into_iter()
        .map(|v| {
            let n: f64 = StandardNormal.sample(&mut rng);
            (v + noise * n).clamp(0.0, 1.0) as f32
        })
        .collect();
    Tensor::from_vec(&[1, 1, height, width], data).expect("extents are positive")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pgd::block_dct2;

    #[test]
    fn sparse_image_has_requested_support() {
        let x = sparse_dct_image::<f64>(8, 2, 3, 5, 4).unwrap();
        assert_eq!(x.shape(), &[1, 1, 16, 24]);
        let c = block_dct2(&x, 8).unwrap();
        let nz = c.data().iter().filter(|v| v.abs() > 1e-9).count();
        assert_eq!(nz, 6 * 5);
    }

    #[test]
    fn procedural_images_are_seeded_and_in_range() {
        let a = procedural_image(48, 64, 7);
        assert_eq!(a, procedural_image(48, 64, 7));
        assert_ne!(a, procedural_image(48, 64, 8));
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let mean = a.sum() / a.numel() as f32;
        let var = a.data().iter().map(|v| (v - mean).powi(2)).sum::<f32>() / a.numel() as f32;
        assert!(var > 1e-3, "image should not be flat");
    }
}
