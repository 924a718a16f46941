//! Image quality metrics on unit-range grayscale images.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn plane_dims<T: Element>(x: &Tensor<T>, y: &Tensor<T>, op: &'static str) -> Result<(usize, usize, usize)> {
    x.expect_same_shape(y, op)?;
    if x.rank() < 2 {
        return Err(Error::shape(op, "at least rank 2 (.., H, W)", x.shape()));
    }
    let (h, w) = (x.dim(x.rank() - 2), x.dim(x.rank() - 1));
    Ok((x.numel() / (h * w), h, w))
}

/// PSNR in dB for peak value 1.0; `f64::INFINITY` when the images match.
pub fn psnr<T: Element>(x: &Tensor<T>, x_hat: &Tensor<T>) -> Result<f64> {
    x.expect_same_shape(x_hat, "psnr")?;
    let mse = x
        .data()
        .iter()
        .zip(x_hat.data())
        .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
        .sum::<f64>()
        / x.numel() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let taps: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable valid-region filtering of an `h x w` plane.
fn filter_valid(src: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ho, wo) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * wo];
    for r in 0..h {
        for c in 0..wo {
            rows[r * wo + c] = taps.iter().enumerate().map(|(t, &g)| g * src[r * w + c + t]).sum();
        }
    }
    let mut out = vec![0.0; ho * wo];
    for r in 0..ho {
        for c in 0..wo {
            out[r * wo + c] = taps.iter().enumerate().map(|(t, &g)| g * rows[(r + t) * wo + c]).sum();
        }
    }
    out
}

/// Mean SSIM over all fully-contained 11x11 Gaussian windows (σ = 1.5,
/// K1 = 0.01, K2 = 0.03, dynamic range 1). Leading axes are averaged too.
pub fn ssim<T: Element>(x: &Tensor<T>, y: &Tensor<T>) -> Result<f64> {
    let (planes, h, w) = plane_dims(x, y, "ssim")?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(
            "ssim",
            format!("image {h}x{w} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"),
        ));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    let mut count = 0usize;
    for p in 0..planes {
        let range = p * h * w..(p + 1) * h * w;
        let a: Vec<f64> = x.data()[range.clone()].iter().map(|v| v.as_f64()).collect();
        let b: Vec<f64> = y.data()[range].iter().map(|v| v.as_f64()).collect();
        let prod = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p * q).collect::<Vec<f64>>();
        let mu_a = filter_valid(&a, h, w, &taps);
        let mu_b = filter_valid(&b, h, w, &taps);
        let aa = filter_valid(&prod(&a, &a), h, w, &taps);
        let bb = filter_valid(&prod(&b, &b), h, w, &taps);
        let ab = filter_valid(&prod(&a, &b), h, w, &taps);
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        count += mu_a.len();
    }
    Ok(total / count as f64)
}

/// BT.601 luma of an `[N,3,H,W]` RGB tensor, giving `[N,1,H,W]`.
pub fn rgb_to_y(rgb: &Tensor<f32>) -> Result<Tensor<f32>> {
    let [n, c, h, w] = rgb.nchw("rgb_to_y")?;
    if c != 3 {
        return Err(Error::shape("rgb_to_y", "[N, 3, H, W]", rgb.shape()));
    }
    let plane = h * w;
    let src = rgb.data();
    let mut out = Vec::with_capacity(n * plane);
    for i in 0..n {
        let base = i * 3 * plane;
        out.extend((0..plane).map(|p| {
            luma(src[base + p], src[base + plane + p], src[base + 2 * plane + p])
        }));
    }
    Tensor::from_vec(&[n, 1, h, w], out)
}

pub fn luma(r: f32, g: f32, b: f32) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Rounds to the nearest of 256 levels after clamping to `[0,1]`.
pub fn quantize_8bit(x: &Tensor<f32>) -> Tensor<f32> {
    x.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
}
