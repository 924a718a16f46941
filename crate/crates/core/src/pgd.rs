//! Classical proximal gradient descent (ISTA) for block compressive sensing.
//!
//! Each iteration takes a gradient step on `½‖Φx - y‖²` and then applies the
//! proximal map of `λ‖DCT(x)‖₁`, which is soft-thresholding of the per-block
//! orthonormal DCT coefficients.

use crate::cs::{dct_matrix, SamplingMatrix};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// `sign(v) * max(|v| - tau, 0)` elementwise.
pub fn soft_threshold<T: Element>(v: &Tensor<T>, tau: T) -> Result<Tensor<T>> {
    if !(tau >= T::zero()) {
        return Err(Error::invalid("soft_threshold", "threshold must be non-negative"));
    }
    Ok(v.map(|x| shrink(x, tau)))
}

fn shrink<T: Element>(x: T, tau: T) -> T {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        T::zero()
    }
}

fn block_transform<T: Element>(x: &Tensor<T>, block_side: usize, inverse: bool) -> Result<Tensor<T>> {
    let op = if inverse { "block_idct2" } else { "block_dct2" };
    let b = block_side;
    if x.rank() < 2 {
        return Err(Error::shape(op, "at least rank 2 (.., H, W)", x.shape()));
    }
    let (h, w) = (x.dim(x.rank() - 2), x.dim(x.rank() - 1));
    if b == 0 || h % b != 0 || w % b != 0 {
        return Err(Error::shape(op, format!("extents divisible by {b}"), x.shape()));
    }
    let c = dct_matrix(b);
    let planes = x.numel() / (h * w);
    let src = x.data();
    let mut out = vec![T::zero(); src.len()];
    let mut block = vec![0.0f64; b * b];
    let mut tmp = vec![0.0f64; b * b];
    for p in 0..planes {
        let base = p * h * w;
        for by in 0..h / b {
            for bx in 0..w / b {
                for i in 0..b {
                    for j in 0..b {
                        block[i * b + j] = src[base + (by * b + i) * w + bx * b + j].as_f64();
                    }
                }
                // forward: C X Cᵀ ; inverse: Cᵀ X C
                for i in 0..b {
                    for j in 0..b {
                        tmp[i * b + j] = (0..b)
                            .map(|k| {
                                let cik = if inverse { c[k * b + i] } else { c[i * b + k] };
                                cik * block[k * b + j]
                            })
                            .sum();
                    }
                }
                for i in 0..b {
                    for j in 0..b {
                        let v: f64 = (0..b)
                            .map(|k| {
                                let cjk = if inverse { c[k * b + j] } else { c[j * b + k] };
                                tmp[i * b + k] * cjk
                            })
                            .sum();
                        out[base + (by * b + i) * w + bx * b + j] = T::from_f64_lossy(v);
                    }
                }
            }
        }
    }
    Tensor::from_vec(x.shape(), out)
}

/// Orthonormal 2-D DCT-II of every non-overlapping `b x b` block.
pub fn block_dct2<T: Element>(x: &Tensor<T>, block_side: usize) -> Result<Tensor<T>> {
    block_transform(x, block_side, false)
}

pub fn block_idct2<T: Element>(x: &Tensor<T>, block_side: usize) -> Result<Tensor<T>> {
    block_transform(x, block_side, true)
}

/// Geometric decay of the threshold weight from `start` down to the final
/// `reg_weight`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Continuation {
    pub start: f64,
    pub decay: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PgdConfig {
    pub step_size: f64,
    pub reg_weight: f64,
    pub max_iters: usize,
    /// Stop once `‖x_k - x_{k-1}‖ / ‖x_{k-1}‖` falls below this.
    pub tolerance: f64,
    /// Threshold DCT coefficients (true) or pixels (false).
    pub dct: bool,
    pub continuation: Option<Continuation>,
}

impl Default for PgdConfig {
    fn default() -> Self {
        PgdConfig {
            step_size: 1.0,
            reg_weight: 0.0,
            max_iters: 200,
            tolerance: 1e-6,
            dct: true,
            continuation: None,
        }
    }
}

impl PgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid("pgd", "step size must be positive"));
        }
        if !(self.reg_weight >= 0.0) {
            return Err(Error::invalid("pgd", "regularization weight must be non-negative"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("pgd", "max_iters must be at least 1"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::invalid("pgd", "tolerance must be non-negative"));
        }
        if let Some(c) = self.continuation {
            if !(c.decay > 0.0 && c.decay < 1.0) || !(c.start >= self.reg_weight) {
                return Err(Error::invalid(
                    "pgd",
                    "continuation needs 0 < decay < 1 and start >= reg_weight",
                ));
            }
        }
        Ok(())
    }

    fn lambda_at(&self, iter: usize) -> f64 {
        match self.continuation {
            Some(c) => (c.start * c.decay.powi(iter as i32)).max(self.reg_weight),
            None => self.reg_weight,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PgdResult<T: Element> {
    pub x: Tensor<T>,
    pub iters: usize,
    /// `‖Φx_k - y‖₂` after each iteration.
    pub residuals: Vec<f64>,
}

fn residual_norm<T: Element>(s: &SamplingMatrix<T>, x: &Tensor<T>, y: &Tensor<T>) -> Result<f64> {
    let diff = s.sample(x)?.zip_map(y, "residual", |a, b| a - b)?;
    Ok(diff.data().iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt())
}

/// Runs ISTA from `x⁰ = Φᵀy`.
pub fn pgd_reconstruct<T: Element>(
    y: &Tensor<T>,
    s: &SamplingMatrix<T>,
    cfg: &PgdConfig,
) -> Result<PgdResult<T>> {
    cfg.validate()?;
    let b = s.block_side();
    let rho = T::from_f64_lossy(cfg.step_size);
    let mut x = s.init_reconstruct(y)?;
    let mut residuals = Vec::with_capacity(cfg.max_iters);
    let mut iters = 0;
    for k in 0..cfg.max_iters {
        let lambda = cfg.lambda_at(k);
        let g = s.fidelity_gradient(&x, y)?;
        let r = x.zip_map(&g, "pgd", |xv, gv| xv - rho * gv)?;
        let tau = T::from_f64_lossy(cfg.step_size * lambda);
        let next = if lambda == 0.0 {
            r
        } else if cfg.dct {
            block_idct2(&soft_threshold(&block_dct2(&r, b)?, tau)?, b)?
        } else {
            soft_threshold(&r, tau)?
        };
        if !next.all_finite() {
            return Err(Error::NonFinite(format!(
                "iterate diverged at iteration {}; reduce the step size (currently {})",
                k + 1,
                cfg.step_size
            )));
        }
        residuals.push(residual_norm(s, &next, y)?);
        let delta = next
            .data()
            .iter()
            .zip(x.data())
            .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
            .sum::<f64>()
            .sqrt();
        // f64 so a fast-growing f32 iterate cannot overflow the norm to inf
        let base = x
            .data()
            .iter()
            .map(|v| v.as_f64().powi(2))
            .sum::<f64>()
            .sqrt()
            .max(f64::MIN_POSITIVE);
        x = next;
        iters = k + 1;
        if lambda <= cfg.reg_weight && delta / base < cfg.tolerance {
            break;
        }
    }
    Ok(PgdResult { x, iters, residuals })
}
