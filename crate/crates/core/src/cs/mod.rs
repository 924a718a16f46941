//! Block compressive sampling.
//!
//! A single `M x N` matrix Φ measures every non-overlapping `b x b` block
//! (`N = b²`). Sampling is a bias-free stride-`b` convolution whose kernels
//! are the rows of Φ; initial reconstruction is a 1x1 convolution with the
//! columns of Φ followed by a pixel shuffle. Both directions read the same
//! parameter, so they are exact transposes of each other.

mod grid;

pub use grid::{crop_from_block, pad_to_block, BlockGrid};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// `M = floor(ratio * block_side²)`.
pub fn measurement_count(block_side: usize, ratio: f64) -> Result<usize> {
    if block_side == 0 {
        return Err(Error::invalid("sampling", "block side must be positive"));
    }
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::invalid(
            "sampling",
            format!("ratio must lie in (0, 1], got {ratio}"),
        ));
    }
    let n = block_side * block_side;
    // nudge so that e.g. 0.3 * 1024 lands on 307 despite rounding in `ratio`
    let m = (ratio * n as f64 + 1e-9).floor() as usize;
    if m == 0 {
        return Err(Error::invalid(
            "sampling",
            format!("ratio {ratio} yields no measurements for block side {block_side}"),
        ));
    }
    Ok(m.min(n))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMatrix<T: Element = f32> {
    phi: Tensor<T>,
    block_side: usize,
    ratio: f64,
}

impl<T: Element> SamplingMatrix<T> {
    pub fn new(phi: Tensor<T>, block_side: usize, ratio: f64) -> Result<Self> {
        let m = measurement_count(block_side, ratio)?;
        let n = block_side * block_side;
        if phi.shape() != [m, n] {
            return Err(Error::shape("sampling matrix", format!("[{m}, {n}]"), phi.shape()));
        }
        Ok(SamplingMatrix {
            phi,
            block_side,
            ratio,
        })
    }

    /// Wraps an arbitrary `M x b²` matrix; the ratio is taken as `M / b²`.
    pub fn from_rows(phi: Tensor<T>, block_side: usize) -> Result<Self> {
        let n = block_side * block_side;
        match phi.shape() {
            [m, cols] if *cols == n && *m >= 1 && *m <= n => {
                let ratio = *m as f64 / n as f64;
                Ok(SamplingMatrix {
                    phi,
                    block_side,
                    ratio,
                })
            }
            _ => Err(Error::shape("sampling matrix", format!("[M <= {n}, {n}]"), phi.shape())),
        }
    }

    /// I.i.d. Gaussian entries with variance `1 / N`.
    pub fn gaussian(block_side: usize, ratio: f64, seed: u64) -> Result<Self> {
        let m = measurement_count(block_side, ratio)?;
        let n = block_side * block_side;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = Tensor::randn(&[m, n], (1.0 / n as f64).sqrt(), &mut rng);
        Self::new(phi, block_side, ratio)
    }

    pub fn identity(block_side: usize) -> Self {
        let n = block_side * block_side;
        Self::from_rows(Tensor::eye(n), block_side).expect("square identity")
    }

    /// The square orthonormal 2-D DCT-II basis, one flattened basis image per row.
    pub fn dct_basis(block_side: usize) -> Self {
        let b = block_side;
        let c = dct_matrix(b);
        let n = b * b;
        let mut phi = vec![0.0f64; n * n];
        for u in 0..b {
            for v in 0..b {
                let row = u * b + v;
                for y in 0..b {
                    for x in 0..b {
                        phi[row * n + y * b + x] = c[u * b + y] * c[v * b + x];
                    }
                }
            }
        }
        let phi = Tensor::<f64>::from_vec(&[n, n], phi).expect("dct shape").cast();
        Self::from_rows(phi, b).expect("square basis")
    }

    /// Same row space with orthonormal rows (modified Gram-Schmidt in f64).
    pub fn orthonormalized(&self) -> Result<Self> {
        let [m, n] = self.phi.shape()[..] else { unreachable!() };
        let mut rows: Vec<Vec<f64>> = (0..m)
            .map(|i| self.phi.outer(i).iter().map(|v| v.as_f64()).collect())
            .collect();
        for i in 0..m {
            for j in 0..i {
                let (done, rest) = rows.split_at_mut(i);
                let d: f64 = rest[0].iter().zip(&done[j]).map(|(a, b)| a * b).sum();
                for (a, b) in rest[0].iter_mut().zip(&done[j]) {
                    *a -= d * b;
                }
            }
            let norm = rows[i].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-12 {
                return Err(Error::invalid("orthonormalize", "rows are linearly dependent"));
            }
            rows[i].iter_mut().for_each(|v| *v /= norm);
        }
        let data = rows.into_iter().flatten().map(T::from_f64_lossy).collect();
        Ok(SamplingMatrix {
            phi: Tensor::from_vec(&[m, n], data)?,
            block_side: self.block_side,
            ratio: self.ratio,
        })
    }

    pub fn phi(&self) -> &Tensor<T> {
        &self.phi
    }

    pub fn phi_mut(&mut self) -> &mut Tensor<T> {
        &mut self.phi
    }

    pub fn into_phi(self) -> Tensor<T> {
        self.phi
    }

    pub fn block_side(&self) -> usize {
        self.block_side
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn measurements(&self) -> usize {
        self.phi.dim(0)
    }

    pub fn block_len(&self) -> usize {
        self.phi.dim(1)
    }

    /// Registers Φ on `tape` as a learnable leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> Result<BoundSampling<T>> {
        let phi = tape.param(self.phi.clone());
        BoundSampling::new(tape, phi, self.block_side)
    }

    fn bind_const(&self, tape: &mut Tape<T>) -> BoundSampling<T> {
        let phi = tape.constant(self.phi.clone());
        BoundSampling::new(tape, phi, self.block_side).expect("validated at construction")
    }

    pub fn sample(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::no_grad();
        let s = self.bind_const(&mut tape);
        let x = tape.constant(x.clone());
        Ok(sample(&mut tape, &x, &s)?.into_value())
    }

    pub fn init_reconstruct(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::no_grad();
        let s = self.bind_const(&mut tape);
        let y = tape.constant(y.clone());
        Ok(init_reconstruct(&mut tape, &y, &s)?.into_value())
    }

    pub fn fidelity_gradient(&self, x: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::no_grad();
        let s = self.bind_const(&mut tape);
        let x = tape.constant(x.clone());
        let y = tape.constant(y.clone());
        Ok(fidelity_gradient(&mut tape, &x, &y, &s)?.into_value())
    }

    pub fn orth_loss(&self) -> T {
        let mut tape = Tape::no_grad();
        let s = self.bind_const(&mut tape);
        orth_loss(&mut tape, &s).value().item()
    }

    /// Largest squared singular value of Φ by power iteration on ΦᵀΦ.
    pub fn spectral_norm_sq(&self, iters: usize) -> f64 {
        let [m, n] = self.phi.shape()[..] else { unreachable!() };
        let phi: Vec<f64> = self.phi.data().iter().map(|v| v.as_f64()).collect();
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut est = 0.0;
        for _ in 0..iters.max(1) {
            let u: Vec<f64> = (0..m)
                .map(|i| phi[i * n..(i + 1) * n].iter().zip(&v).map(|(a, b)| a * b).sum())
                .collect();
            let mut w = vec![0.0; n];
            for (i, &ui) in u.iter().enumerate() {
                for (wj, &p) in w.iter_mut().zip(&phi[i * n..(i + 1) * n]) {
                    *wj += p * ui;
                }
            }
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            est = norm;
            v = w.into_iter().map(|x| x / norm).collect();
        }
        est
    }
}

/// Orthonormal DCT-II matrix `C[k, i]` of size `b x b`.
pub(crate) fn dct_matrix(b: usize) -> Vec<f64> {
    let mut c = vec![0.0; b * b];
    for k in 0..b {
        let scale = if k == 0 {
            (1.0 / b as f64).sqrt()
        } else {
            (2.0 / b as f64).sqrt()
        };
        for i in 0..b {
            c[k * b + i] =
                scale * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2 * b) as f64).cos();
        }
    }
    c
}

/// Φ registered on a tape together with its two convolution views.
#[derive(Clone, Debug)]
pub struct BoundSampling<T: Element = f32> {
    phi: Var<T>,
    sample_kernel: Var<T>,
    init_kernel: Var<T>,
    block_side: usize,
}

impl<T: Element> BoundSampling<T> {
    /// Derives the kernels from an `M x b²` variable already on `tape`.
    pub fn new(tape: &mut Tape<T>, phi: Var<T>, block_side: usize) -> Result<Self> {
        let n = block_side * block_side;
        let m = match phi.shape() {
            [m, cols] if *cols == n => *m,
            other => return Err(Error::shape("sampling matrix", format!("[M, {n}]"), other)),
        };
        let sample_kernel = tape.reshape(&phi, &[m, 1, block_side, block_side])?;
        let phi_t = tape.transpose(&phi)?;
        let init_kernel = tape.reshape(&phi_t, &[n, m, 1, 1])?;
        Ok(BoundSampling {
            phi,
            sample_kernel,
            init_kernel,
            block_side,
        })
    }

    pub fn phi(&self) -> &Var<T> {
        &self.phi
    }

    pub fn block_side(&self) -> usize {
        self.block_side
    }

    pub fn measurements(&self) -> usize {
        self.phi.shape()[0]
    }
}

/// `Y = W_Φ * X`: stride-`b` bias-free convolution, `[B,1,H,W] -> [B,M,H/b,W/b]`.
pub fn sample<T: Element>(tape: &mut Tape<T>, x: &Var<T>, s: &BoundSampling<T>) -> Result<Var<T>> {
    let b = s.block_side;
    match x.shape() {
        [_, 1, h, w] if h % b == 0 && w % b == 0 => {}
        [_, 1, _, _] => {
            return Err(Error::invalid(
                "sample",
                format!(
                    "extents {:?} are not multiples of block side {b}; pad with pad_to_block first",
                    &x.shape()[2..]
                ),
            ))
        }
        other => return Err(Error::shape("sample", "[B, 1, H, W]", other)),
    }
    tape.conv2d(x, &s.sample_kernel, None, b, 0)
}

/// `X_init = PixelShuffle(W_Φᵀ * Y)`, i.e. `Φᵀ y` per block.
pub fn init_reconstruct<T: Element>(
    tape: &mut Tape<T>,
    y: &Var<T>,
    s: &BoundSampling<T>,
) -> Result<Var<T>> {
    let m = s.measurements();
    match y.shape() {
        [_, c, _, _] if *c == m => {}
        other => return Err(Error::shape("init_reconstruct", format!("[B, {m}, h, w]"), other)),
    }
    let blocks = tape.conv2d(y, &s.init_kernel, None, 1, 0)?;
    tape.pixel_shuffle(&blocks, s.block_side)
}

/// `Φᵀ(Φx - y)`, the gradient of `½‖Φx - y‖²` with respect to `x`.
pub fn fidelity_gradient<T: Element>(
    tape: &mut Tape<T>,
    x: &Var<T>,
    y: &Var<T>,
    s: &BoundSampling<T>,
) -> Result<Var<T>> {
    let measured = sample(tape, x, s)?;
    if measured.shape() != y.shape() {
        return Err(Error::shape(
            "fidelity_gradient",
            format!("measurements {:?}", measured.shape()),
            y.shape(),
        ));
    }
    let residual = tape.sub(&measured, y)?;
    init_reconstruct(tape, &residual, s)
}

/// `(1/M²) ‖ΦΦᵀ - I‖²_F`.
pub fn orth_loss<T: Element>(tape: &mut Tape<T>, s: &BoundSampling<T>) -> Var<T> {
    let m = s.measurements();
    let phi_t = tape.transpose(&s.phi).expect("rank 2");
    let gram = tape.matmul(&s.phi, &phi_t).expect("conformable");
    let eye = tape.constant(Tensor::eye(m));
    let diff = tape.sub(&gram, &eye).expect("square gram");
    let sq = tape.frobenius_sq(&diff);
    tape.scale(&sq, T::one() / T::from_usize(m * m).expect("count"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Loops over blocks and applies Φ to each flattened block directly.
    fn block_sample_oracle(x: &Tensor<f64>, phi: &Tensor<f64>, b: usize) -> Tensor<f64> {
        let [_, _, h, w] = x.nchw("t").unwrap();
        let m = phi.dim(0);
        let (bh, bw) = (h / b, w / b);
        let mut out = Tensor::zeros(&[1, m, bh, bw]);
        for i in 0..bh {
            for j in 0..bw {
                let block: Vec<f64> = (0..b * b)
                    .map(|p| x.data()[(i * b + p / b) * w + j * b + p % b])
                    .collect();
                for r in 0..m {
                    let v: f64 = phi.outer(r).iter().zip(&block).map(|(a, c)| a * c).sum();
                    out.data_mut()[(r * bh + i) * bw + j] = v;
                }
            }
        }
        out
    }

    fn block_init_oracle(y: &Tensor<f64>, phi: &Tensor<f64>, b: usize) -> Tensor<f64> {
        let [_, m, bh, bw] = y.nchw("t").unwrap();
        let n = b * b;
        let (h, w) = (bh * b, bw * b);
        let mut out = Tensor::zeros(&[1, 1, h, w]);
        for i in 0..bh {
            for j in 0..bw {
                for p in 0..n {
                    let v: f64 = (0..m).map(|r| phi.data()[r * n + p] * y.data()[(r * bh + i) * bw + j]).sum();
                    out.data_mut()[(i * b + p / b) * w + j * b + p % b] = v;
                }
            }
        }
        out
    }

    #[test]
    fn measurement_count_follows_floor_rule() {
        assert_eq!(measurement_count(32, 0.1).unwrap(), 102);
        assert_eq!(measurement_count(32, 0.25).unwrap(), 256);
        assert_eq!(measurement_count(32, 0.3).unwrap(), 307);
        assert_eq!(measurement_count(32, 0.01).unwrap(), 10);
        assert_eq!(measurement_count(32, 1.0).unwrap(), 1024);
        assert!(measurement_count(32, 1.5).is_err());
        assert!(measurement_count(32, 0.0).is_err());
        assert!(measurement_count(2, 0.1).is_err());
    }

    #[test]
    fn mean_row_measures_constant_image() {
        let phi = Tensor::<f64>::full(&[1, 16], 1.0 / 16.0);
        let s = SamplingMatrix::from_rows(phi, 4).unwrap();
        let x = Tensor::full(&[1, 1, 8, 12], 0.7);
        let y = s.sample(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 3]);
        assert!(y.data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn identity_sampling_is_space_to_depth() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::<f32>::randn(&[1, 1, 8, 8], 1.0, &mut rng);
        let s = SamplingMatrix::identity(4);
        let y = s.sample(&x).unwrap();
        assert_eq!(y, crate::ops::space_to_depth(&x, 4).unwrap());
        assert_eq!(s.init_reconstruct(&y).unwrap(), x);
    }

    #[test]
    fn sample_and_init_match_block_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = SamplingMatrix::<f64>::gaussian(4, 0.5, 1).unwrap();
        let x = Tensor::<f64>::randn(&[1, 1, 12, 8], 1.0, &mut rng);
        let y = s.sample(&x).unwrap();
        assert!(y.max_abs_diff(&block_sample_oracle(&x, s.phi(), 4)).unwrap() < 1e-12);
        let init = s.init_reconstruct(&y).unwrap();
        assert!(init.max_abs_diff(&block_init_oracle(&y, s.phi(), 4)).unwrap() < 1e-12);
    }

    #[test]
    fn shapes_for_ratio_tenth() {
        let s = SamplingMatrix::<f32>::gaussian(32, 0.1, 0).unwrap();
        let x = Tensor::zeros(&[1, 1, 96, 96]);
        let y = s.sample(&x).unwrap();
        assert_eq!(y.shape(), &[1, 102, 3, 3]);
        assert_eq!(s.init_reconstruct(&y).unwrap().shape(), &[1, 1, 96, 96]);
    }

    #[test]
    fn dct_basis_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = SamplingMatrix::<f32>::dct_basis(8);
        let x = Tensor::<f32>::randn(&[1, 1, 16, 24], 1.0, &mut rng);
        let back = s.init_reconstruct(&s.sample(&x).unwrap()).unwrap();
        assert!(back.max_abs_diff(&x).unwrap() < 1e-5);
    }

    #[test]
    fn fidelity_gradient_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = SamplingMatrix::<f64>::identity(4);
        let x = Tensor::<f64>::randn(&[1, 1, 8, 8], 1.0, &mut rng);
        let y = Tensor::<f64>::randn(&[1, 16, 2, 2], 1.0, &mut rng);
        let g = s.fidelity_gradient(&x, &y).unwrap();
        let expect = x.zip_map(&s.init_reconstruct(&y).unwrap(), "t", |a, b| a - b).unwrap();
        assert!(g.max_abs_diff(&expect).unwrap() < 1e-15);

        let s = SamplingMatrix::<f64>::gaussian(4, 0.5, 3).unwrap();
        let y = s.sample(&x).unwrap();
        assert!(s.fidelity_gradient(&x, &y).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fidelity_gradient_matches_autograd() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = SamplingMatrix::<f64>::gaussian(4, 0.5, 5).unwrap();
        let x = Tensor::<f64>::randn(&[1, 1, 8, 12], 1.0, &mut rng);
        let y = Tensor::<f64>::randn(&[1, 8, 2, 3], 1.0, &mut rng);
        let mut tape = Tape::new();
        let bound = s.bind_const(&mut tape);
        let xv = tape.param(x.clone());
        let yv = tape.constant(y.clone());
        let measured = sample(&mut tape, &xv, &bound).unwrap();
        let r = tape.sub(&measured, &yv).unwrap();
        let half = tape.frobenius_sq(&r);
        let loss = tape.scale(&half, 0.5);
        let grads = tape.backward(&loss).unwrap();
        let g = s.fidelity_gradient(&x, &y).unwrap();
        assert!(grads.get(&xv).unwrap().max_abs_diff(&g).unwrap() < 1e-12);
    }

    #[test]
    fn orth_loss_examples() {
        let s = SamplingMatrix::<f64>::dct_basis(4);
        assert!(s.orth_loss().abs() < 1e-12);
        let two_eye = Tensor::<f64>::eye(4).map(|v| 2.0 * v);
        let s = SamplingMatrix::from_rows(two_eye, 2).unwrap();
        assert!((s.orth_loss() - 2.25).abs() < 1e-15);
    }

    #[test]
    fn orth_loss_matches_double_loop() {
        let s = SamplingMatrix::<f64>::gaussian(4, 0.5, 77).unwrap();
        let (m, n) = (s.measurements(), s.block_len());
        let p = s.phi().data();
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                let g: f64 = (0..n).map(|k| p[i * n + k] * p[j * n + k]).sum();
                let d = g - if i == j { 1.0 } else { 0.0 };
                acc += d * d;
            }
        }
        assert!((s.orth_loss() - acc / (m * m) as f64).abs() < 1e-12);
    }

    #[test]
    fn orth_loss_ignores_row_order() {
        let s = SamplingMatrix::<f64>::gaussian(4, 0.5, 12).unwrap();
        let (m, n) = (s.measurements(), s.block_len());
        let mut rows: Vec<f64> = Vec::new();
        for i in (0..m).rev() {
            rows.extend_from_slice(s.phi().outer(i));
        }
        let flipped = SamplingMatrix::from_rows(Tensor::from_vec(&[m, n], rows).unwrap(), 4).unwrap();
        assert!((s.orth_loss() - flipped.orth_loss()).abs() < 1e-12);
    }

    #[test]
    fn gaussian_init_is_seeded_and_scaled() {
        let a = SamplingMatrix::<f32>::gaussian(32, 0.5, 42).unwrap();
        assert_eq!(a.phi().shape(), &[512, 1024]);
        assert_eq!(a, SamplingMatrix::gaussian(32, 0.5, 42).unwrap());
        assert_ne!(a, SamplingMatrix::gaussian(32, 0.5, 43).unwrap());
        let vals = a.phi().data();
        let mean = vals.iter().map(|&v| v as f64).sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!((var * 1024.0 - 1.0).abs() < 0.2, "variance {var}");
        assert!(SamplingMatrix::<f32>::gaussian(32, 1.5, 0).is_err());
    }

    #[test]
    fn orthonormalized_rows_have_zero_penalty() {
        let s = SamplingMatrix::<f64>::gaussian(4, 0.5, 1).unwrap().orthonormalized().unwrap();
        assert!(s.orth_loss() < 1e-24);
        assert!((s.spectral_norm_sq(50) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_shapes() {
        let s = SamplingMatrix::<f32>::gaussian(4, 0.5, 1).unwrap();
        let err = s.sample(&Tensor::zeros(&[1, 1, 6, 8])).unwrap_err();
        assert!(err.to_string().contains("pad_to_block"));
        assert!(s.init_reconstruct(&Tensor::zeros(&[1, 3, 2, 2])).is_err());
        assert!(SamplingMatrix::new(Tensor::<f32>::zeros(&[3, 16]), 4, 0.5).is_err());
    }
}
