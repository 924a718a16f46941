//! Convolution kernels (cross-correlation, NCHW layout) via im2col + GEMM.
//!
//! Weight layout is `[Cout, Cin, kh, kw]`. The transposed convolution reuses
//! the same weight tensor read as `[Cin_t, Cout_t, kh, kw]`, so a transposed
//! convolution is exactly the input-gradient map of the matching forward
//! convolution.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(
        op: &'static str,
        x_shape: &[usize],
        w_shape: &[usize],
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let [n, cin, h, w] = x_shape[..] else {
            return Err(Error::shape(op, "input of rank 4 (N, C, H, W)", x_shape));
        };
        let [cout, wcin, kh, kw] = w_shape[..] else {
            return Err(Error::shape(op, "weight of rank 4 (Cout, Cin, kh, kw)", w_shape));
        };
        if stride == 0 {
            return Err(Error::invalid(op, "stride must be positive"));
        }
        if wcin != cin {
            return Err(Error::shape(
                op,
                format!("weight with {cin} input channels"),
                w_shape,
            ));
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(Error::shape(
                op,
                format!("padded input at least {kh}x{kw}"),
                x_shape,
            ));
        }
        Ok(ConvGeom {
            n,
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            stride,
            pad,
            ho: (h + 2 * pad - kh) / stride + 1,
            wo: (w + 2 * pad - kw) / stride + 1,
        })
    }

    fn k(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.ho * self.wo
    }

    fn in_image(&self) -> usize {
        self.cin * self.h * self.w
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    /// Range of output columns `ox` whose input column `ox*s + kx - pad`
    /// lands inside `[0, w)`.
    fn valid_cols(&self, kx: usize) -> (usize, usize) {
        valid_range(self.wo, self.w, self.stride, kx, self.pad)
    }

    fn valid_rows(&self, ky: usize) -> (usize, usize) {
        valid_range(self.ho, self.h, self.stride, ky, self.pad)
    }
}

fn valid_range(out: usize, size: usize, stride: usize, offset: usize, pad: usize) -> (usize, usize) {
    // o*stride + offset >= pad  and  o*stride + offset - pad < size
    let lo = if offset >= pad {
        0
    } else {
        (pad - offset).div_ceil(stride)
    };
    let limit = size + pad; // o*stride + offset < limit
    let hi = if limit > offset {
        ((limit - offset - 1) / stride + 1).min(out)
    } else {
        0
    };
    (lo.min(hi), hi)
}

fn im2col<T: Element>(x: &[T], g: &ConvGeom, cols: &mut [T]) {
    let plane = g.out_plane();
    let (ox_lo_by_kx, ox_hi_by_kx): (Vec<_>, Vec<_>) = (0..g.kw).map(|kx| g.valid_cols(kx)).unzip();
    for ci in 0..g.cin {
        let src = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            let (oy_lo, oy_hi) = g.valid_rows(ky);
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                let (ox_lo, ox_hi) = (ox_lo_by_kx[kx], ox_hi_by_kx[kx]);
                for oy in 0..g.ho {
                    let out_row = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if oy < oy_lo || oy >= oy_hi || ox_lo >= ox_hi {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let iy = oy * g.stride + ky - g.pad;
                    let src_row = &src[iy * g.w..(iy + 1) * g.w];
                    out_row[..ox_lo].fill(T::zero());
                    out_row[ox_hi..].fill(T::zero());
                    let ix0 = ox_lo * g.stride + kx - g.pad;
                    if g.stride == 1 {
                        out_row[ox_lo..ox_hi].copy_from_slice(&src_row[ix0..ix0 + (ox_hi - ox_lo)]);
                    } else {
                        for (j, o) in out_row[ox_lo..ox_hi].iter_mut().enumerate() {
                            *o = src_row[ix0 + j * g.stride];
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add of columns back into an image; adjoint of [`im2col`].
fn col2im<T: Element>(cols: &[T], g: &ConvGeom, x: &mut [T]) {
    let plane = g.out_plane();
    for ci in 0..g.cin {
        let dst = &mut x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            let (oy_lo, oy_hi) = g.valid_rows(ky);
            for kx in 0..g.kw {
                let (ox_lo, ox_hi) = g.valid_cols(kx);
                if ox_lo >= ox_hi {
                    continue;
                }
                let row = (ci * g.kh + ky) * g.kw + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in oy_lo..oy_hi {
                    let iy = oy * g.stride + ky - g.pad;
                    let dst_row = &mut dst[iy * g.w..(iy + 1) * g.w];
                    let src_row = &src[oy * g.wo + ox_lo..oy * g.wo + ox_hi];
                    let ix0 = ox_lo * g.stride + kx - g.pad;
                    if g.stride == 1 {
                        for (d, &s) in dst_row[ix0..ix0 + src_row.len()].iter_mut().zip(src_row) {
                            *d += s;
                        }
                    } else {
                        for (j, &s) in src_row.iter().enumerate() {
                            dst_row[ix0 + j * g.stride] += s;
                        }
                    }
                }
            }
        }
    }
}

/// Stride-1 im2col over a zero-padded copy of the image. Every column row is
/// then a single contiguous slice of the padded plane; the price is `kw - 1`
/// junk outputs per row, since outputs are laid out on the padded width.
const FWD_TILE: usize = 48 * 1024;
const WGRAD_TILE: usize = 96 * 1024;

struct PaddedLayout {
    wp: usize,
    plane: usize,
}

impl PaddedLayout {
    fn new(g: &ConvGeom) -> Self {
        let wp = g.w + 2 * g.pad;
        let hp = g.h + 2 * g.pad;
        PaddedLayout {
            wp,
            // slack so the last window of the last row stays in bounds
            plane: hp * wp + g.kw,
        }
    }

    fn pad_into<T: Element>(&self, x: &[T], g: &ConvGeom, padded: &mut [T]) {
        for ci in 0..g.cin {
            let dst = &mut padded[ci * self.plane..(ci + 1) * self.plane];
            let src = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            for y in 0..g.h {
                let start = (y + g.pad) * self.wp + g.pad;
                dst[start..start + g.w].copy_from_slice(&src[y * g.w..(y + 1) * g.w]);
            }
        }
    }

    /// Output rows per tile so that one column tile stays cache resident.
    fn tile_rows(&self, g: &ConvGeom, elems: usize) -> usize {
        (elems / (g.k() * self.wp)).clamp(1, g.ho)
    }

    /// Columns for output rows `oy0..oy0 + rows` into `cols` (`k x rows*wp`).
    fn fill_tile<T: Element>(&self, g: &ConvGeom, padded: &[T], oy0: usize, rows: usize, cols: &mut [T]) {
        let len = rows * self.wp;
        for ci in 0..g.cin {
            let plane = &padded[ci * self.plane..(ci + 1) * self.plane];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let row = (ci * g.kh + ky) * g.kw + kx;
                    let off = (oy0 + ky) * self.wp + kx;
                    cols[row * len..(row + 1) * len].copy_from_slice(&plane[off..off + len]);
                }
            }
        }
    }
}

fn check_bias<T: Element>(op: &'static str, bias: Option<&Tensor<T>>, cout: usize) -> Result<()> {
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(Error::shape(op, format!("bias of shape [{cout}]"), b.shape()));
        }
    }
    Ok(())
}

pub fn conv2d<T: Element>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let g = ConvGeom::new("conv2d", x.shape(), weight.shape(), stride, padding)?;
    check_bias("conv2d", bias, g.cout)?;
    Ok(conv2d_with_geom(x.data(), weight.data(), bias.map(|b| b.data()), &g))
}

pub(crate) fn conv2d_with_geom<T: Element>(x: &[T], w: &[T], bias: Option<&[T]>, g: &ConvGeom) -> Tensor<T> {
    let plane = g.out_plane();
    let k = g.k();
    let mut out = vec![T::zero(); g.n * g.cout * plane];
    if g.stride == 1 && !g.is_pointwise() {
        let layout = PaddedLayout::new(g);
        let tile = layout.tile_rows(g, FWD_TILE);
        let mut pad_buf = vec![T::zero(); g.cin * layout.plane];
        let mut cols = vec![T::zero(); k * tile * layout.wp];
        let mut ext = vec![T::zero(); g.cout * tile * layout.wp];
        for n in 0..g.n {
            let xi = &x[n * g.in_image()..(n + 1) * g.in_image()];
            let yi = &mut out[n * g.cout * plane..(n + 1) * g.cout * plane];
            layout.pad_into(xi, g, &mut pad_buf);
            for oy0 in (0..g.ho).step_by(tile) {
                let rows = tile.min(g.ho - oy0);
                let len = rows * layout.wp;
                layout.fill_tile(g, &pad_buf, oy0, rows, &mut cols);
                T::gemm(g.cout, k, len, T::one(), w, false, &cols[..k * len], false, T::zero(), &mut ext[..g.cout * len]);
                for co in 0..g.cout {
                    let bv = bias.map_or(T::zero(), |b| b[co]);
                    for r in 0..rows {
                        let src = &ext[co * len + r * layout.wp..][..g.wo];
                        let dst = &mut yi[co * plane + (oy0 + r) * g.wo..][..g.wo];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d = s + bv;
                        }
                    }
                }
            }
        }
        return Tensor::from_vec(&[g.n, g.cout, g.ho, g.wo], out).expect("conv output shape");
    }
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); k * plane]
    };
    for n in 0..g.n {
        let xi = &x[n * g.in_image()..(n + 1) * g.in_image()];
        let yi = &mut out[n * g.cout * plane..(n + 1) * g.cout * plane];
        if let Some(b) = bias {
            for (co, &bv) in b.iter().enumerate() {
                yi[co * plane..(co + 1) * plane].fill(bv);
            }
        }
        let beta = if bias.is_some() { T::one() } else { T::zero() };
        let src = if g.is_pointwise() {
            xi
        } else {
            im2col(xi, g, &mut cols);
            &cols
        };
        T::gemm(g.cout, k, plane, T::one(), w, false, src, false, beta, yi);
    }
    Tensor::from_vec(&[g.n, g.cout, g.ho, g.wo], out).expect("conv output shape")
}

/// Gradient of `conv2d` with respect to its input.
pub(crate) fn conv2d_grad_input<T: Element>(dy: &[T], w: &Tensor<T>, g: &ConvGeom) -> Tensor<T> {
    let (kh, kw) = (g.kh, g.kw);
    if g.stride == 1 && g.pad < kh && g.pad < kw && kh == kw && !g.is_pointwise() {
        // Stride-1: full correlation of dy with the flipped, channel-swapped kernel.
        let mut flipped = vec![T::zero(); w.numel()];
        let wd = w.data();
        for co in 0..g.cout {
            for ci in 0..g.cin {
                for ky in 0..kh {
                    for kx in 0..kw {
                        flipped[((ci * g.cout + co) * kh + (kh - 1 - ky)) * kw + (kw - 1 - kx)] =
                            wd[((co * g.cin + ci) * kh + ky) * kw + kx];
                    }
                }
            }
        }
        let pad = kh - 1 - g.pad;
        let back = ConvGeom {
            n: g.n,
            cin: g.cout,
            h: g.ho,
            w: g.wo,
            cout: g.cin,
            kh,
            kw,
            stride: 1,
            pad,
            ho: g.ho + 2 * pad + 1 - kh,
            wo: g.wo + 2 * pad + 1 - kw,
        };
        if back.ho == g.h && back.wo == g.w {
            return conv2d_with_geom(dy, &flipped, None, &back);
        }
    }
    let plane = g.out_plane();
    let k = g.k();
    let mut dx = vec![T::zero(); g.n * g.in_image()];
    let mut cols = vec![T::zero(); k * plane];
    for n in 0..g.n {
        let dyi = &dy[n * g.cout * plane..(n + 1) * g.cout * plane];
        let dxi = &mut dx[n * g.in_image()..(n + 1) * g.in_image()];
        if g.is_pointwise() {
            T::gemm(k, g.cout, plane, T::one(), w.data(), true, dyi, false, T::zero(), dxi);
        } else {
            T::gemm(k, g.cout, plane, T::one(), w.data(), true, dyi, false, T::zero(), &mut cols);
            col2im(&cols, g, dxi);
        }
    }
    Tensor::from_vec(&[g.n, g.cin, g.h, g.w], dx).expect("conv grad input shape")
}

/// Gradient of `conv2d` with respect to its weight.
pub(crate) fn conv2d_grad_weight<T: Element>(x: &[T], dy: &[T], g: &ConvGeom) -> Tensor<T> {
    let plane = g.out_plane();
    let k = g.k();
    let mut dw = vec![T::zero(); g.cout * k];
    if g.stride == 1 && !g.is_pointwise() {
        let layout = PaddedLayout::new(g);
        let tile = layout.tile_rows(g, WGRAD_TILE);
        let mut pad_buf = vec![T::zero(); g.cin * layout.plane];
        let mut cols = vec![T::zero(); k * tile * layout.wp];
        let mut dw_t = vec![T::zero(); k * g.cout];
        // junk columns stay zero so they contribute nothing
        let mut dy_ext = vec![T::zero(); g.cout * tile * layout.wp];
        for n in 0..g.n {
            let xi = &x[n * g.in_image()..(n + 1) * g.in_image()];
            let dyi = &dy[n * g.cout * plane..(n + 1) * g.cout * plane];
            layout.pad_into(xi, g, &mut pad_buf);
            for oy0 in (0..g.ho).step_by(tile) {
                let rows = tile.min(g.ho - oy0);
                let len = rows * layout.wp;
                layout.fill_tile(g, &pad_buf, oy0, rows, &mut cols);
                for co in 0..g.cout {
                    for r in 0..rows {
                        dy_ext[co * len + r * layout.wp..][..g.wo]
                            .copy_from_slice(&dyi[co * plane + (oy0 + r) * g.wo..][..g.wo]);
                        dy_ext[co * len + r * layout.wp + g.wo..co * len + (r + 1) * layout.wp].fill(T::zero());
                    }
                }
                T::gemm(k, len, g.cout, T::one(), &cols[..k * len], false, &dy_ext[..g.cout * len], true, T::one(), &mut dw_t);
            }
        }
        for co in 0..g.cout {
            for r in 0..k {
                dw[co * k + r] = dw_t[r * g.cout + co];
            }
        }
        return Tensor::from_vec(&[g.cout, g.cin, g.kh, g.kw], dw).expect("conv grad weight shape");
    }
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); k * plane]
    };
    for n in 0..g.n {
        let xi = &x[n * g.in_image()..(n + 1) * g.in_image()];
        let dyi = &dy[n * g.cout * plane..(n + 1) * g.cout * plane];
        let src = if g.is_pointwise() {
            xi
        } else {
            im2col(xi, g, &mut cols);
            &cols
        };
        T::gemm(g.cout, plane, k, T::one(), dyi, false, src, true, T::one(), &mut dw);
    }
    Tensor::from_vec(&[g.cout, g.cin, g.kh, g.kw], dw).expect("conv grad weight shape")
}

pub(crate) fn conv2d_grad_bias<T: Element>(dy: &[T], g: &ConvGeom) -> Tensor<T> {
    let plane = g.out_plane();
    let mut db = vec![T::zero(); g.cout];
    for n in 0..g.n {
        for (co, acc) in db.iter_mut().enumerate() {
            let start = (n * g.cout + co) * plane;
            *acc += dy[start..start + plane].iter().copied().sum::<T>();
        }
    }
    Tensor::from_vec(&[g.cout], db).expect("bias grad shape")
}

/// Geometry of the forward convolution whose input-gradient is the transposed
/// convolution of `x` with `weight` (`[Cin_t, Cout_t, kh, kw]`).
pub(crate) fn transpose_geom(x_shape: &[usize], w_shape: &[usize], stride: usize) -> Result<ConvGeom> {
    let op = "conv2d_transpose";
    let [n, cin_t, h, w] = x_shape[..] else {
        return Err(Error::shape(op, "input of rank 4 (N, C, H, W)", x_shape));
    };
    let [wcin, cout_t, kh, kw] = w_shape[..] else {
        return Err(Error::shape(op, "weight of rank 4 (Cin, Cout, kh, kw)", w_shape));
    };
    if stride == 0 {
        return Err(Error::invalid(op, "stride must be positive"));
    }
    if wcin != cin_t {
        return Err(Error::shape(op, format!("weight with {cin_t} input channels"), w_shape));
    }
    let out_h = (h - 1) * stride + kh;
    let out_w = (w - 1) * stride + kw;
    let g = ConvGeom::new(op, &[n, cout_t, out_h, out_w], w_shape, stride, 0)?;
    debug_assert_eq!((g.ho, g.wo), (h, w));
    Ok(g)
}

pub fn conv2d_transpose<T: Element>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
) -> Result<Tensor<T>> {
    let g = transpose_geom(x.shape(), weight.shape(), stride)?;
    check_bias("conv2d_transpose", bias, g.cin)?;
    let mut out = conv2d_grad_input(x.data(), weight, &g);
    if let Some(b) = bias {
        let plane = g.h * g.w;
        for (i, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
            let bv = b.data()[i % g.cin];
            chunk.iter_mut().for_each(|v| *v += bv);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Literal seven-loop cross-correlation.
    fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
        let [n, cin, h, wd] = x.nchw("t").unwrap();
        let [cout, _, kh, kw] = w.nchw("t").unwrap();
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (wd + 2 * pad - kw) / stride + 1;
        let mut out = Tensor::zeros(&[n, cout, ho, wo]);
        for b in 0..n {
            for co in 0..cout {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = 0.0;
                        for ci in 0..cin {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    acc += x.data()[((b * cin + ci) * h + iy as usize) * wd + ix as usize]
                                        * w.data()[((co * cin + ci) * kh + ky) * kw + kx];
                                }
                            }
                        }
                        out.data_mut()[((b * cout + co) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn sum_kernel_example() {
        let x = Tensor::<f32>::from_vec(&[1, 1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
        let w = Tensor::<f32>::full(&[1, 1, 2, 2], 1.0);
        let y = conv2d(&x, &w, None, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[10.0]);
    }

    #[test]
    fn identity_kernel_returns_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f32>::randn(&[2, 1, 5, 4], 1.0, &mut rng);
        let w = Tensor::<f32>::full(&[1, 1, 1, 1], 1.0);
        assert_eq!(conv2d(&x, &w, None, 1, 0).unwrap(), x);
    }

    #[test]
    fn matches_naive_loops_over_geometries() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(h, w, k, stride, pad) in &[
            (6, 6, 3, 1, 1),
            (7, 5, 3, 2, 1),
            (8, 8, 2, 2, 0),
            (9, 9, 3, 3, 0),
            (5, 6, 3, 1, 0),
            (4, 4, 1, 1, 0),
            (6, 7, 3, 2, 2),
        ] {
            let x = Tensor::<f64>::randn(&[2, 3, h, w], 1.0, &mut rng);
            let wt = Tensor::<f64>::randn(&[4, 3, k, k], 1.0, &mut rng);
            let fast = conv2d(&x, &wt, None, stride, pad).unwrap();
            let slow = naive_conv(&x, &wt, stride, pad);
            assert_eq!(fast.shape(), slow.shape());
            assert!(fast.max_abs_diff(&slow).unwrap() < 1e-12, "h={h} w={w} k={k} s={stride} p={pad}");
        }
    }

    #[test]
    fn grad_input_is_adjoint_for_all_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &(h, k, stride, pad) in &[(6, 3, 1, 1), (6, 3, 1, 0), (7, 3, 2, 1), (8, 4, 4, 0), (5, 1, 1, 0)] {
            let x = Tensor::<f64>::randn(&[2, 2, h, h], 1.0, &mut rng);
            let w = Tensor::<f64>::randn(&[3, 2, k, k], 1.0, &mut rng);
            let y = conv2d(&x, &w, None, stride, pad).unwrap();
            let probe = Tensor::<f64>::randn(y.shape(), 1.0, &mut rng);
            let g = ConvGeom::new("t", x.shape(), w.shape(), stride, pad).unwrap();
            let back = conv2d_grad_input(probe.data(), &w, &g);
            let lhs = y.dot(&probe).unwrap();
            let rhs = x.dot(&back).unwrap();
            assert!((lhs - rhs).abs() < 1e-10, "h={h} k={k} s={stride} p={pad}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn transpose_single_tap_broadcasts_kernel() {
        let x = Tensor::<f32>::from_vec(&[1, 1, 1, 1], vec![3.0]).unwrap();
        let k = Tensor::<f32>::from_vec(&[1, 1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
        let y = conv2d_transpose(&x, &k, None, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[3., 6., 9., 12.]);
    }

    #[test]
    fn rejects_mismatched_channels_and_small_inputs() {
        let x = Tensor::<f32>::zeros(&[1, 2, 4, 4]);
        let w = Tensor::<f32>::zeros(&[1, 3, 3, 3]);
        assert!(matches!(conv2d(&x, &w, None, 1, 1), Err(Error::Shape { .. })));
        let w = Tensor::<f32>::zeros(&[1, 2, 5, 5]);
        assert!(conv2d(&x, &w, None, 1, 0).is_err());
        let b = Tensor::<f32>::zeros(&[2]);
        let w = Tensor::<f32>::zeros(&[1, 2, 3, 3]);
        assert!(conv2d(&x, &w, Some(&b), 1, 1).is_err());
    }
}
