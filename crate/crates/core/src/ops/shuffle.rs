//! Sub-pixel rearrangements between depth and space.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// `[N, C*s*s, H, W] -> [N, C, H*s, W*s]`, with channel `c*s*s + i*s + j`
/// landing at spatial offset `(i, j)` inside each `s x s` cell.
pub fn pixel_shuffle<T: Element>(x: &Tensor<T>, s: usize) -> Result<Tensor<T>> {
    let [n, cs2, h, w] = x.nchw("pixel_shuffle")?;
    if s == 0 || cs2 % (s * s) != 0 {
        return Err(Error::shape(
            "pixel_shuffle",
            format!("channel count divisible by {}", s * s),
            x.shape(),
        ));
    }
    let c = cs2 / (s * s);
    let (oh, ow) = (h * s, w * s);
    let src = x.data();
    let mut out = vec![T::zero(); src.len()];
    for b in 0..n {
        for ch in 0..c {
            for i in 0..s {
                for j in 0..s {
                    let plane = ((b * cs2) + ch * s * s + i * s + j) * h * w;
                    for y in 0..h {
                        let dst_row = ((b * c + ch) * oh + y * s + i) * ow;
                        for xx in 0..w {
                            out[dst_row + xx * s + j] = src[plane + y * w + xx];
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[n, c, oh, ow], out)
}

/// Inverse of [`pixel_shuffle`]: `[N, C, H*s, W*s] -> [N, C*s*s, H, W]`.
pub fn space_to_depth<T: Element>(x: &Tensor<T>, s: usize) -> Result<Tensor<T>> {
    let [n, c, sh, sw] = x.nchw("space_to_depth")?;
    if s == 0 || sh % s != 0 || sw % s != 0 {
        return Err(Error::shape(
            "space_to_depth",
            format!("spatial extents divisible by {s}"),
            x.shape(),
        ));
    }
    let (h, w) = (sh / s, sw / s);
    let cs2 = c * s * s;
    let src = x.data();
    let mut out = vec![T::zero(); src.len()];
    for b in 0..n {
        for ch in 0..c {
            for i in 0..s {
                for j in 0..s {
                    let plane = ((b * cs2) + ch * s * s + i * s + j) * h * w;
                    for y in 0..h {
                        let src_row = ((b * c + ch) * sh + y * s + i) * sw;
                        for xx in 0..w {
                            out[plane + y * w + xx] = src[src_row + xx * s + j];
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[n, cs2, h, w], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn definitional_layout() {
        let x = Tensor::<f32>::from_vec(&[1, 4, 1, 1], vec![1., 2., 3., 4.]).unwrap();
        let y = pixel_shuffle(&x, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[1., 2., 3., 4.]);
        assert_eq!(space_to_depth(&y, 2).unwrap(), x);
    }

    #[test]
    fn shape_arithmetic() {
        let x = Tensor::<f32>::zeros(&[2, 16, 3, 3]);
        assert_eq!(pixel_shuffle(&x, 4).unwrap().shape(), &[2, 1, 12, 12]);
    }

    #[test]
    fn rejects_indivisible_inputs() {
        assert!(pixel_shuffle(&Tensor::<f32>::zeros(&[1, 3, 2, 2]), 2).is_err());
        assert!(space_to_depth(&Tensor::<f32>::zeros(&[1, 1, 6, 5]), 2).is_err());
    }

    proptest! {
        #[test]
        fn shuffle_and_unshuffle_are_inverse(
            n in 1usize..3, c in 1usize..3, h in 1usize..4, w in 1usize..4, s in 1usize..4,
            seed in any::<u64>(),
        ) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x = Tensor::<f32>::randn(&[n, c, h * s, w * s], 1.0, &mut rng);
            let d = space_to_depth(&x, s).unwrap();
            prop_assert_eq!(&pixel_shuffle(&d, s).unwrap(), &x);
            prop_assert_eq!(space_to_depth(&pixel_shuffle(&d, s).unwrap(), s).unwrap(), d);
        }
    }
}
