use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// How an image maps onto whole sampling blocks. Padding is only ever added
/// on the bottom and right.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockGrid {
    pub height: usize,
    pub width: usize,
    pub block_side: usize,
    pub block_rows: usize,
    pub block_cols: usize,
    pub pad_bottom: usize,
    pub pad_right: usize,
}

impl BlockGrid {
    pub fn new(height: usize, width: usize, block_side: usize) -> Result<Self> {
        if block_side == 0 || height == 0 || width == 0 {
            return Err(Error::invalid("block grid", "extents and block side must be positive"));
        }
        let block_rows = height.div_ceil(block_side);
        let block_cols = width.div_ceil(block_side);
        Ok(BlockGrid {
            height,
            width,
            block_side,
            block_rows,
            block_cols,
            pad_bottom: block_rows * block_side - height,
            pad_right: block_cols * block_side - width,
        })
    }

    pub fn padded_height(&self) -> usize {
        self.height + self.pad_bottom
    }

    pub fn padded_width(&self) -> usize {
        self.width + self.pad_right
    }

    pub fn is_aligned(&self) -> bool {
        self.pad_bottom == 0 && self.pad_right == 0
    }
}

/// Mirror index without repeating the edge sample (`d c b | a b c d | c b a`),
/// folded as often as needed so any pad width is valid.
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}

/// Reflect-pads an NCHW tensor on the bottom/right up to whole blocks.
pub fn pad_to_block<T: Element>(x: &Tensor<T>, block_side: usize) -> Result<(Tensor<T>, BlockGrid)> {
    let [n, c, h, w] = x.nchw("pad_to_block")?;
    let grid = BlockGrid::new(h, w, block_side)?;
    if grid.is_aligned() {
        return Ok((x.clone(), grid));
    }
    let (ph, pw) = (grid.padded_height(), grid.padded_width());
    let src = x.data();
    let mut out = Vec::with_capacity(n * c * ph * pw);
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..ph {
            let row = base + reflect(y, h) * w;
            out.extend_from_slice(&src[row..row + w]);
            out.extend((w..pw).map(|xx| src[row + reflect(xx, w)]));
        }
    }
    Ok((Tensor::from_vec(&[n, c, ph, pw], out)?, grid))
}

/// Undoes [`pad_to_block`].
pub fn crop_from_block<T: Element>(x: &Tensor<T>, grid: &BlockGrid) -> Result<Tensor<T>> {
    let [n, c, ph, pw] = x.nchw("crop_from_block")?;
    if ph != grid.padded_height() || pw != grid.padded_width() {
        return Err(Error::shape(
            "crop_from_block",
            format!("padded extents {}x{}", grid.padded_height(), grid.padded_width()),
            x.shape(),
        ));
    }
    if grid.is_aligned() {
        return Ok(x.clone());
    }
    let (h, w) = (grid.height, grid.width);
    let src = x.data();
    let mut out = Vec::with_capacity(n * c * h * w);
    for plane in 0..n * c {
        for y in 0..h {
            let row = (plane * ph + y) * pw;
            out.extend_from_slice(&src[row..row + w]);
        }
    }
    Tensor::from_vec(&[n, c, h, w], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(h: usize, w: usize) -> Tensor<f32> {
        Tensor::from_vec(&[1, 1, h, w], (0..h * w).map(|v| v as f32).collect()).unwrap()
    }

    #[test]
    fn pads_to_next_multiple() {
        let (p, g) = pad_to_block(&ramp(100, 100), 32).unwrap();
        assert_eq!(p.shape(), &[1, 1, 128, 128]);
        assert_eq!((g.pad_bottom, g.pad_right), (28, 28));
        let (p, _) = pad_to_block(&ramp(96, 100), 32).unwrap();
        assert_eq!(p.shape(), &[1, 1, 96, 128]);
    }

    #[test]
    fn aligned_input_is_untouched() {
        let x = ramp(64, 32);
        let (p, g) = pad_to_block(&x, 32).unwrap();
        assert!(g.is_aligned());
        assert_eq!(p, x);
    }

    #[test]
    fn reflection_skips_the_edge() {
        let x = Tensor::<f32>::from_vec(&[1, 1, 1, 3], vec![1., 2., 3.]).unwrap();
        let (p, _) = pad_to_block(&x, 4).unwrap();
        assert_eq!(&p.data()[..4], &[1., 2., 3., 2.]);
        assert_eq!(&p.data()[4..8], &[1., 2., 3., 2.]);
    }

    #[test]
    fn crop_rejects_inconsistent_grid() {
        let g = BlockGrid::new(10, 10, 4).unwrap();
        assert!(crop_from_block(&ramp(8, 8), &g).is_err());
    }

    proptest! {
        #[test]
        fn pad_crop_round_trip(h in 1usize..97, w in 1usize..97) {
            let x = ramp(h, w);
            let (p, g) = pad_to_block(&x, 32).unwrap();
            prop_assert_eq!(p.dim(2) % 32, 0);
            prop_assert_eq!(p.dim(3) % 32, 0);
            prop_assert_eq!(crop_from_block(&p, &g).unwrap(), x);
        }
    }
}
