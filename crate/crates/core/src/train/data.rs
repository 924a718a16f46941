use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Square grayscale training patches, each `[1,1,P,P]` with values in `[0,1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchDataset {
    patch_size: usize,
    patches: Vec<Tensor<f32>>,
}

impl PatchDataset {
    pub fn new(patch_size: usize, patches: Vec<Tensor<f32>>) -> Result<Self> {
        if patches.is_empty() {
            return Err(Error::invalid("dataset", "no patches"));
        }
        for p in &patches {
            if p.shape() != [1, 1, patch_size, patch_size] {
                return Err(Error::shape("dataset", format!("[1, 1, {patch_size}, {patch_size}]"), p.shape()));
            }
            if p.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::invalid("dataset", "patch values must lie in [0, 1]"));
            }
        }
        Ok(PatchDataset { patch_size, patches })
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn patches(&self) -> &[Tensor<f32>] {
        &self.patches
    }
}

/// Sliding-window crops over every image (row-major window order, images in
/// order). With `limit`, a seeded random subset of that size is kept, in the
/// original order.
pub fn crop_patches(
    images: &[Tensor<f32>],
    patch_size: usize,
    stride: usize,
    limit: Option<usize>,
    seed: u64,
) -> Result<PatchDataset> {
    if patch_size == 0 || stride == 0 {
        return Err(Error::invalid("crop_patches", "patch size and stride must be positive"));
    }
    let mut patches = Vec::new();
    for (i, img) in images.iter().enumerate() {
        let [_, _, h, w] = img.nchw("crop_patches")?;
        if img.dim(0) != 1 || img.dim(1) != 1 {
            return Err(Error::shape("crop_patches", "[1, 1, H, W]", img.shape()));
        }
        if h < patch_size || w < patch_size {
            log::warn!("image {i} ({h}x{w}) is smaller than the {patch_size}px patch; skipped");
            continue;
        }
        let src = img.data();
        for top in (0..=h - patch_size).step_by(stride) {
            for left in (0..=w - patch_size).step_by(stride) {
                let mut data = Vec::with_capacity(patch_size * patch_size);
                for r in top..top + patch_size {
                    data.extend_from_slice(&src[r * w + left..r * w + left + patch_size]);
                }
                patches.push(Tensor::from_vec(&[1, 1, patch_size, patch_size], data)?);
            }
        }
    }
    if let Some(limit) = limit {
        if limit < patches.len() {
            let mut order: Vec<usize> = (0..patches.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut keep = order[..limit].to_vec();
            keep.sort_unstable();
            let mut slots: Vec<Option<Tensor<f32>>> = patches.into_iter().map(Some).collect();
            patches = keep.into_iter().map(|i| slots[i].take().expect("unique index")).collect();
        }
    }
    if patches.is_empty() {
        return Err(Error::invalid("crop_patches", "no image is large enough for a single patch"));
    }
    PatchDataset::new(patch_size, patches)
}

/// The 8 dihedral transforms: `index % 4` quarter turns counter-clockwise
/// applied after a horizontal flip when `index >= 4`. Index 0 is identity.
pub fn augment(patch: &Tensor<f32>, index: usize) -> Result<Tensor<f32>> {
    if index >= 8 {
        return Err(Error::invalid("augment", format!("transform index {index} not in 0..8")));
    }
    let [n, c, h, w] = patch.nchw("augment")?;
    if h != w {
        return Err(Error::shape("augment", "square patch", patch.shape()));
    }
    let s = h;
    let flip = index >= 4;
    let turns = index % 4;
    let src = patch.data();
    let mut out = vec![0.0f32; src.len()];
    for plane in 0..n * c {
        let base = plane * s * s;
        for i in 0..s {
            for j in 0..s {
                // source (i0, j0) that lands at destination (i, j)
                let (mut si, mut sj) = (i, j);
                for _ in 0..turns {
                    // inverse of one counter-clockwise turn
                    (si, sj) = (sj, s - 1 - si);
                }
                if flip {
                    sj = s - 1 - sj;
                }
                out[base + i * s + j] = src[base + si * s + sj];
            }
        }
    }
    Tensor::from_vec(patch.shape(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Tensor<f32> {
        let n = (h * w) as f32;
        Tensor::from_vec(&[1, 1, h, w], (0..h * w).map(|v| v as f32 / n).collect()).unwrap()
    }

    #[test]
    fn window_counts() {
        assert_eq!(crop_patches(&[ramp(96, 96)], 96, 96, None, 0).unwrap().len(), 1);
        assert_eq!(crop_patches(&[ramp(192, 192)], 96, 96, None, 0).unwrap().len(), 4);
        assert_eq!(crop_patches(&[ramp(100, 150)], 50, 25, None, 0).unwrap().len(), 3 * 5);
    }

    #[test]
    fn crops_hold_the_right_pixels() {
        let img = ramp(4, 4);
        let d = crop_patches(std::slice::from_ref(&img), 2, 2, None, 0).unwrap();
        let p = &d.patches()[1];
        assert_eq!(p.data(), &[img.data()[2], img.data()[3], img.data()[6], img.data()[7]]);
    }

    #[test]
    fn limit_is_seeded() {
        let imgs = [ramp(192, 192), ramp(96, 288)];
        let a = crop_patches(&imgs, 48, 48, Some(7), 3).unwrap();
        assert_eq!(a.len(), 7);
        assert_eq!(a, crop_patches(&imgs, 48, 48, Some(7), 3).unwrap());
        assert_ne!(a, crop_patches(&imgs, 48, 48, Some(7), 4).unwrap());
    }

    #[test]
    fn small_images_are_skipped_and_empty_is_an_error() {
        let d = crop_patches(&[ramp(10, 10), ramp(32, 32)], 32, 32, None, 0).unwrap();
        assert_eq!(d.len(), 1);
        assert!(crop_patches(&[ramp(10, 10)], 32, 32, None, 0).is_err());
    }

    #[test]
    fn dihedral_group() {
        let p = ramp(5, 5);
        assert_eq!(augment(&p, 0).unwrap(), p);
        assert_eq!(augment(&augment(&p, 4).unwrap(), 4).unwrap(), p);
        let mut quarter = p.clone();
        for _ in 0..4 {
            quarter = augment(&quarter, 1).unwrap();
        }
        assert_eq!(quarter, p);
        let outs: Vec<_> = (0..8).map(|i| augment(&p, i).unwrap()).collect();
        for i in 0..8 {
            for j in i + 1..8 {
                assert_ne!(outs[i], outs[j], "{i} vs {j}");
            }
        }
        assert!(augment(&p, 8).is_err());
        assert!(augment(&ramp(4, 5), 1).is_err());
    }

    #[test]
    fn quarter_turn_is_counter_clockwise() {
        let p = Tensor::<f32>::from_vec(&[1, 1, 2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        // [[a,b],[c,d]] -> [[b,d],[a,c]]
        assert_eq!(augment(&p, 1).unwrap().data(), &[0.2, 0.4, 0.1, 0.3]);
    }
}
