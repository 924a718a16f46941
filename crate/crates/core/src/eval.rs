//! Dataset evaluation: pad to whole blocks, reconstruct, crop, and score the
//! luma channel against the original.

use std::fmt::Write as _;
use std::path::Path;

use crate::cs::{crop_from_block, pad_to_block};
use crate::error::{Error, Result};
use crate::imageio::{list_images, read_luma};
use crate::metrics::{psnr, quantize_8bit, ssim};
use crate::model::Reconstructor;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalOptions {
    /// Round reconstructions to 8-bit levels before scoring.
    pub quantize_8bit: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageScore {
    pub name: String,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub model: String,
    pub ratio: f64,
    pub images: Vec<ImageScore>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

impl EvalReport {
    pub fn new(model: impl Into<String>, ratio: f64, images: Vec<ImageScore>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::invalid("eval", "no images were evaluated"));
        }
        let n = images.len() as f64;
        let mean_psnr = images.iter().map(|s| s.psnr_db).sum::<f64>() / n;
        let mean_ssim = images.iter().map(|s| s.ssim).sum::<f64>() / n;
        Ok(EvalReport {
            model: model.into(),
            ratio,
            images,
            mean_psnr,
            mean_ssim,
        })
    }

    /// One row per image plus a final `mean` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,psnr_db,ssim\n");
        for r in &self.images {
            let _ = writeln!(s, "{},{},{}", r.name, r.psnr_db, r.ssim);
        }
        let _ = writeln!(s, "mean,{},{}", self.mean_psnr, self.mean_ssim);
        s
    }

    pub fn to_table(&self) -> String {
        let width = self.images.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
        let mut s = format!("model {}  ratio {}\n", self.model, self.ratio);
        let _ = writeln!(s, "{:<width$}  {:>9}  {:>7}", "name", "PSNR(dB)", "SSIM");
        let _ = writeln!(s, "{}", "-".repeat(width + 20));
        for r in &self.images {
            let _ = writeln!(s, "{:<width$}  {:>9.3}  {:>7.4}", r.name, r.psnr_db, r.ssim);
        }
        let _ = writeln!(s, "{}", "-".repeat(width + 20));
        let _ = writeln!(s, "{:<width$}  {:>9.3}  {:>7.4}", "mean", self.mean_psnr, self.mean_ssim);
        s
    }
}

/// `(X_init, X_rec)` for an image of any size: reflect-padded to whole blocks
/// on the way in, cropped back on the way out.
pub fn reconstruct_any_size(model: &dyn Reconstructor, x: &Tensor<f32>) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let (padded, grid) = pad_to_block(x, model.block_side())?;
    let (init, rec) = model.reconstruct_image(&padded)?;
    Ok((crop_from_block(&init, &grid)?, crop_from_block(&rec, &grid)?))
}

pub fn score(name: &str, truth: &Tensor<f32>, estimate: &Tensor<f32>, opts: EvalOptions) -> Result<ImageScore> {
    let est = if opts.quantize_8bit { quantize_8bit(estimate) } else { estimate.clone() };
    Ok(ImageScore {
        name: name.to_string(),
        psnr_db: psnr(truth, &est)?,
        ssim: ssim(truth, &est)?,
    })
}

/// Scores every readable image in `dir`; unreadable files are skipped with a
/// warning.
pub fn evaluate_dataset(
    model: &dyn Reconstructor,
    model_name: &str,
    ratio: f64,
    dir: &Path,
    opts: EvalOptions,
) -> Result<EvalReport> {
    let mut rows = Vec::new();
    for path in list_images(dir)? {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let x = match read_luma(&path) {
            Ok(x) => x,
            Err(e) => {
                log::warn!("skipping {name}: {e}");
                continue;
            }
        };
        let (_, rec) = reconstruct_any_size(model, &x)?;
        rows.push(score(&name, &x, &rec, opts)?);
    }
    if rows.is_empty() {
        return Err(Error::invalid("eval", format!("no readable images in {}", dir.display())));
    }
    EvalReport::new(model_name, ratio, rows)
}
