//! Reading and writing 8-bit grayscale/RGB images as unit-range luma tensors.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};

use crate::error::{Error, Result};
use crate::metrics::luma;
use crate::tensor::Tensor;

fn image_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

/// Loads an image as `[1,1,H,W]` in `[0,1]`; color images are reduced to
/// their BT.601 luma.
pub fn read_luma(path: &Path) -> Result<Tensor<f32>> {
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f32> = match img {
        DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
        DynamicImage::ImageLuma16(g) => g.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect(),
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => {
            img.to_luma32f().into_raw()
        }
        other => other
            .to_rgb32f()
            .into_raw()
            .chunks_exact(3)
            .map(|p| luma(p[0], p[1], p[2]).clamp(0.0, 1.0))
            .collect(),
    };
    Tensor::from_vec(&[1, 1, h, w], data).map_err(|e| image_err(path, e))
}

/// Writes a single-channel tensor (`[H,W]` trailing axes) as 8-bit PGM or
/// PNG, chosen by extension; values are clamped to `[0,1]`.
pub fn write_luma(path: &Path, x: &Tensor<f32>) -> Result<()> {
    if x.rank() < 2 || x.numel() != x.dim(x.rank() - 2) * x.dim(x.rank() - 1) {
        return Err(Error::shape("write_luma", "a single [H, W] plane", x.shape()));
    }
    let (h, w) = (x.dim(x.rank() - 2) as u32, x.dim(x.rank() - 1) as u32);
    let bytes: Vec<u8> = x.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let format = ImageFormat::from_path(path).map_err(|e| image_err(path, e))?;
    let file = File::create(path)?;
    let out = BufWriter::new(file);
    match format {
        ImageFormat::Pnm => PnmEncoder::new(out)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(&bytes, w, h, ExtendedColorType::L8),
        ImageFormat::Png => image::codecs::png::PngEncoder::new(out).write_image(&bytes, w, h, ExtendedColorType::L8),
        other => return Err(image_err(path, format!("unsupported output format {other:?}; use .pgm or .png"))),
    }
    .map_err(|e| image_err(path, e))
}

/// Image files (`.pgm`, `.pnm`, `.ppm`, `.png`) directly inside `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("pgm" | "pnm" | "ppm" | "png")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_round_trip_in_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let x = Tensor::<f32>::from_vec(&[1, 1, 2, 3], [0, 51, 102, 153, 204, 255].map(|v| v as f32 / 255.0).to_vec())
            .unwrap();
        for name in ["a.pgm", "a.png"] {
            let p = dir.path().join(name);
            write_luma(&p, &x).unwrap();
            assert_eq!(read_luma(&p).unwrap(), x, "{name}");
        }
        let pgm = std::fs::read(dir.path().join("a.pgm")).unwrap();
        assert!(pgm.starts_with(b"P5"));
        assert_eq!(list_images(dir.path()).unwrap().len(), 2);
    }

    #[test]
    fn color_png_becomes_luma() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("red.png");
        image::RgbImage::from_pixel(2, 2, image::Rgb([255, 0, 0])).save(&p).unwrap();
        let y = read_luma(&p).unwrap();
        assert!(y.data().iter().all(|v| (v - 0.299).abs() < 1e-6));
    }

    #[test]
    fn errors_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("junk.png");
        std::fs::write(&p, b"not an image").unwrap();
        let err = read_luma(&p).unwrap_err();
        assert!(err.to_string().contains("junk.png"));
        assert!(write_luma(&dir.path().join("x.bmp"), &Tensor::zeros(&[1, 1, 2, 2])).is_err());
    }
}
