//! Portable anymap images: plain (P2/P3) output, plain or binary input.

use std::path::Path;

use anyhow::{bail, Context, Result};
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageReader};
use reprobe_core::Tensor;

use crate::UsageError;

/// Reads a P2/P3/P5/P6 file as `[1, H, W]` or `[3, H, W]` in `[0, 1]`.
pub fn read_image(path: &Path) -> Result<Tensor> {
    let reader = ImageReader::open(path)
        .map_err(|e| UsageError(format!("cannot open image {}: {e}", path.display())))?
        .with_guessed_format()
        .with_context(|| format!("reading {}", path.display()))?;
    let img = reader
        .decode()
        .map_err(|e| UsageError(format!("cannot decode image {}: {e}", path.display())))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, interleaved): (usize, Vec<f32>) = if img.color().has_color() {
        (3, img.to_rgb32f().into_raw())
    } else {
        (1, img.to_luma32f().into_raw())
    };
    // Interleaved HWC to planar CHW.
    let mut data = vec![0.0; channels * h * w];
    for (i, v) in interleaved.iter().enumerate() {
        let (pixel, c) = (i / channels, i % channels);
        data[c * h * w + pixel] = *v as f64;
    }
    Ok(Tensor::from_vec(&[channels, h, w], data)?)
}

/// `round(clamp(v, 0, 1) * 255)`.
pub fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes a `[1|3, H, W]` tensor as plain PGM or PPM.
pub fn encode_plain(t: &Tensor) -> Result<Vec<u8>> {
    let &[c, h, w] = t.shape() else {
        bail!("image export needs [C, H, W], got {:?}", t.shape());
    };
    let (subtype, color) = match c {
        1 => (PnmSubtype::Graymap(SampleEncoding::Ascii), ExtendedColorType::L8),
        3 => (PnmSubtype::Pixmap(SampleEncoding::Ascii), ExtendedColorType::Rgb8),
        _ => bail!("image export needs 1 or 3 channels, got {c}"),
    };
    let d = t.data();
    let mut pixels = Vec::with_capacity(c * h * w);
    for p in 0..h * w {
        for ch in 0..c {
            pixels.push(to_byte(d[ch * h * w + p]));
        }
    }
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(subtype)
        .write_image(&pixels, w as u32, h as u32, color)?;
    Ok(out)
}

/// Shape-preserving view for export: images as-is, anything else `None`.
pub fn exportable(t: &Tensor) -> bool {
    matches!(t.shape(), [1 | 3, _, _])
}

/// Tiles `[N, C, H, W]` filters side by side with a one-pixel gap, each
/// filter min-max normalised, first channel (or channel mean) shown as gray.
pub fn filter_sheet(filters: &Tensor) -> Result<Tensor> {
    let &[n, c, h, w] = filters.shape() else {
        bail!("filter sheet needs [N, C, H, W], got {:?}", filters.shape());
    };
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let (sh, sw) = (rows * (h + 1) - 1, cols * (w + 1) - 1);
    let mut sheet = vec![0.0; sh * sw];
    let d = filters.data();
    for k in 0..n {
        let mut tile = vec![0.0; h * w];
        for ch in 0..c {
            let base = (k * c + ch) * h * w;
            for p in 0..h * w {
                tile[p] += d[base + p] / c as f64;
            }
        }
        let lo = tile.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = tile.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (r0, c0) = ((k / cols) * (h + 1), (k % cols) * (w + 1));
        for y in 0..h {
            for x in 0..w {
                let v = if hi > lo { (tile[y * w + x] - lo) / (hi - lo) } else { 0.5 };
                sheet[(r0 + y) * sw + c0 + x] = v;
            }
        }
    }
    Ok(Tensor::from_vec(&[1, sh, sw], sheet)?)
}
