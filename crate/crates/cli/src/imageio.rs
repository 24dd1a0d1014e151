//! 8-bit RGB image files: binary PPM (P6) handled directly, PNG via `image`.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use image::ImageEncoder;
use moire_core::imagecore::ImageRgb;

fn is_ppm(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("ppm"))
}

pub fn read_image(path: &Path) -> Result<ImageRgb> {
    let bytes = fs::read(path).with_context(|| format!("cannot read image {}", path.display()))?;
    let img = if is_ppm(path) {
        decode_ppm(&bytes)
    } else {
        image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
            .map_err(anyhow::Error::from)
            .and_then(|d| {
                let rgb = d.to_rgb8();
                Ok(ImageRgb::from_u8(rgb.height() as usize, rgb.width() as usize, rgb.as_raw())?)
            })
    };
    img.with_context(|| format!("cannot decode image {}", path.display()))
}

pub fn write_image(path: &Path, img: &ImageRgb) -> Result<()> {
    let (h, w) = img.dims();
    let bytes = img.to_u8();
    let encoded = if is_ppm(path) {
        let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
        out.extend_from_slice(&bytes);
        out
    } else {
        let mut out = Vec::new();
        image::codecs::png::PngEncoder::new(&mut out)
            .write_image(&bytes, w as u32, h as u32, image::ExtendedColorType::Rgb8)
            .context("PNG encoding failed")?;
        out
    };
    fs::write(path, encoded).with_context(|| format!("cannot write image {}", path.display()))
}

/// Parses a binary P6 file with maxval 255. Comments are allowed in the
/// header.
pub fn decode_ppm(bytes: &[u8]) -> Result<ImageRgb> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            bail!("truncated PPM header");
        }
        fields.push(std::str::from_utf8(&bytes[start..pos])?.to_string());
    }
    if fields[0] != "P6" {
        bail!("not a binary PPM (magic {:?})", fields[0]);
    }
    let num = |s: &str, what: &str| s.parse::<usize>().map_err(|_| anyhow!("bad PPM {what} {s:?}"));
    let (w, h, max) = (num(&fields[1], "width")?, num(&fields[2], "height")?, num(&fields[3], "maxval")?);
    if max != 255 {
        bail!("only 8-bit PPM is supported (maxval {max})");
    }
    // exactly one whitespace byte separates the header from the samples
    let data = bytes.get(pos + 1..).unwrap_or_default();
    if data.len() < w * h * 3 {
        bail!("PPM pixel data truncated: {} of {} bytes", data.len(), w * h * 3);
    }
    Ok(ImageRgb::from_u8(h, w, &data[..w * h * 3])?)
}
