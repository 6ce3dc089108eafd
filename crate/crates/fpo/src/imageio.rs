//! 8-bit RGB PNG and binary PPM.

use std::io::Cursor;
use std::path::Path;

use anyhow::{bail, Context, Result};
use fpo_core::Image;

pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let buf = image::RgbImage::from_raw(img.width, img.height, img.to_rgb8()).context("image buffer size mismatch")?;
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn decode_png(bytes: &[u8]) -> Result<Image> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?.to_rgb8();
    Ok(Image::from_rgb8(img.width(), img.height(), img.as_raw())?)
}

pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.to_rgb8());
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Image> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
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
    if fields[0] != "P6" || fields[3] != "255" {
        bail!("only binary 8-bit PPM (P6, maxval 255) is supported");
    }
    let w: u32 = fields[1].parse()?;
    let h: u32 = fields[2].parse()?;
    let data = &bytes[(pos + 1).min(bytes.len())..];
    if data.len() != (w * h * 3) as usize {
        bail!("PPM body has {} bytes, expected {}", data.len(), w * h * 3);
    }
    Ok(Image::from_rgb8(w, h, data)?)
}

fn is_ppm(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm"))
}

/// Writes PNG, or PPM when the extension is `.ppm`.
pub fn save_image(path: &Path, img: &Image) -> Result<()> {
    let bytes = if is_ppm(path) { encode_ppm(img) } else { encode_png(img)? };
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn load_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if is_ppm(path) {
        decode_ppm(&bytes)
    } else {
        decode_png(&bytes)
    }
}
