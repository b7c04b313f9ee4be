//! 16-bit PNG depth maps (KITTI convention: meters × 256) and color image I/O.

use std::path::Path;

use image::{ColorType, DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Image};

pub const DEPTH_SCALE: f64 = 256.0;
pub const CONFIDENCE_SCALE: f64 = 65535.0;

fn open(path: &Path) -> Result<DynamicImage> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    })
}

fn save_err(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    }
}

/// Reads a raw 16-bit single-channel PNG.
pub fn load_u16_png(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u16>)> {
    let path = path.as_ref();
    let img = open(path)?;
    match img.color() {
        ColorType::L16 => {}
        other => {
            return Err(Error::format(
                path,
                format!("expected a 16-bit single-channel PNG, found {other:?}"),
            ))
        }
    }
    let buf = img.into_luma16();
    let (w, h) = buf.dimensions();
    Ok((w as usize, h as usize, buf.into_raw()))
}

pub fn save_u16_png(path: impl AsRef<Path>, width: usize, height: usize, raw: Vec<u16>) -> Result<()> {
    let path = path.as_ref();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(width as u32, height as u32, raw)
        .ok_or_else(|| Error::param("raw buffer does not match dimensions"))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| save_err(path, e))
}

/// Loads a depth PNG: `meters = raw / 256`, raw 0 is "no depth".
pub fn load_depth_png(path: impl AsRef<Path>) -> Result<DepthMap> {
    let (w, h, raw) = load_u16_png(path)?;
    DepthMap::new(w, h, raw.iter().map(|r| *r as f64 / DEPTH_SCALE).collect())
}

/// Quantizes a depth map to raw 16-bit values (`round(meters × 256)`).
pub fn depth_to_raw(depth: &DepthMap) -> Result<Vec<u16>> {
    depth
        .data()
        .iter()
        .map(|d| {
            let r = (d * DEPTH_SCALE).round();
            if r > u16::MAX as f64 {
                Err(Error::param(format!("depth {d} m exceeds the 16-bit PNG range")))
            } else {
                Ok(r as u16)
            }
        })
        .collect()
}

pub fn save_depth_png(depth: &DepthMap, path: impl AsRef<Path>) -> Result<()> {
    save_u16_png(path, depth.width(), depth.height(), depth_to_raw(depth)?)
}

/// Writes a `[0, 1]` map as a 16-bit PNG scaled by 65535.
pub fn save_unit_png(values: &[f64], width: usize, height: usize, path: impl AsRef<Path>) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::param("value buffer does not match dimensions"));
    }
    let raw = values
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * CONFIDENCE_SCALE).round() as u16)
        .collect();
    save_u16_png(path, width, height, raw)
}

pub fn load_unit_png(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f64>)> {
    let (w, h, raw) = load_u16_png(path)?;
    Ok((w, h, raw.iter().map(|r| *r as f64 / CONFIDENCE_SCALE).collect()))
}

/// Loads an 8- or 16-bit color (or gray) PNG into `[0, 1]` RGB.
pub fn load_image_png(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let img = open(path)?.into_rgb16();
    let (w, h) = img.dimensions();
    let data = img.into_raw().iter().map(|v| *v as f64 / 65535.0).collect();
    Image::new(w as usize, h as usize, data)
}

/// Saves an image as 16-bit RGB PNG.
pub fn save_image_png(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw: Vec<u16> = img.data().iter().map(|v| (v * 65535.0).round() as u16).collect();
    let buf: ImageBuffer<Rgb<u16>, Vec<u16>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, raw)
            .ok_or_else(|| Error::param("image buffer does not match dimensions"))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| save_err(path, e))
}
