//! 8-bit PNG reading and writing.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use avnet_core::data::{GrayImage, RgbImage};
use png::{BitDepth, ColorType, Transformations};

use crate::error::{AppError, AppResult};

struct Decoded {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

fn image_err(path: &Path, message: impl ToString) -> AppError {
    AppError::Image { path: path.to_path_buf(), message: message.to_string() }
}

fn decode(path: &Path) -> AppResult<Decoded> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(|e| image_err(path, e))?;
    let size = reader.output_buffer_size().ok_or_else(|| image_err(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| image_err(path, e))?;
    let channels = match info.color_type {
        ColorType::Grayscale => 1,
        ColorType::GrayscaleAlpha => 2,
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        other => return Err(image_err(path, format!("unsupported color type {other:?}"))),
    };
    let (width, height) = (info.width as usize, info.height as usize);
    let mut pixels = Vec::with_capacity(width * height * channels);
    for row in buf.chunks(info.line_size).take(height) {
        pixels.extend_from_slice(&row[..width * channels]);
    }
    Ok(Decoded { width, height, channels, pixels })
}

/// Grayscale PNG; colour images are reduced to the mean of R, G and B.
pub fn read_gray(path: &Path) -> AppResult<GrayImage> {
    let d = decode(path)?;
    let pixels = match d.channels {
        1 | 2 => d.pixels.chunks(d.channels).map(|p| p[0]).collect(),
        _ => d
            .pixels
            .chunks(d.channels)
            .map(|p| ((p[0] as u16 + p[1] as u16 + p[2] as u16 + 1) / 3) as u8)
            .collect(),
    };
    Ok(GrayImage::new(d.width, d.height, pixels)?)
}

/// RGB PNG; alpha is dropped and gray is replicated.
pub fn read_rgb(path: &Path) -> AppResult<RgbImage> {
    let d = decode(path)?;
    let pixels = match d.channels {
        1 | 2 => d.pixels.chunks(d.channels).flat_map(|p| [p[0]; 3]).collect(),
        _ => d.pixels.chunks(d.channels).flat_map(|p| [p[0], p[1], p[2]]).collect(),
    };
    Ok(RgbImage::new(d.width, d.height, pixels)?)
}

fn encode(path: &Path, width: usize, height: usize, color: ColorType, pixels: &[u8]) -> AppResult<()> {
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| image_err(path, e))?;
    writer.write_image_data(pixels).map_err(|e| image_err(path, e))?;
    writer.finish().map_err(|e| image_err(path, e))
}

pub fn write_gray(path: &Path, image: &GrayImage) -> AppResult<()> {
    encode(path, image.width, image.height, ColorType::Grayscale, &image.pixels)
}

pub fn write_rgb(path: &Path, image: &RgbImage) -> AppResult<()> {
    encode(path, image.width, image.height, ColorType::Rgb, &image.pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_and_rgb_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let gray = GrayImage::new(3, 2, vec![0, 1, 2, 128, 254, 255]).unwrap();
        let p = dir.path().join("g.png");
        write_gray(&p, &gray).unwrap();
        assert_eq!(read_gray(&p).unwrap(), gray);

        let rgb = RgbImage::new(2, 1, vec![255, 0, 0, 0, 0, 255]).unwrap();
        let p = dir.path().join("c.png");
        write_rgb(&p, &rgb).unwrap();
        assert_eq!(read_rgb(&p).unwrap(), rgb);
        assert_eq!(read_gray(&p).unwrap().pixels, vec![85, 85]);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = read_gray(Path::new("/nonexistent/x.png")).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
