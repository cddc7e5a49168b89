//! Raster images with samples normalised to `[0, 1]`, plus binary PPM/PGM I/O.

use std::io::Cursor;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};

use crate::latent::Dims;
use crate::{Error, Result};

/// An image of `width * height` pixels with 1 (gray) or 3 (RGB) channels.
///
/// Samples are stored row-major with channels interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    samples: Vec<f64>,
    bit_depth: u8,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, samples: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image must have non-zero width and height"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("unsupported channel count {channels}")));
        }
        if samples.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "expected {} samples, got {}",
                width * height * channels,
                samples.len()
            )));
        }
        if let Some(bad) = samples.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::invalid(format!("sample {bad} outside [0, 1]")));
        }
        Ok(Image { width, height, channels, samples, bit_depth: 8 })
    }

    /// Builds an image from 8-bit samples, mapping each to `s / 255`.
    pub fn from_u8(width: usize, height: usize, channels: usize, samples: &[u8]) -> Result<Self> {
        let samples = samples.iter().map(|&s| f64::from(s) / 255.0).collect();
        Image::new(width, height, channels, samples)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Image::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn dims(&self) -> Dims {
        Dims { width: self.width, height: self.height, channels: self.channels }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    #[inline]
    pub fn sample(&self, x: usize, y: usize, ch: usize) -> f64 {
        self.samples[(y * self.width + x) * self.channels + ch]
    }

    /// Samples rounded to 8 bits.
    pub fn to_u8(&self) -> Vec<u8> {
        self.samples.iter().map(|&s| (s * 255.0).round().clamp(0.0, 255.0) as u8).collect()
    }

    /// Decodes a binary PPM (P6) or PGM (P5) image with 8-bit samples.
    pub fn from_pnm_bytes(bytes: &[u8]) -> Result<Self> {
        let decoded =
            image::load(Cursor::new(bytes), ImageFormat::Pnm).map_err(|e| Error::ImageFormat(e.to_string()))?;
        let (w, h) = (decoded.width() as usize, decoded.height() as usize);
        match decoded {
            DynamicImage::ImageLuma8(buf) => Image::from_u8(w, h, 1, buf.as_raw()),
            DynamicImage::ImageRgb8(buf) => Image::from_u8(w, h, 3, buf.as_raw()),
            other => {
                Err(Error::ImageFormat(format!("only 8-bit gray or RGB images are supported, got {:?}", other.color())))
            }
        }
    }

    pub fn read_pnm(path: impl AsRef<Path>) -> Result<Self> {
        Image::from_pnm_bytes(&std::fs::read(path)?)
    }

    /// Encodes as binary PPM (3 channels) or PGM (1 channel).
    pub fn to_pnm_bytes(&self) -> Result<Vec<u8>> {
        let (subtype, color) = match self.channels {
            1 => (PnmSubtype::Graymap(SampleEncoding::Binary), ExtendedColorType::L8),
            _ => (PnmSubtype::Pixmap(SampleEncoding::Binary), ExtendedColorType::Rgb8),
        };
        let mut out = Vec::new();
        PnmEncoder::new(&mut out)
            .with_subtype(subtype)
            .write_image(&self.to_u8(), self.width as u32, self.height as u32, color)
            .map_err(|e| Error::ImageFormat(e.to_string()))?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_samples() {
        assert!(Image::new(1, 1, 1, vec![1.5]).is_err());
        assert!(Image::new(1, 1, 1, vec![-0.1]).is_err());
        assert!(Image::new(2, 1, 1, vec![0.5]).is_err());
        assert!(Image::new(0, 1, 1, vec![]).is_err());
        assert!(Image::new(1, 1, 2, vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn pnm_roundtrip_rgb_and_gray() {
        let rgb: Vec<u8> = (0..5 * 3 * 3).map(|i| (i * 7 % 256) as u8).collect();
        let img = Image::from_u8(5, 3, 3, &rgb).unwrap();
        let bytes = img.to_pnm_bytes().unwrap();
        assert!(bytes.starts_with(b"P6"));
        let back = Image::from_pnm_bytes(&bytes).unwrap();
        assert_eq!(back, img);

        let gray: Vec<u8> = (0..12).map(|i| (i * 21) as u8).collect();
        let img = Image::from_u8(4, 3, 1, &gray).unwrap();
        let bytes = img.to_pnm_bytes().unwrap();
        assert!(bytes.starts_with(b"P5"));
        assert_eq!(Image::from_pnm_bytes(&bytes).unwrap().to_u8(), gray);
    }

    #[test]
    fn parses_header_with_comment() {
        let mut bytes = b"P5\n# comment\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255]);
        let img = Image::from_pnm_bytes(&bytes).unwrap();
        assert_eq!(img.samples(), &[0.0, 1.0]);
    }

    #[test]
    fn garbage_is_a_format_error() {
        assert!(matches!(Image::from_pnm_bytes(b"hello"), Err(Error::ImageFormat(_))));
    }
}
