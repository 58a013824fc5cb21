//! Linear-radiance RGB images and their file formats.
//!
//! * 8-bit PPM / PNG: display encoding, exponent `1/2.2` on save and `2.2` on load.
//! * raw: little-endian `f32`, row-major, RGB interleaved, no header.
//! * PFM: Portable FloatMap, rows stored bottom to top.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const DISPLAY_GAMMA: f64 = 2.2;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image dimensions {width}x{height} do not match {expected_width}x{expected_height}")]
    Dimensions { width: usize, height: usize, expected_width: usize, expected_height: usize },
    #[error("malformed {format} file: {message}")]
    Format { format: &'static str, message: String },
    #[error("unsupported image extension {0:?}")]
    Extension(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Png(#[from] ::image::ImageError),
}

/// `width x height x 3` image of linear radiance, RGB interleaved row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height * 3] }
    }

    pub fn filled(width: usize, height: usize, color: [f64; 3]) -> Self {
        let mut img = Self::new(width, height);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&color);
        }
        img
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if data.len() != width * height * 3 {
            return Err(ImageError::Format {
                format: "image",
                message: format!("expected {} values, got {}", width * height * 3, data.len()),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn pixel(&self, index: usize) -> [f64; 3] {
        let p = &self.data[index * 3..index * 3 + 3];
        [p[0], p[1], p[2]]
    }

    pub fn set_pixel(&mut self, index: usize, rgb: [f64; 3]) {
        self.data[index * 3..index * 3 + 3].copy_from_slice(&rgb);
    }

    pub fn same_shape(&self, other: &Image) -> Result<(), ImageError> {
        if self.width != other.width || self.height != other.height {
            return Err(ImageError::Dimensions {
                width: other.width,
                height: other.height,
                expected_width: self.width,
                expected_height: self.height,
            });
        }
        Ok(())
    }

    /// Copy with negative values replaced by zero.
    pub fn clamped(&self) -> Image {
        Image { width: self.width, height: self.height, data: self.data.iter().map(|v| v.max(0.0)).collect() }
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sub(&self, other: &Image) -> Image {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Image { width: self.width, height: self.height, data }
    }

    /// Values rounded through `f32`, as transported by raw dumps and the
    /// gradient protocol.
    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }

    pub fn from_f32(width: usize, height: usize, data: &[f32]) -> Result<Self, ImageError> {
        Self::from_data(width, height, data.iter().map(|&v| v as f64).collect())
    }

    fn to_display_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0).powf(1.0 / DISPLAY_GAMMA) * 255.0).round() as u8)
            .collect()
    }

    pub fn save_ppm(&self, path: &Path) -> Result<(), ImageError> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.to_display_bytes());
        fs::write(path, out)?;
        Ok(())
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImageError> {
        let buf = ::image::RgbImage::from_raw(self.width as u32, self.height as u32, self.to_display_bytes())
            .ok_or_else(|| ImageError::Format { format: "png", message: "buffer size".into() })?;
        buf.save_with_format(path, ::image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn save_raw(&self, path: &Path) -> Result<(), ImageError> {
        let mut out = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load_raw(path: &Path, width: usize, height: usize) -> Result<Self, ImageError> {
        let bytes = fs::read(path)?;
        if bytes.len() != width * height * 12 {
            return Err(ImageError::Format {
                format: "raw",
                message: format!("expected {} bytes, found {}", width * height * 12, bytes.len()),
            });
        }
        let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
        Self::from_data(width, height, data)
    }

    /// Save by extension: `.png`, `.ppm`, `.raw` or `.pfm`.
    pub fn save(&self, path: &Path) -> Result<(), ImageError> {
        match extension(path).as_str() {
            "png" => self.save_png(path),
            "ppm" => self.save_ppm(path),
            "raw" => self.save_raw(path),
            "pfm" => self.save_pfm(path),
            other => Err(ImageError::Extension(other.to_string())),
        }
    }

    /// Load a PFM, 8-bit PPM or PNG; display-encoded formats are linearized.
    pub fn load(path: &Path) -> Result<Self, ImageError> {
        match extension(path).as_str() {
            "pfm" => Self::load_pfm(path),
            "ppm" => Self::load_ppm(path),
            "png" => {
                let img = ::image::open(path)?.to_rgb8();
                let (w, h) = img.dimensions();
                Ok(Self::from_display_bytes(w as usize, h as usize, img.as_raw()))
            }
            other => Err(ImageError::Extension(other.to_string())),
        }
    }

    fn from_display_bytes(width: usize, height: usize, bytes: &[u8]) -> Self {
        let data = bytes.iter().map(|&b| (b as f64 / 255.0).powf(DISPLAY_GAMMA)).collect();
        Self { width, height, data }
    }

    pub fn load_ppm(path: &Path) -> Result<Self, ImageError> {
        let mut reader = BufReader::new(fs::File::open(path)?);
        let err = |m: &str| ImageError::Format { format: "ppm", message: m.to_string() };
        let header = read_header_tokens(&mut reader, 4)?;
        if header[0] != "P6" {
            return Err(err("only binary P6 is supported"));
        }
        let width: usize = header[1].parse().map_err(|_| err("width"))?;
        let height: usize = header[2].parse().map_err(|_| err("height"))?;
        if header[3] != "255" {
            return Err(err("only 8-bit maxval 255 is supported"));
        }
        let mut bytes = vec![0u8; width * height * 3];
        reader.read_exact(&mut bytes).map_err(|_| err("truncated pixel data"))?;
        Ok(Self::from_display_bytes(width, height, &bytes))
    }

    pub fn save_pfm(&self, path: &Path) -> Result<(), ImageError> {
        let mut out = format!("PF\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        for row in (0..self.height).rev() {
            for v in &self.data[row * self.width * 3..(row + 1) * self.width * 3] {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        let mut f = fs::File::create(path)?;
        f.write_all(&out)?;
        Ok(())
    }

    pub fn load_pfm(path: &Path) -> Result<Self, ImageError> {
        let mut reader = BufReader::new(fs::File::open(path)?);
        let err = |m: &str| ImageError::Format { format: "pfm", message: m.to_string() };
        let header = read_header_tokens(&mut reader, 4)?;
        let channels = match header[0].as_str() {
            "PF" => 3,
            "Pf" => 1,
            _ => return Err(err("bad magic")),
        };
        let width: usize = header[1].parse().map_err(|_| err("width"))?;
        let height: usize = header[2].parse().map_err(|_| err("height"))?;
        let scale: f64 = header[3].parse().map_err(|_| err("scale"))?;
        let little = scale < 0.0;
        let mut bytes = vec![0u8; width * height * channels * 4];
        reader.read_exact(&mut bytes).map_err(|_| err("truncated pixel data"))?;
        let vals: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| {
                let b = [c[0], c[1], c[2], c[3]];
                (if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) }) as f64
            })
            .collect();
        let mut data = vec![0.0; width * height * 3];
        for row in 0..height {
            let src_row = height - 1 - row;
            for col in 0..width {
                for c in 0..3 {
                    let src = (src_row * width + col) * channels + if channels == 3 { c } else { 0 };
                    data[(row * width + col) * 3 + c] = vals[src];
                }
            }
        }
        Self::from_data(width, height, data)
    }
}

fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

/// Read whitespace-separated header tokens (skipping `#` comments), consuming
/// exactly one whitespace byte after the last token.
fn read_header_tokens<R: BufRead>(reader: &mut R, count: usize) -> Result<Vec<String>, ImageError> {
    let mut tokens = Vec::with_capacity(count);
    let mut cur = String::new();
    let mut byte = [0u8; 1];
    let mut in_comment = false;
    while tokens.len() < count {
        if reader.read(&mut byte)? == 0 {
            return Err(ImageError::Format { format: "header", message: "unexpected end of header".into() });
        }
        let ch = byte[0] as char;
        if in_comment {
            in_comment = ch != '\n';
            continue;
        }
        if ch == '#' && cur.is_empty() {
            in_comment = true;
        } else if ch.is_ascii_whitespace() {
            if !cur.is_empty() {
                tokens.push(std::mem::take(&mut cur));
            }
        } else {
            cur.push(ch);
        }
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_and_pfm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = Image::new(3, 2);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = i as f64 * 0.25;
        }
        let raw = dir.path().join("a.raw");
        img.save_raw(&raw).unwrap();
        assert_eq!(Image::load_raw(&raw, 3, 2).unwrap(), img);
        let pfm = dir.path().join("a.pfm");
        img.save_pfm(&pfm).unwrap();
        assert_eq!(Image::load_pfm(&pfm).unwrap(), img);
    }

    #[test]
    fn ppm_linearizes_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ppm");
        Image::filled(2, 2, [1.0, 0.0, 0.5]).save_ppm(&p).unwrap();
        let back = Image::load_ppm(&p).unwrap();
        assert_eq!(back.pixel(3)[0], 1.0);
        assert_eq!(back.pixel(3)[1], 0.0);
        assert!((back.pixel(3)[2] - 0.5).abs() < 0.01);
        let png = dir.path().join("a.png");
        Image::filled(2, 2, [0.5; 3]).save(&png).unwrap();
        assert!((Image::load(&png).unwrap().pixel(0)[0] - 0.5).abs() < 0.01);
    }

    #[test]
    fn clamp_drops_negatives_only() {
        let img = Image::from_data(1, 1, vec![-0.5, 0.2, 3.0]).unwrap();
        assert_eq!(img.clamped().data(), &[0.0, 0.2, 3.0]);
    }
}
