//! Float image buffers with PNG and PFM I/O. Values live in [0,1] for
//! color data; depth/mask planes are unbounded.

use crate::error::{Error, Result};
use crate::scalar::Real;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Row-major image, `channels` interleaved floats per pixel, row 0 at top.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<S> {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<S>,
}

impl<S: Real> Image<S> {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![S::zero(); width * height * channels],
        }
    }

    pub fn filled(width: usize, height: usize, value: &[S]) -> Self {
        let channels = value.len();
        let mut data = Vec::with_capacity(width * height * channels);
        for _ in 0..width * height {
            data.extend_from_slice(value);
        }
        Image {
            width,
            height,
            channels,
            data,
        }
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[S] {
        let i = (row * self.width + col) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [S] {
        let i = (row * self.width + col) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn cast<T: Real>(&self) -> Image<T> {
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|v| T::from_f64_(v.to_f64_())).collect(),
        }
    }

    /// 8-bit PNG; values clamped to [0,1]. 1 channel = gray, 3 = RGB.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let to_u8 = |v: &S| (v.to_f64_().clamp(0.0, 1.0) * 255.0).round() as u8;
        let bytes: Vec<u8> = self.data.iter().map(to_u8).collect();
        let color = match self.channels {
            1 => image::ColorType::L8,
            3 => image::ColorType::Rgb8,
            _ => return Err(Error::invalid("png output needs 1 or 3 channels")),
        };
        image::save_buffer(
            path,
            &bytes,
            self.width as u32,
            self.height as u32,
            color,
        )
        .map_err(|e| Error::Io(std::io::Error::other(e)))
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        let rgb = img.to_rgb8();
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        let data = rgb
            .pixels()
            .flat_map(|p| p.0)
            .map(|b| S::from_f64_(b as f64 / 255.0))
            .collect();
        Ok(Image {
            width: w,
            height: h,
            channels: 3,
            data,
        })
    }

    /// PFM (portable float map), little-endian, 1 or 3 channels.
    pub fn write_pfm(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        let tag = match self.channels {
            1 => "Pf",
            3 => "PF",
            _ => return Err(Error::invalid("pfm output needs 1 or 3 channels")),
        };
        write!(w, "{tag}\n{} {}\n-1.0\n", self.width, self.height)?;
        // PFM stores rows bottom-to-top
        for row in (0..self.height).rev() {
            for col in 0..self.width {
                for v in self.pixel(row, col) {
                    w.write_all(&v.to_f32_().to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_pfm(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let perr = |detail: &str| Error::Parse {
            path: path.display().to_string(),
            detail: detail.into(),
        };
        let mut line = String::new();
        r.read_line(&mut line)?;
        let channels = match line.trim() {
            "PF" => 3,
            "Pf" => 1,
            _ => return Err(perr("not a PFM file")),
        };
        line.clear();
        r.read_line(&mut line)?;
        let mut dims = line.split_whitespace();
        let width: usize = dims
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| perr("bad width"))?;
        let height: usize = dims
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| perr("bad height"))?;
        line.clear();
        r.read_line(&mut line)?;
        let scale: f64 = line.trim().parse().map_err(|_| perr("bad scale"))?;
        let little_endian = scale < 0.0;
        let mut buf = vec![0u8; width * height * channels * 4];
        r.read_exact(&mut buf)?;
        let mut img = Image::new(width, height, channels);
        let mut off = 0;
        for row in (0..height).rev() {
            for col in 0..width {
                for c in 0..channels {
                    let b = [buf[off], buf[off + 1], buf[off + 2], buf[off + 3]];
                    off += 4;
                    let v = if little_endian {
                        f32::from_le_bytes(b)
                    } else {
                        f32::from_be_bytes(b)
                    };
                    img.pixel_mut(row, col)[c] = S::from_f32_(v);
                }
            }
        }
        Ok(img)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn png_round_trip_quantized() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.png");
        let mut img: Image<f32> = Image::new(4, 3, 3);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = (i % 17) as f32 / 16.0;
        }
        img.write_png(&path).unwrap();
        let back: Image<f32> = Image::read_png(&path).unwrap();
        assert_eq!((back.width, back.height, back.channels), (4, 3, 3));
        for (a, b) in img.data.iter().zip(&back.data) {
            assert!((a - b).abs() < 1.0 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn pfm_round_trip_exact() {
        let dir = tempdir().unwrap();
        for channels in [1usize, 3] {
            let path = dir.path().join(format!("t{channels}.pfm"));
            let mut img: Image<f32> = Image::new(5, 4, channels);
            for (i, v) in img.data.iter_mut().enumerate() {
                *v = i as f32 * 0.37 - 2.0;
            }
            img.write_pfm(&path).unwrap();
            let back: Image<f32> = Image::read_pfm(&path).unwrap();
            assert_eq!(img, back);
        }
    }

    #[test]
    fn pixel_addressing_row_major() {
        let mut img: Image<f64> = Image::new(3, 2, 2);
        img.pixel_mut(1, 2)[1] = 9.0;
        assert_eq!(img.data[(1 * 3 + 2) * 2 + 1], 9.0);
        assert_eq!(img.pixel(1, 2)[1], 9.0);
    }
}
