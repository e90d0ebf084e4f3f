//! Linear RGB float images with PFM and PNG output.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rgb::Rgb;

/// Row-major image of linear radiance; row 0 is the top of the frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageF {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl ImageF {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, Rgb::ZERO)
    }

    pub fn filled(width: usize, height: usize, value: Rgb) -> Self {
        ImageF {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Domain(format!(
                "{} pixels do not fill a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(ImageF {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        ImageF {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: Rgb) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [Rgb] {
        &mut self.pixels
    }

    pub fn map(&self, f: impl Fn(Rgb) -> Rgb) -> ImageF {
        ImageF {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&p| f(p)).collect(),
        }
    }

    /// `self + k * other`, pixel by pixel.
    pub fn add_scaled(&self, other: &ImageF, k: f64) -> Result<ImageF> {
        self.check_same_size(other)?;
        Ok(ImageF {
            width: self.width,
            height: self.height,
            pixels: self
                .pixels
                .iter()
                .zip(&other.pixels)
                .map(|(&a, &b)| a + b * k)
                .collect(),
        })
    }

    pub fn check_same_size(&self, other: &ImageF) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Domain(format!(
                "image sizes differ: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// Per-pixel `(r + g + b) / 3`.
    pub fn luminance(&self) -> Vec<f64> {
        self.pixels.iter().map(|p| p.mean()).collect()
    }

    /// Rounds every component to single precision, so that a PFM round
    /// trip reproduces the image exactly.
    pub fn quantize_f32(&mut self) {
        for p in &mut self.pixels {
            *p = p.map(|v| v as f32 as f64);
        }
    }

    pub fn is_valid(&self) -> bool {
        self.pixels.iter().all(|p| p.is_finite() && p.min_component() >= 0.0)
    }

    /// Writes a little-endian colour PFM (rows stored bottom to top).
    pub fn write_pfm(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.encode_pfm(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn encode_pfm(&self, w: &mut impl Write) -> std::io::Result<()> {
        write!(w, "PF\n{} {}\n-1.0\n", self.width, self.height)?;
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                for v in self.get(x, y).to_array() {
                    w.write_all(&(v as f32).to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_pfm(path: &Path) -> Result<ImageF> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::decode_pfm(BufReader::new(file), &path.display().to_string())
    }

    pub fn decode_pfm(mut r: impl BufRead, origin: &str) -> Result<ImageF> {
        let mut header = Vec::new();
        let mut line = String::new();
        while header.len() < 3 {
            line.clear();
            let n = r
                .read_line(&mut line)
                .map_err(|e| Error::parse(origin, e.to_string()))?;
            if n == 0 {
                return Err(Error::parse(origin, "truncated PFM header"));
            }
            header.extend(line.split_whitespace().map(str::to_owned));
        }
        if header[0] != "PF" {
            return Err(Error::parse(origin, "only colour PFM (PF) is supported"));
        }
        let parse_dim = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::parse(origin, format!("bad dimension {s:?}")))
        };
        let (width, height) = (parse_dim(&header[1])?, parse_dim(&header[2])?);
        let mut scale_line = String::new();
        let scale: f64 = if header.len() > 3 {
            header[3].clone()
        } else {
            r.read_line(&mut scale_line)
                .map_err(|e| Error::parse(origin, e.to_string()))?;
            scale_line.trim().to_owned()
        }
        .parse()
        .map_err(|_| Error::parse(origin, "bad scale"))?;
        let little = scale < 0.0;
        let mut buf = vec![0u8; width * height * 12];
        r.read_exact(&mut buf)
            .map_err(|_| Error::parse(origin, "truncated PFM data"))?;
        let mut img = ImageF::new(width, height);
        let mut k = 0;
        for y in (0..height).rev() {
            for x in 0..width {
                let mut c = [0f64; 3];
                for v in c.iter_mut() {
                    let b = [buf[k], buf[k + 1], buf[k + 2], buf[k + 3]];
                    *v = if little {
                        f32::from_le_bytes(b)
                    } else {
                        f32::from_be_bytes(b)
                    } as f64;
                    k += 4;
                }
                img.set(x, y, Rgb::new(c[0], c[1], c[2]));
            }
        }
        Ok(img)
    }

    /// Writes an 8-bit PNG with gamma 2.2 encoding; values are clipped to [0, 1].
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let to_io = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
        let mut writer = enc.write_header().map_err(to_io)?;
        let data: Vec<u8> = self
            .pixels
            .iter()
            .flat_map(|p| p.to_array())
            .map(|v| (v.clamp(0.0, 1.0).powf(1.0 / 2.2) * 255.0).round() as u8)
            .collect();
        writer.write_image_data(&data).map_err(to_io)?;
        writer.finish().map_err(to_io)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ImageF {
        ImageF::from_fn(5, 3, |x, y| Rgb::new(x as f64 * 0.1, y as f64 * 0.25, 0.5))
    }

    #[test]
    fn pfm_round_trip() {
        let img = sample();
        let mut bytes = Vec::new();
        img.encode_pfm(&mut bytes).unwrap();
        let back = ImageF::decode_pfm(&bytes[..], "mem").unwrap();
        let mut q = img.clone();
        q.quantize_f32();
        assert_eq!(back, q);
    }

    #[test]
    fn pfm_rejects_garbage() {
        assert!(ImageF::decode_pfm(&b"P6\n1 1\n255\n"[..], "mem").is_err());
        assert!(ImageF::decode_pfm(&b"PF\n2 2\n-1.0\n\0\0"[..], "mem").is_err());
    }

    #[test]
    fn png_written() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        sample().write_png(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[1..4], b"PNG");
    }

    #[test]
    fn add_scaled_and_size_check() {
        let a = sample();
        let b = a.add_scaled(&a, 2.0).unwrap();
        assert!((b.get(2, 1).r - 0.6).abs() < 1e-12);
        assert!(a.add_scaled(&ImageF::new(1, 1), 1.0).is_err());
    }
}
