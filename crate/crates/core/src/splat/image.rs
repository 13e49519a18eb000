use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Linear RGB image, row-major, channels in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: u32,
    height: u32,
    pixels: Vec<Vector3<f64>>,
}

impl Image {
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, Vector3::zeros())
    }

    pub fn filled(width: u32, height: u32, color: Vector3<f64>) -> Self {
        Self {
            width,
            height,
            pixels: vec![color; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[Vector3<f64>] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> Vector3<f64> {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, c: Vector3<f64>) {
        self.pixels[(y * self.width + x) as usize] = c;
    }

    /// Binary PPM (P6, maxval 255), each channel `round(clamp(v, 0, 1) · 255)`.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for p in &self.pixels {
            out.extend(p.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
        }
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Self> {
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
                return Err(Error::Format("PPM header ended early".into()));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        if fields[0] != "P6" {
            return Err(Error::Format(format!("expected P6, found {:?}", fields[0])));
        }
        let num = |s: &str| {
            s.parse::<u32>()
                .map_err(|_| Error::Format(format!("bad PPM number {s:?}")))
        };
        let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        if maxval != 255 {
            return Err(Error::Format(format!("unsupported maxval {maxval}")));
        }
        let need = width as usize * height as usize * 3;
        let raster = bytes.get(pos..pos + need).ok_or(Error::Truncated {
            offset: pos,
            needed: need,
            len: bytes.len(),
        })?;
        let pixels = raster
            .chunks_exact(3)
            .map(|c| Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64) / 255.0)
            .collect();
        Ok(Self { width, height, pixels })
    }
}

pub fn write_ppm(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, image.to_ppm())?;
    Ok(())
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<Image> {
    Image::from_ppm(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_pixel_bytes() {
        let img = Image::filled(1, 1, Vector3::repeat(1.0));
        let mut expected = b"P6\n1 1\n255\n".to_vec();
        expected.extend([0xFF, 0xFF, 0xFF]);
        assert_eq!(img.to_ppm(), expected);
    }

    #[test]
    fn black_two_by_two() {
        let bytes = Image::new(2, 2).to_ppm();
        let payload = &bytes[b"P6\n2 2\n255\n".len()..];
        assert_eq!(payload, &[0u8; 12]);
    }

    #[test]
    fn round_trip_within_quantization() {
        let mut img = Image::new(3, 2);
        for (i, v) in [0.0, 0.1, 0.33, 0.5, 0.77, 1.0].iter().enumerate() {
            img.set(i as u32 % 3, i as u32 / 3, Vector3::new(*v, 1.0 - v, v * 0.5));
        }
        let back = Image::from_ppm(&img.to_ppm()).unwrap();
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            assert!((a - b).amax() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn rejects_other_formats() {
        assert!(Image::from_ppm(b"P3\n1 1\n255\n0 0 0").is_err());
        assert!(matches!(
            Image::from_ppm(b"P6\n2 2\n255\n\0\0"),
            Err(Error::Truncated { .. })
        ));
    }
}
