//! 8-bit RGB images and binary PPM (P6, maxval 255) I/O.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed ppm: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Row-major, 3 bytes per pixel.
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0; width * height * 3] }
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut img = Self::new(width, height);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<(), RasterError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_ppm())?;
        Ok(())
    }

    pub fn from_ppm(buf: &[u8]) -> Result<Self, RasterError> {
        // header: magic, width, height, maxval separated by whitespace; '#' comments allowed
        let mut fields = Vec::with_capacity(4);
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < buf.len() && (buf[pos].is_ascii_whitespace() || buf[pos] == b'#') {
                if buf[pos] == b'#' {
                    while pos < buf.len() && buf[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(RasterError::Format("truncated header".into()));
            }
            fields.push(String::from_utf8_lossy(&buf[start..pos]).into_owned());
        }
        if fields[0] != "P6" {
            return Err(RasterError::Format(format!("magic {}", fields[0])));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| RasterError::Format(format!("bad number {s}")));
        let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if maxval != 255 {
            return Err(RasterError::Format(format!("maxval {maxval}")));
        }
        pos += 1; // single whitespace byte after maxval
        let need = w * h * 3;
        if buf.len() < pos + need {
            return Err(RasterError::Format("truncated pixel data".into()));
        }
        Ok(Self { width: w, height: h, data: buf[pos..pos + need].to_vec() })
    }

    pub fn read_ppm(path: &Path) -> Result<Self, RasterError> {
        Self::from_ppm(&std::fs::read(path)?)
    }
}

/// Blue → green → yellow → red ramp over `t ∈ [0, 1]`, for heatmaps.
pub fn false_color(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { return [0, 0, 0] };
    const STOPS: [[f64; 3]; 4] = [[40.0, 60.0, 200.0], [40.0, 180.0, 80.0], [240.0, 220.0, 40.0], [210.0, 40.0, 30.0]];
    let s = t * 3.0;
    let i = (s.floor() as usize).min(2);
    let f = s - i as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (STOPS[i][c] * (1.0 - f) + STOPS[i + 1][c] * f).round() as u8;
    }
    out
}
