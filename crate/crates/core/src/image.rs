//! Binary PGM (P5) and PPM (P6) images with 8-bit samples.
//!
//! Pixels are stored flattened, `width·height × channels`, with the column
//! index varying fastest, which is the grid order used everywhere else.
//! Column `i` sits at coordinate `(i + 0.5)/width - 0.5` on axis 0 and row
//! `r` at `(r + 0.5)/height - 0.5` on axis 1.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Values in `[0, 1]`.
    pub data: Array2<f64>,
    /// Sample maximum of the source file; used again when writing.
    pub maxval: u16,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Array2<f64>) -> Result<Self> {
        if data.nrows() != width * height || !(data.ncols() == 1 || data.ncols() == 3) {
            return Err(Error::Image(format!(
                "{}×{} image needs {} rows of 1 or 3 channels, got {:?}",
                width,
                height,
                width * height,
                data.dim()
            )));
        }
        Ok(Image {
            width,
            height,
            data,
            maxval: 255,
        })
    }

    pub fn channels(&self) -> usize {
        self.data.ncols()
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::decode(&bytes)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let magic = token(bytes, &mut pos)?;
        let channels = match magic.as_str() {
            "P5" => 1,
            "P6" => 3,
            "P2" | "P3" => return Err(Error::Image(format!("ASCII format {magic} is not supported"))),
            other => return Err(Error::Image(format!("unknown magic {other:?}"))),
        };
        let width = number(bytes, &mut pos)?;
        let height = number(bytes, &mut pos)?;
        let maxval = number(bytes, &mut pos)?;
        if !(1..=255).contains(&maxval) {
            return Err(Error::Image(format!("maxval {maxval} unsupported (8-bit only)")));
        }
        if width == 0 || height == 0 {
            return Err(Error::Image("empty image".into()));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let need = width * height * channels;
        let raster = bytes
            .get(pos..pos + need)
            .ok_or_else(|| Error::Image(format!("raster truncated: need {need} bytes")))?;
        let scale = maxval as f64;
        let data = Array2::from_shape_fn((width * height, channels), |(p, c)| raster[p * channels + c] as f64 / scale);
        Ok(Image {
            width,
            height,
            data,
            maxval: maxval as u16,
        })
    }

    /// Samples rounded to the nearest level after clamping to `[0, 1]`.
    pub fn encode(&self) -> Vec<u8> {
        let magic = if self.channels() == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        let m = self.maxval as f64;
        out.extend(self.data.iter().map(|&v| (v.clamp(0.0, 1.0) * m).round() as u8));
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.encode())?;
        Ok(())
    }

    /// Area-weighted box resampling to `width × height` (downsampling).
    pub fn box_resize(&self, width: usize, height: usize) -> Result<Image> {
        if width == 0 || height == 0 || width > self.width || height > self.height {
            return Err(Error::Image(format!(
                "box filter resizes {}×{} down only, asked for {}×{}",
                self.width, self.height, width, height
            )));
        }
        let wx = box_weights(self.width, width);
        let wy = box_weights(self.height, height);
        let c = self.channels();
        let mut data = Array2::zeros((width * height, c));
        for (r, row_w) in wy.iter().enumerate() {
            for (col, col_w) in wx.iter().enumerate() {
                for ch in 0..c {
                    let mut acc = 0.0;
                    for &(sr, a) in row_w {
                        for &(sc, b) in col_w {
                            acc += a * b * self.data[[sr * self.width + sc, ch]];
                        }
                    }
                    data[[r * width + col, ch]] = acc;
                }
            }
        }
        Ok(Image {
            width,
            height,
            data,
            maxval: self.maxval,
        })
    }

    /// Grid resolution `[width, height]`.
    pub fn resolution(&self) -> Vec<usize> {
        vec![self.width, self.height]
    }
}

/// For each output cell, the source cells it overlaps and their normalized
/// overlap weights.
fn box_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let (a, b) = (o as f64 * scale, (o + 1) as f64 * scale);
            let mut w = Vec::new();
            let mut i = a.floor() as usize;
            while (i as f64) < b && i < src {
                let overlap = (b.min(i as f64 + 1.0) - a.max(i as f64)).max(0.0);
                if overlap > 0.0 {
                    w.push((i, overlap / scale));
                }
                i += 1;
            }
            w
        })
        .collect()
}

fn skip_space(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() {
        match bytes[*pos] {
            b'#' => {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            }
            b if b.is_ascii_whitespace() => *pos += 1,
            _ => return,
        }
    }
}

fn token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    skip_space(bytes, pos);
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Image("truncated header".into()));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn number(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    let t = token(bytes, pos)?;
    t.parse().map_err(|_| Error::Image(format!("malformed header field {t:?}")))
}
