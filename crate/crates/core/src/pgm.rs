//! Portable graymap (P2 plain / P5 raw) reading and writing.
//!
//! Header grammar: magic, whitespace, width, whitespace, height, whitespace,
//! maxval, a single whitespace byte, raster. `#` comments are allowed in the
//! header and run to end of line. P5 samples are one byte when maxval < 256
//! and two big-endian bytes otherwise.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::optics::{ObjectMask, OpticalConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmFormat {
    Plain,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graymap {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    /// Row-major samples, each `<= maxval`.
    pub data: Vec<u16>,
}

impl Graymap {
    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut cur = Cursor { bytes, pos: 0 };
        let format = match cur.take(2) {
            Some(b"P2") => PgmFormat::Plain,
            Some(b"P5") => PgmFormat::Raw,
            _ => return Err("bad magic number (expected P2 or P5)".into()),
        };
        let width = cur.header_int("width")?;
        let height = cur.header_int("height")?;
        let maxval = cur.header_int("maxval")?;
        if width == 0 || height == 0 {
            return Err(format!("empty image {width}x{height}"));
        }
        if maxval == 0 || maxval > 65535 {
            return Err(format!("maxval {maxval} outside 1..=65535"));
        }
        let maxval = maxval as u16;
        let count = width
            .checked_mul(height)
            .ok_or_else(|| "image dimensions overflow".to_string())?;
        let data = match format {
            PgmFormat::Plain => {
                let mut data = Vec::with_capacity(count);
                for _ in 0..count {
                    let v = cur.plain_int()?;
                    if v > maxval as usize {
                        return Err(format!("sample {v} exceeds maxval {maxval}"));
                    }
                    data.push(v as u16);
                }
                data
            }
            PgmFormat::Raw => {
                // exactly one whitespace byte separates maxval from the raster
                match cur.next() {
                    Some(b) if b.is_ascii_whitespace() => {}
                    _ => return Err("missing whitespace after maxval".into()),
                }
                let wide = maxval > 255;
                let need = if wide { 2 * count } else { count };
                let raster = cur
                    .take(need)
                    .ok_or_else(|| format!("truncated raster: need {need} bytes"))?;
                let data: Vec<u16> = if wide {
                    raster
                        .chunks_exact(2)
                        .map(|c| u16::from_be_bytes([c[0], c[1]]))
                        .collect()
                } else {
                    raster.iter().map(|&b| b as u16).collect()
                };
                if let Some(v) = data.iter().find(|&&v| v > maxval) {
                    return Err(format!("sample {v} exceeds maxval {maxval}"));
                }
                data
            }
        };
        Ok(Graymap {
            width,
            height,
            maxval,
            data,
        })
    }

    pub fn encode(&self, format: PgmFormat) -> Vec<u8> {
        let magic = match format {
            PgmFormat::Plain => "P2",
            PgmFormat::Raw => "P5",
        };
        let mut out = format!("{magic}\n{} {}\n{}\n", self.width, self.height, self.maxval)
            .into_bytes();
        match format {
            PgmFormat::Raw => {
                if self.maxval > 255 {
                    for v in &self.data {
                        out.extend_from_slice(&v.to_be_bytes());
                    }
                } else {
                    out.extend(self.data.iter().map(|&v| v as u8));
                }
            }
            PgmFormat::Plain => {
                // one image row per line keeps the file diff-able
                for row in self.data.chunks(self.width) {
                    let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                    out.extend_from_slice(line.join(" ").as_bytes());
                    out.push(b'\n');
                }
            }
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::decode(&bytes).map_err(|reason| Error::Graymap {
            path: path.to_path_buf(),
            reason,
        })
    }

    /// Quantizes values in [0, 1] to `maxval` levels. Out-of-range values are clamped.
    pub fn from_unit_values(values: &Array2<f64>, maxval: u16) -> Self {
        let m = maxval as f64;
        Graymap {
            width: values.ncols(),
            height: values.nrows(),
            maxval,
            data: values
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * m).round() as u16)
                .collect(),
        }
    }

    pub fn to_unit_values(&self) -> Array2<f64> {
        let m = self.maxval as f64;
        Array2::from_shape_fn((self.height, self.width), |(r, c)| {
            self.data[r * self.width + c] as f64 / m
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn next(&mut self) -> Option<u8> {
        let b = self.bytes.get(self.pos).copied();
        self.pos += 1;
        b
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn skip_space_and_comments(&mut self) {
        while let Some(b) = self.peek() {
            if b == b'#' {
                while let Some(c) = self.next() {
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn digits(&mut self, what: &str) -> std::result::Result<usize, String> {
        let start = self.pos;
        while matches!(self.peek(), Some(b) if b.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format!("expected {what}"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| format!("{what} out of range"))
    }

    fn header_int(&mut self, what: &str) -> std::result::Result<usize, String> {
        match self.peek() {
            Some(b) if b.is_ascii_whitespace() || b == b'#' => {}
            _ => return Err(format!("expected whitespace before {what}")),
        }
        self.skip_space_and_comments();
        self.digits(what)
    }

    fn plain_int(&mut self) -> std::result::Result<usize, String> {
        self.skip_space_and_comments();
        if self.peek().is_none() {
            return Err("truncated raster".into());
        }
        self.digits("sample")
    }
}

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_file_name(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out")
    ));
    fs::write(&tmp, bytes).map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming to {}", path.display()), e))
}

pub fn load_mask_pgm(path: &Path, config: &OpticalConfig) -> Result<ObjectMask> {
    let g = Graymap::read(path)?;
    let fail = |reason: String| Error::Graymap {
        path: path.to_path_buf(),
        reason,
    };
    if g.width != g.height {
        return Err(fail(format!("image must be square, got {}x{}", g.width, g.height)));
    }
    if g.width != config.grid_n {
        return Err(fail(format!(
            "image is {0}x{0} but the grid is {1}x{1}",
            g.width, config.grid_n
        )));
    }
    if g.data.iter().all(|&v| v == 0) {
        return Err(fail("image is entirely zero".into()));
    }
    ObjectMask::new(g.to_unit_values(), config.pixel_pitch)
}

pub fn save_mask_pgm(mask: &ObjectMask, path: &Path, maxval: u16, format: PgmFormat) -> Result<()> {
    let g = Graymap::from_unit_values(mask.values(), maxval);
    write_atomic(path, &g.encode(format))
}

/// Writes an arbitrary real image after min-max normalization to [0, 1].
pub fn save_normalized_pgm(values: &Array2<f64>, path: &Path) -> Result<()> {
    let g = Graymap::from_unit_values(&crate::metrics::min_max_normalize(values), u16::MAX);
    write_atomic(path, &g.encode(PgmFormat::Raw))
}
