//! Grayscale Portable Float Map (`Pf`), little-endian only.
//!
//! Rows are stored bottom to top, as in the reference format. Complex grids
//! are stored as a pair of files `<stem>.re.pfm` and `<stem>.im.pfm`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::field::{ComplexGrid, Grid, RealGrid};

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

/// Serializes a grid. Values are narrowed to `f32`; non-finite values are
/// rejected.
pub fn encode_pfm(grid: &RealGrid) -> Result<Vec<u8>> {
    let n = grid.side();
    if let Some(i) = grid.as_slice().iter().position(|v| !(*v as f32).is_finite()) {
        return Err(Error::param(format!(
            "sample {i} is not representable as a finite f32"
        )));
    }
    let mut out = format!("Pf\n{n} {n}\n-1.0\n").into_bytes();
    out.reserve(4 * n * n);
    for r in (0..n).rev() {
        for c in 0..n {
            out.extend_from_slice(&(*grid.get(r, c) as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn token(&mut self, what: &str) -> Result<(usize, &'a str)> {
        while self.pos < self.buf.len() && self.buf[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.buf.len() && !self.buf[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format_err(start, format!("missing {what}")));
        }
        let text = std::str::from_utf8(&self.buf[start..self.pos])
            .map_err(|_| format_err(start, format!("{what} is not ASCII")))?;
        Ok((start, text))
    }

    /// The single whitespace byte that ends a header field.
    fn separator(&mut self) -> Result<()> {
        match self.buf.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(format_err(self.pos, "header is not terminated by whitespace")),
        }
    }
}

/// Parses a grayscale little-endian PFM holding a square grid of finite
/// values.
pub fn decode_pfm(buf: &[u8]) -> Result<RealGrid> {
    let mut cur = Cursor { buf, pos: 0 };
    let (at, magic) = cur.token("magic number")?;
    match magic {
        "Pf" => {}
        "PF" => return Err(format_err(at, "three-channel PFM is not supported")),
        other => return Err(format_err(at, format!("bad magic number {other:?}"))),
    }
    let mut dim = |what: &str| -> Result<usize> {
        let (at, text) = cur.token(what)?;
        match text.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(format_err(at, format!("invalid {what} {text:?}"))),
        }
    };
    let width = dim("width")?;
    let height = dim("height")?;
    let (at, scale_text) = cur.token("scale")?;
    let scale: f64 = scale_text
        .parse()
        .map_err(|_| format_err(at, format!("invalid scale {scale_text:?}")))?;
    if !(scale.is_finite() && scale != 0.0) {
        return Err(format_err(at, format!("invalid scale {scale_text:?}")));
    }
    if scale > 0.0 {
        return Err(format_err(at, "big-endian PFM (positive scale) is not supported"));
    }
    cur.separator()?;
    if width != height {
        return Err(format_err(at, format!("grid is {width}×{height}, expected square")));
    }
    let n = width;
    let data_start = cur.pos;
    let expected = n
        .checked_mul(n)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| format_err(0, "dimensions overflow"))?;
    let payload = &buf[data_start..];
    if payload.len() != expected {
        return Err(format_err(
            data_start + payload.len().min(expected),
            format!("payload holds {} bytes, expected {expected}", payload.len()),
        ));
    }
    let mut values = vec![0.0f64; n * n];
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(format_err(data_start + 4 * k, format!("non-finite sample {v}")));
        }
        let (row_from_bottom, c) = (k / n, k % n);
        values[(n - 1 - row_from_bottom) * n + c] = v as f64;
    }
    Grid::from_vec(n, values)
}

pub fn write_pfm(path: impl AsRef<Path>, grid: &RealGrid) -> Result<()> {
    fs::write(path, encode_pfm(grid)?)?;
    Ok(())
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<RealGrid> {
    decode_pfm(&fs::read(path)?)
}

fn part_paths(stem: &Path) -> (PathBuf, PathBuf) {
    let s = stem.as_os_str().to_string_lossy();
    (PathBuf::from(format!("{s}.re.pfm")), PathBuf::from(format!("{s}.im.pfm")))
}

/// Writes `<stem>.re.pfm` and `<stem>.im.pfm`.
pub fn write_complex_pfm(stem: impl AsRef<Path>, grid: &ComplexGrid) -> Result<()> {
    let (re, im) = part_paths(stem.as_ref());
    write_pfm(re, &grid.re())?;
    write_pfm(im, &grid.im())
}

pub fn read_complex_pfm(stem: impl AsRef<Path>) -> Result<ComplexGrid> {
    let (re, im) = part_paths(stem.as_ref());
    ComplexGrid::from_parts(&read_pfm(re)?, &read_pfm(im)?)
}
