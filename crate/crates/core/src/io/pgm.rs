use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::field::RealGrid;

/// 8-bit binary PGM scaled so the grid maximum maps to 255. Negative values
/// map to 0; an all-zero grid stays black.
pub fn encode_pgm(grid: &RealGrid) -> Vec<u8> {
    let n = grid.side();
    let max = grid.max();
    let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
    out.extend(grid.as_slice().iter().map(|&v| {
        if max > 0.0 {
            (255.0 * (v / max).clamp(0.0, 1.0)).round() as u8
        } else {
            0
        }
    }));
    out
}

pub fn write_pgm(path: impl AsRef<Path>, grid: &RealGrid) -> Result<()> {
    fs::write(path, encode_pgm(grid))?;
    Ok(())
}
