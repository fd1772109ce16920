//! Procedural bar target in the style of the USAF 1951 resolution chart.

use crate::field::{GridSpec, IntensityImage, RealGrid};
use crate::error::Result;

/// Binary target of three-bar groups at decreasing widths. Each element is a
/// horizontal triplet next to a vertical triplet; elements flow left to right
/// and wrap, inside a margin of one eighth of the grid.
pub fn usaf_target(grid: &GridSpec) -> Result<IntensityImage> {
    grid.validate()?;
    let n = grid.n_side;
    let unit = (n as f64 / 256.0).max(1.0 / 7.0);
    let widths: Vec<usize> = [7.0, 6.0, 5.0, 4.0, 3.0, 2.5, 2.0, 1.5]
        .iter()
        .map(|w| ((w * unit).round() as usize).max(1))
        .collect();
    let margin = n / 8;
    let gap = (n / 32).max(1);
    let mut img = RealGrid::zeros(n);
    let (mut x, mut y, mut row_h) = (margin, margin, 0);
    for &w in &widths {
        let (ew, eh) = (11 * w, 5 * w);
        if x + ew > n - margin {
            x = margin;
            y += row_h + gap;
            row_h = 0;
        }
        if y + eh > n - margin {
            break;
        }
        for bar in 0..3 {
            // horizontal bars
            for r in y + 2 * bar * w..y + (2 * bar + 1) * w {
                for c in x..x + 5 * w {
                    *img.get_mut(r, c) = 1.0;
                }
            }
            // vertical bars
            for r in y..y + 5 * w {
                for c in x + 6 * w + 2 * bar * w..x + 6 * w + (2 * bar + 1) * w {
                    *img.get_mut(r, c) = 1.0;
                }
            }
        }
        x += ew + gap;
        row_h = row_h.max(eh);
    }
    IntensityImage::new(*grid, img)
}
