//! Physically sampled fields and the non-differentiable numeric kernels
//! (centered FFT, padding, cropping, resampling) the optical blocks build on.
//!
//! Conventions used throughout the crate:
//! - grids are square with an even side `n ≥ 8`;
//! - sample `(row, col)` sits at `x = (col − n/2)·pitch`, `y = (row − n/2)·pitch`;
//! - all lengths are micrometers.

use std::f64::consts::PI;
use std::ops::{Add, Mul};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;

/// Square row-major grid of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    side: usize,
    data: Vec<T>,
}

pub type ComplexGrid = Grid<Complex64>;
pub type RealGrid = Grid<f64>;

impl<T: Copy + Default> Grid<T> {
    pub fn zeros(side: usize) -> Self {
        Grid {
            side,
            data: vec![T::default(); side * side],
        }
    }

    pub fn from_fn(side: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(side * side);
        for r in 0..side {
            for c in 0..side {
                data.push(f(r, c));
            }
        }
        Grid { side, data }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(side: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != side * side {
            return Err(Error::dim(format!(
                "buffer of length {} cannot form a {side}×{side} grid",
                data.len()
            )));
        }
        Ok(Grid { side, data })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.side + col]
    }

    pub fn get_mut(&mut self, row: usize, col: usize) -> &mut T {
        &mut self.data[row * self.side + col]
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            side: self.side,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn center(&self) -> usize {
        self.side / 2
    }
}

impl ComplexGrid {
    /// Σ|g|² (no pitch factor).
    pub fn sum_abs2(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn re(&self) -> RealGrid {
        self.map(|v| v.re)
    }

    pub fn im(&self) -> RealGrid {
        self.map(|v| v.im)
    }

    pub fn from_parts(re: &RealGrid, im: &RealGrid) -> Result<Self> {
        if re.side != im.side {
            return Err(Error::dim("real and imaginary parts differ in size"));
        }
        Ok(Grid {
            side: re.side,
            data: re
                .data
                .iter()
                .zip(&im.data)
                .map(|(&a, &b)| Complex64::new(a, b))
                .collect(),
        })
    }
}

impl RealGrid {
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn to_complex(&self) -> ComplexGrid {
        self.map(|&v| Complex64::new(v, 0.0))
    }
}

/// Sampling geometry shared by every plane of a simulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_side: usize,
    pub pitch_um: f64,
    pub wavelength_um: f64,
}

impl GridSpec {
    pub fn new(n_side: usize, pitch_um: f64, wavelength_um: f64) -> Result<Self> {
        let spec = GridSpec {
            n_side,
            pitch_um,
            wavelength_um,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        check_side(self.n_side)?;
        if !(self.pitch_um.is_finite() && self.pitch_um > 0.0) {
            return Err(Error::param(format!(
                "pitch must be positive and finite, got {}",
                self.pitch_um
            )));
        }
        if !(self.wavelength_um.is_finite() && self.wavelength_um > 0.0) {
            return Err(Error::param(format!(
                "wavelength must be positive and finite, got {}",
                self.wavelength_um
            )));
        }
        Ok(())
    }

    /// Wave number 2π/λ in rad/µm.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength_um
    }

    pub fn with_pitch(&self, pitch_um: f64) -> Self {
        GridSpec { pitch_um, ..*self }
    }

    pub fn with_side(&self, n_side: usize) -> Self {
        GridSpec { n_side, ..*self }
    }

    /// Physical coordinate of sample index `i` along either axis.
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - (self.n_side / 2) as f64) * self.pitch_um
    }

    pub fn extent_um(&self) -> f64 {
        self.n_side as f64 * self.pitch_um
    }
}

fn check_side(n: usize) -> Result<()> {
    if n < 8 || n % 2 != 0 {
        return Err(Error::dim(format!(
            "grid side must be even and at least 8, got {n}"
        )));
    }
    Ok(())
}

fn check_even(n: usize) -> Result<()> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::dim(format!("grid side must be even, got {n}")));
    }
    Ok(())
}

/// Complex wavefront sampled on a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct SampledField {
    pub grid: GridSpec,
    pub values: ComplexGrid,
}

impl SampledField {
    pub fn new(grid: GridSpec, values: ComplexGrid) -> Result<Self> {
        grid.validate()?;
        if values.side() != grid.n_side {
            return Err(Error::dim(format!(
                "field of side {} does not match grid side {}",
                values.side(),
                grid.n_side
            )));
        }
        Ok(SampledField { grid, values })
    }

    /// Σ|u|²·pitch².
    pub fn total_power(&self) -> f64 {
        self.values.sum_abs2() * self.grid.pitch_um * self.grid.pitch_um
    }

    pub fn irradiance(&self) -> IntensityImage {
        IntensityImage {
            grid: self.grid,
            values: self.values.map(|v| v.norm_sqr()),
        }
    }
}

/// Non-negative irradiance samples.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityImage {
    pub grid: GridSpec,
    pub values: RealGrid,
}

impl IntensityImage {
    pub fn new(grid: GridSpec, values: RealGrid) -> Result<Self> {
        grid.validate()?;
        if values.side() != grid.n_side {
            return Err(Error::dim(format!(
                "image of side {} does not match grid side {}",
                values.side(),
                grid.n_side
            )));
        }
        if let Some(v) = values.as_slice().iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::param(format!(
                "irradiance must be non-negative, found {v}"
            )));
        }
        Ok(IntensityImage { grid, values })
    }
}

/// Centered forward 2D DFT; zero frequency lands on sample `(n/2, n/2)`.
pub fn fft2_centered(f: &ComplexGrid) -> Result<ComplexGrid> {
    check_side(f.side)?;
    let mut out = f.clone();
    fft::fft2_centered_inplace(&mut out.data, f.side);
    Ok(out)
}

/// Inverse of [`fft2_centered`] (carries the `1/n²` factor).
pub fn ifft2_centered(f: &ComplexGrid) -> Result<ComplexGrid> {
    check_side(f.side)?;
    let mut out = f.clone();
    fft::ifft2_centered_inplace(&mut out.data, f.side);
    Ok(out)
}

/// Embeds `f` centered in a zero grid of side `new_side`.
pub fn pad_center<T: Copy + Default>(f: &Grid<T>, new_side: usize) -> Result<Grid<T>> {
    check_even(f.side)?;
    check_even(new_side)?;
    if new_side < f.side {
        return Err(Error::dim(format!(
            "cannot pad side {} down to {new_side}",
            f.side
        )));
    }
    let off = (new_side - f.side) / 2;
    let mut out = Grid::zeros(new_side);
    for r in 0..f.side {
        let dst = (r + off) * new_side + off;
        out.data[dst..dst + f.side].copy_from_slice(&f.data[r * f.side..(r + 1) * f.side]);
    }
    Ok(out)
}

/// Extracts the central `new_side × new_side` window of `f`.
pub fn crop_center<T: Copy + Default>(f: &Grid<T>, new_side: usize) -> Result<Grid<T>> {
    check_even(f.side)?;
    check_even(new_side)?;
    if new_side > f.side {
        return Err(Error::dim(format!(
            "cannot crop side {} up to {new_side}",
            f.side
        )));
    }
    let off = (f.side - new_side) / 2;
    let mut data = Vec::with_capacity(new_side * new_side);
    for r in 0..new_side {
        let src = (r + off) * f.side + off;
        data.extend_from_slice(&f.data[src..src + new_side]);
    }
    Ok(Grid {
        side: new_side,
        data,
    })
}

/// Bilinear scale-and-shift about the grid center.
///
/// Output sample at offset `p` from the center takes the input value at
/// `(p − shift) / scale`; samples that fall outside the input are zero.
/// `x` runs along columns and `y` along rows.
pub fn resample_bilinear<T>(
    img: &Grid<T>,
    scale_x: f64,
    scale_y: f64,
    shift_x_px: f64,
    shift_y_px: f64,
) -> Result<Grid<T>>
where
    T: Copy + Default + Add<Output = T> + Mul<f64, Output = T>,
{
    for s in [scale_x, scale_y] {
        if !(s > 0.5 && s < 2.0) {
            return Err(Error::param(format!(
                "scale factor {s} outside the supported range (0.5, 2.0)"
            )));
        }
    }
    let limit = img.side as f64 / 4.0;
    for s in [shift_x_px, shift_y_px] {
        if !(s.abs() <= limit) {
            return Err(Error::param(format!(
                "shift {s} px outside the supported range ±{limit}"
            )));
        }
    }
    let n = img.side;
    let c = (n / 2) as f64;
    let sample = |r: isize, col: isize| -> Option<T> {
        if r < 0 || col < 0 || r >= n as isize || col >= n as isize {
            None
        } else {
            Some(img.data[r as usize * n + col as usize])
        }
    };
    Ok(Grid::from_fn(n, |r, col| {
        let sx = (col as f64 - c - shift_x_px) / scale_x + c;
        let sy = (r as f64 - c - shift_y_px) / scale_y + c;
        let x0 = sx.floor();
        let y0 = sy.floor();
        let fx = sx - x0;
        let fy = sy - y0;
        let (x0, y0) = (x0 as isize, y0 as isize);
        let mut acc = T::default();
        for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
            if wy == 0.0 {
                continue;
            }
            for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                if wx == 0.0 {
                    continue;
                }
                if let Some(v) = sample(y0 + dy, x0 + dx) {
                    acc = acc + v * (wx * wy);
                }
            }
        }
        acc
    }))
}
