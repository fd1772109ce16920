//! Phase-mask families used as ground truth in phase-mask recovery.
//!
//! Coordinates are normalized by the radius of the illuminated pupil disk in
//! the Fourier plane, so a family looks the same at any grid size.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Grid, RealGrid};

/// Half of the largest phase excursion a modulator can apply.
pub const PHASE_HALF_RANGE: f64 = 2.5 * PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskFamily {
    Zero,
    Cubic,
    CircularGradient,
}

impl MaskFamily {
    pub fn name(self) -> &'static str {
        match self {
            MaskFamily::Zero => "zero",
            MaskFamily::Cubic => "cubic",
            MaskFamily::CircularGradient => "circular_gradient",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskSpec {
    /// Cubic coefficient range, radians at the pupil edge.
    pub cubic_alpha: (f64, f64),
    /// Peak phase of the circular gradient, radians.
    pub gradient_amplitude: (f64, f64),
    /// Gradient radius as a fraction of the pupil radius.
    pub gradient_radius: (f64, f64),
    /// Pattern shift per axis, as a fraction of the pupil radius.
    pub shift_frac: f64,
    pub scale: (f64, f64),
    /// Clamp recovered phases to `±PHASE_HALF_RANGE`.
    pub bound_phase: bool,
}

impl Default for MaskSpec {
    fn default() -> Self {
        MaskSpec {
            cubic_alpha: (0.5 * PI, 1.25 * PI),
            gradient_amplitude: (PI, 2.5 * PI),
            gradient_radius: (0.2, 0.6),
            shift_frac: 0.2,
            scale: (0.8, 1.2),
            bound_phase: true,
        }
    }
}

/// One sampled mask: family plus its drawn parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskDraw {
    pub family: MaskFamily,
    pub amplitude: f64,
    pub radius: f64,
    pub shift: (f64, f64),
    pub scale: f64,
}

impl MaskSpec {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("cubic_alpha", self.cubic_alpha),
            ("gradient_amplitude", self.gradient_amplitude),
            ("gradient_radius", self.gradient_radius),
            ("scale", self.scale),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::param(format!("mask.{name} range [{lo}, {hi}] is invalid")));
            }
        }
        if !(self.shift_frac >= 0.0 && self.shift_frac < 1.0) {
            return Err(Error::param("mask.shift_frac must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Draws a mask; `family` forces the family, otherwise a fair coin picks
    /// between cubic and circular gradient.
    pub fn sample(&self, seed: u64, family: Option<MaskFamily>) -> Result<MaskDraw> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coin = rng.random::<f64>() < 0.5;
        let family = family.unwrap_or(if coin {
            MaskFamily::Cubic
        } else {
            MaskFamily::CircularGradient
        });
        let mut uniform = |(lo, hi): (f64, f64)| lo + (hi - lo) * rng.random::<f64>();
        let amplitude = match family {
            MaskFamily::Zero => 0.0,
            MaskFamily::Cubic => uniform(self.cubic_alpha),
            MaskFamily::CircularGradient => uniform(self.gradient_amplitude),
        };
        let radius = uniform(self.gradient_radius);
        let s = self.shift_frac;
        let shift = (uniform((-s, s)), uniform((-s, s)));
        let scale = uniform(self.scale);
        Ok(MaskDraw {
            family,
            amplitude,
            radius,
            shift,
            scale,
        })
    }
}

impl MaskDraw {
    /// Renders the mask on an `n`-sided grid whose pupil disk has radius
    /// `pupil_px` pixels.
    pub fn render(&self, n: usize, pupil_px: f64) -> RealGrid {
        let c = (n / 2) as f64;
        Grid::from_fn(n, |r, col| {
            let x = ((col as f64 - c) / pupil_px - self.shift.0) / self.scale;
            let y = ((r as f64 - c) / pupil_px - self.shift.1) / self.scale;
            let phi = match self.family {
                MaskFamily::Zero => 0.0,
                MaskFamily::Cubic => self.amplitude * (x * x * x + y * y * y),
                MaskFamily::CircularGradient => {
                    let rho = (x * x + y * y).sqrt();
                    self.amplitude * (1.0 - rho / self.radius).max(0.0)
                }
            };
            phi.clamp(-PHASE_HALF_RANGE, PHASE_HALF_RANGE)
        })
    }
}

/// Indicator of the pupil disk of radius `pupil_px` about the grid center.
pub fn pupil_support(n: usize, pupil_px: f64) -> Vec<bool> {
    let c = (n / 2) as f64;
    (0..n * n)
        .map(|i| {
            let (r, col) = ((i / n) as f64 - c, (i % n) as f64 - c);
            (r * r + col * col).sqrt() <= pupil_px
        })
        .collect()
}

/// Mask error over the pupil support: `‖φ − φ_gt‖² / ‖φ_gt‖²`, or the
/// absolute `‖φ‖²` when the ground truth is zero there.
pub fn mask_nmse(gt: &RealGrid, phi: &RealGrid, support: &[bool]) -> Result<f64> {
    if gt.len() != phi.len() || gt.len() != support.len() {
        return Err(Error::dim("mask grids and support differ in size"));
    }
    let (mut err, mut energy) = (0.0, 0.0);
    for ((a, b), &inside) in gt.as_slice().iter().zip(phi.as_slice()).zip(support) {
        if inside {
            err += (a - b) * (a - b);
            energy += a * a;
        }
    }
    Ok(if energy == 0.0 { err } else { err / energy })
}
