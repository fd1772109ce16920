//! Thin lens, front plane to back focal plane, in the Fraunhofer regime:
//! `U₂ = c(x, y) · F{U₁ · P} · dx₁²` with
//! `c = exp(jkf)/(jλf) · exp(j·k/(2f)·(x² + y²))` on the output grid.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{fft2_centered, Grid, GridSpec, SampledField};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LensBlock {
    pub focal_length_um: f64,
    pub pupil_radius_um: f64,
}

/// Precomputed pupil mask and output scaling for one input sampling.
#[derive(Clone, Debug)]
pub struct LensOperands {
    pub pupil: Arc<Vec<Complex64>>,
    /// `c(x₂, y₂)·dx₁²` on the output grid.
    pub output_factor: Arc<Vec<Complex64>>,
    pub output_grid: GridSpec,
}

impl LensBlock {
    pub fn new(focal_length_um: f64, pupil_radius_um: f64) -> Result<Self> {
        let lens = LensBlock {
            focal_length_um,
            pupil_radius_um,
        };
        lens.validate()?;
        Ok(lens)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal_length_um.is_finite() && self.focal_length_um > 0.0) {
            return Err(Error::Configuration(format!(
                "focal length must be positive, got {}",
                self.focal_length_um
            )));
        }
        if !(self.pupil_radius_um.is_finite() && self.pupil_radius_um > 0.0) {
            return Err(Error::Configuration(format!(
                "pupil radius must be positive, got {}",
                self.pupil_radius_um
            )));
        }
        Ok(())
    }

    /// Back-focal-plane pitch `λ·f/(n·dx₁)`.
    pub fn output_pitch(&self, input: &GridSpec) -> Result<f64> {
        let p = input.wavelength_um * self.focal_length_um / (input.n_side as f64 * input.pitch_um);
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::Configuration(format!(
                "lens output pitch {p} is not positive and finite"
            )));
        }
        Ok(p)
    }

    pub fn operands(&self, input: &GridSpec) -> Result<LensOperands> {
        self.validate()?;
        input.validate()?;
        let n = input.n_side;
        let out_grid = input.with_pitch(self.output_pitch(input)?);
        let r2max = self.pupil_radius_um * self.pupil_radius_um;
        let pupil = Grid::from_fn(n, |r, c| {
            let (x, y) = (input.coord(c), input.coord(r));
            if x * x + y * y <= r2max {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::default()
            }
        });

        let k = input.wavenumber();
        let f = self.focal_length_um;
        let lead = Complex64::from_polar(1.0, k * f)
            / Complex64::new(0.0, input.wavelength_um * f);
        let area = input.pitch_um * input.pitch_um;
        let factor = Grid::from_fn(n, |r, c| {
            let (x, y) = (out_grid.coord(c), out_grid.coord(r));
            lead * Complex64::from_polar(area, k / (2.0 * f) * (x * x + y * y))
        });
        Ok(LensOperands {
            pupil: Arc::new(pupil.into_vec()),
            output_factor: Arc::new(factor.into_vec()),
            output_grid: out_grid,
        })
    }
}

/// Applies the lens to `u1`; the result lives on the back-focal-plane grid.
pub fn lens_forward(u1: &SampledField, lens: &LensBlock) -> Result<SampledField> {
    let ops = lens.operands(&u1.grid)?;
    let masked = Grid::from_vec(
        u1.grid.n_side,
        u1.values
            .as_slice()
            .iter()
            .zip(ops.pupil.iter())
            .map(|(u, p)| u * p)
            .collect(),
    )?;
    let spec = fft2_centered(&masked)?;
    let out = spec
        .as_slice()
        .iter()
        .zip(ops.output_factor.iter())
        .map(|(u, c)| u * c)
        .collect();
    SampledField::new(ops.output_grid, Grid::from_vec(u1.grid.n_side, out)?)
}
