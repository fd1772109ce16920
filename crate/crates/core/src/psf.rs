//! Ideal bright-field PSF seeds from a circular pupil with a defocus phase.
//!
//! This is the standard pupil-plane defocus model, used in place of a full
//! scalar Debye integral: the pupil of radius `NA/λ` (in sample-space
//! spatial frequency) carries the phase `k·d·√(1 − (NA·ρ)²)` and is
//! inverse-transformed to the image plane. Image-plane pitch is mapped to
//! sample space through the objective magnification.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ifft2_centered, Grid, GridSpec, SampledField};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub magnification: f64,
    pub na: f64,
    pub tube_length_um: f64,
    pub wavelength_um: f64,
}

impl ObjectiveSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.na > 0.0 && self.na < 1.0) {
            return Err(Error::param(format!(
                "numerical aperture must lie in (0, 1), got {}",
                self.na
            )));
        }
        if !(self.magnification > 0.0 && self.magnification.is_finite()) {
            return Err(Error::param(format!(
                "magnification must be positive, got {}",
                self.magnification
            )));
        }
        if !(self.tube_length_um > 0.0 && self.wavelength_um > 0.0) {
            return Err(Error::param("tube length and wavelength must be positive"));
        }
        Ok(())
    }

    /// Axial (longitudinal) magnification `M²`, mapping object-space
    /// defocus to image-space propagation distance.
    pub fn axial_magnification(&self) -> f64 {
        self.magnification * self.magnification
    }

    /// Object-space depth → image-space distance.
    pub fn depth_to_image_space(&self, depth_um: f64) -> f64 {
        self.axial_magnification() * depth_um
    }

    pub fn image_side_na(&self) -> f64 {
        self.na / self.magnification
    }

    /// Coarsest image-plane pitch satisfying `pitch/M ≤ λ/(4·NA)`.
    pub fn max_image_pitch(&self) -> f64 {
        self.magnification * self.wavelength_um / (4.0 * self.na)
    }
}

/// Complex image-plane field of the objective at sample-space defocus
/// `defocus_um`. The amplitude is scaled so the in-focus peak is 1; the
/// scale does not depend on defocus, so total power is defocus-invariant.
pub fn gen_ideal_psf(spec: &ObjectiveSpec, grid: &GridSpec, defocus_um: f64) -> Result<SampledField> {
    gen_aberrated_psf(spec, grid, defocus_um, 0.0)
}

/// As [`gen_ideal_psf`], with primary spherical aberration `W·ρ⁴` of
/// `spherical_waves` waves added to the pupil phase. Unlike defocus alone it
/// makes the focal series asymmetric about focus.
pub fn gen_aberrated_psf(
    spec: &ObjectiveSpec,
    grid: &GridSpec,
    defocus_um: f64,
    spherical_waves: f64,
) -> Result<SampledField> {
    spec.validate()?;
    if !spherical_waves.is_finite() {
        return Err(Error::param("spherical aberration must be finite"));
    }
    grid.validate()?;
    if (spec.wavelength_um - grid.wavelength_um).abs() > 1e-12 * grid.wavelength_um {
        return Err(Error::param(format!(
            "objective wavelength {} µm differs from grid wavelength {} µm",
            spec.wavelength_um, grid.wavelength_um
        )));
    }
    if !defocus_um.is_finite() {
        return Err(Error::param("defocus must be finite"));
    }
    let sample_pitch = grid.pitch_um / spec.magnification;
    let limit = grid.wavelength_um / (4.0 * spec.na);
    if sample_pitch > limit * (1.0 + 1e-12) {
        return Err(Error::Sampling(format!(
            "sample-space pitch {sample_pitch:.4} µm exceeds the Nyquist limit \
             λ/(4·NA) = {limit:.4} µm for NA {}",
            spec.na
        )));
    }

    let n = grid.n_side;
    let df = 1.0 / (n as f64 * sample_pitch);
    let cutoff = spec.na / grid.wavelength_um;
    let k = grid.wavenumber();
    let half = (n / 2) as f64;
    let mut inside = 0usize;
    let pupil = Grid::from_fn(n, |r, c| {
        let fx = (c as f64 - half) * df;
        let fy = (r as f64 - half) * df;
        let rho = (fx * fx + fy * fy).sqrt() / cutoff;
        if rho <= 1.0 {
            inside += 1;
            let s = spec.na * rho;
            let phase = k * defocus_um * (1.0 - s * s).sqrt()
                + 2.0 * std::f64::consts::PI * spherical_waves * rho.powi(4);
            Complex64::from_polar(1.0, phase)
        } else {
            Complex64::default()
        }
    });
    if inside == 0 {
        return Err(Error::Sampling("pupil covers no frequency samples".into()));
    }
    let mut field = ifft2_centered(&pupil)?;
    let scale = (n * n) as f64 / inside as f64;
    field.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
    SampledField::new(*grid, field)
}
