use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blocks::{check_distance, wp_forward, MIN_PROPAGATION_UM};
use crate::error::{Error, Result};
use crate::field::{resample_bilinear, SampledField};

/// Ranges of the random transform applied to a PSF to make a ground truth.
/// Shifts are in pixels, defocus in image-space micrometres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationSpec {
    /// Shifts are drawn uniformly from `±shift_px` per axis.
    pub shift_px: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Defocus magnitude is drawn uniformly from this range.
    pub defocus_min_um: f64,
    pub defocus_max_um: f64,
    /// Draw the defocus sign with a fair coin; otherwise it is positive.
    pub random_sign: bool,
    pub seed: u64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        PerturbationSpec {
            shift_px: 20.0,
            scale_min: 0.7,
            scale_max: 1.3,
            defocus_min_um: 200.0,
            defocus_max_um: 1000.0,
            random_sign: true,
            seed: 0,
        }
    }
}

/// One draw from a [`PerturbationSpec`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub shift_x_px: f64,
    pub shift_y_px: f64,
    pub scale_x: f64,
    pub scale_y: f64,
    pub defocus_um: f64,
}

impl PerturbationSpec {
    /// The identity transform: no shift, unit scale, no defocus.
    pub fn none() -> Self {
        PerturbationSpec {
            shift_px: 0.0,
            scale_min: 1.0,
            scale_max: 1.0,
            defocus_min_um: 0.0,
            defocus_max_um: 0.0,
            random_sign: false,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shift_px >= 0.0 && self.shift_px.is_finite()) {
            return Err(Error::param("shift range must be finite and non-negative"));
        }
        if !(self.scale_min > 0.5 && self.scale_min <= self.scale_max && self.scale_max < 2.0) {
            return Err(Error::param(format!(
                "scale range [{}, {}] must be ordered and inside (0.5, 2)",
                self.scale_min, self.scale_max
            )));
        }
        let none = self.defocus_min_um == 0.0 && self.defocus_max_um == 0.0;
        if !none
            && !(self.defocus_min_um >= MIN_PROPAGATION_UM
                && self.defocus_min_um <= self.defocus_max_um
                && self.defocus_max_um.is_finite())
        {
            return Err(Error::param(format!(
                "defocus range [{}, {}] µm must be ordered with magnitude at least {} µm",
                self.defocus_min_um, self.defocus_max_um, MIN_PROPAGATION_UM
            )));
        }
        Ok(())
    }

    /// Deterministic draw from `seed`.
    pub fn sample(&self) -> Result<Perturbation> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut uniform = |lo: f64, hi: f64| {
            let u: f64 = rng.random();
            lo + (hi - lo) * u
        };
        let shift_x_px = uniform(-self.shift_px, self.shift_px);
        let shift_y_px = uniform(-self.shift_px, self.shift_px);
        let scale_x = uniform(self.scale_min, self.scale_max);
        let scale_y = uniform(self.scale_min, self.scale_max);
        let magnitude = uniform(self.defocus_min_um, self.defocus_max_um);
        let negative = uniform(0.0, 1.0) < 0.5;
        let defocus_um = if self.random_sign && negative {
            -magnitude
        } else {
            magnitude
        };
        Ok(Perturbation {
            shift_x_px,
            shift_y_px,
            scale_x,
            scale_y,
            defocus_um,
        })
    }
}

/// Applies a sampled perturbation: bilinear scale and shift of the complex
/// field, then propagation by the sampled defocus.
pub fn apply_perturbation(base: &SampledField, p: &Perturbation) -> Result<SampledField> {
    check_distance(p.defocus_um)?;
    let moved = resample_bilinear(&base.values, p.scale_x, p.scale_y, p.shift_x_px, p.shift_y_px)?;
    let moved = SampledField::new(base.grid, moved)?;
    if p.defocus_um == 0.0 {
        Ok(moved)
    } else {
        wp_forward(&moved, p.defocus_um)
    }
}

/// Random ground-truth PSF drawn from `spec`.
pub fn make_ground_truth_psf(base: &SampledField, spec: &PerturbationSpec) -> Result<SampledField> {
    apply_perturbation(base, &spec.sample()?)
}
