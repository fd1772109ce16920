//! Synthetic calibration studies: PSF recovery, phase-mask recovery and
//! depth prediction, all reproducible from a configuration and a seed.

mod depth;
mod masks;
mod perturb;
mod recovery;
mod target;

pub use depth::{predict_depth, predict_depths, run_depth_experiment, DepthReport, DepthRow};
pub use masks::{mask_nmse, pupil_support, MaskDraw, MaskFamily, MaskSpec, PHASE_HALF_RANGE};
pub use perturb::{apply_perturbation, make_ground_truth_psf, Perturbation, PerturbationSpec};
pub use recovery::{
    pm_trial, psf_trial, run_pm_recovery, run_psf_recovery, Aggregate, RecoveryRun, Stat,
    TrialArtifacts, TrialReport,
};
pub use target::usaf_target;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamSet, TrainableParam};
use crate::blocks::{Block, LensBlock, MicroscopeModel, WavePropagation};
use crate::error::{Error, Result};
use crate::field::{ComplexGrid, GridSpec, IntensityImage, RealGrid};
use crate::optim::AdamConfig;
use crate::psf::ObjectiveSpec;

/// Everything an experiment needs besides the trial count and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSetup {
    pub grid: GridSpec,
    pub objective: ObjectiveSpec,
    pub focal_length_um: f64,
    pub pupil_radius_um: f64,
    /// Object-space depths of the calibration stack.
    pub depths_um: Vec<f64>,
    pub noise_sigma_rel: f64,
    /// Primary spherical aberration (waves) of the depth experiment's
    /// ground-truth pupil.
    pub depth_spherical_waves: f64,
    pub perturbation: PerturbationSpec,
    pub mask: MaskSpec,
    pub psf_optimizer: AdamConfig,
    pub pm_optimizer: AdamConfig,
}

impl Default for ExperimentSetup {
    fn default() -> Self {
        let wavelength_um = 0.64;
        ExperimentSetup {
            grid: GridSpec {
                n_side: 256,
                pitch_um: 6.9,
                wavelength_um,
            },
            objective: ObjectiveSpec {
                magnification: 20.0,
                na: 0.45,
                tube_length_um: 165_000.0,
                wavelength_um,
            },
            focal_length_um: 150_000.0,
            pupil_radius_um: 25_400.0,
            depths_um: vec![-50.0, 0.0, 50.0],
            noise_sigma_rel: 0.0,
            depth_spherical_waves: 0.5,
            perturbation: PerturbationSpec::default(),
            mask: MaskSpec::default(),
            psf_optimizer: AdamConfig {
                lr_field: 1e-2,
                max_iters: 300,
                plateau_patience: 30,
                plateau_tol: 1e-4,
                ..AdamConfig::default()
            },
            pm_optimizer: AdamConfig {
                lr_phase: 5e-2,
                max_iters: 150,
                plateau_patience: 30,
                plateau_tol: 1e-4,
                ..AdamConfig::default()
            },
        }
    }
}

impl ExperimentSetup {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.objective.validate()?;
        if (self.objective.wavelength_um - self.grid.wavelength_um).abs()
            > 1e-12 * self.grid.wavelength_um
        {
            return Err(Error::param("objective and grid wavelengths differ"));
        }
        LensBlock::new(self.focal_length_um, self.pupil_radius_um)?;
        if self.depths_um.is_empty() {
            return Err(Error::param("calibration needs at least one depth"));
        }
        if !(self.noise_sigma_rel >= 0.0) {
            return Err(Error::param("noise level must be non-negative"));
        }
        self.perturbation.validate()?;
        self.mask.validate()?;
        self.psf_optimizer.validate()?;
        self.pm_optimizer.validate()
    }

    /// Image-space propagation per unit object-space depth.
    pub fn axial_scale(&self) -> f64 {
        self.objective.axial_magnification()
    }

    /// Pitch of the Fourier plane between the two lenses of the 4-f stack.
    pub fn fourier_pitch_um(&self) -> f64 {
        self.grid.wavelength_um * self.focal_length_um
            / (self.grid.n_side as f64 * self.grid.pitch_um)
    }

    /// Radius in Fourier-plane pixels of the disk illuminated by a source
    /// limited to the objective's image-side aperture.
    pub fn pupil_px(&self) -> f64 {
        self.focal_length_um * self.objective.image_side_na() / self.fourier_pitch_um()
    }

    /// Source → propagation → camera, with the source field as parameter
    /// `psf`.
    pub fn psf_model(&self, field: &ComplexGrid, trainable: bool) -> Result<MicroscopeModel> {
        let mut params = ParamSet::new();
        params.insert(TrainableParam::field("psf", field).trainable(trainable))?;
        let blocks = vec![
            Block::PsfSource { param: "psf".into() },
            Block::Wp(WavePropagation { distance_um: 0.0 }),
            Block::Camera { gain: None },
        ];
        Ok(MicroscopeModel::new(self.grid, blocks, params)?.with_axial_scale(self.axial_scale()))
    }

    /// The 4-f stack source → propagation → lens → phase mask → lens →
    /// camera, with a fixed source and the mask as parameter `mask`.
    pub fn four_f_model(
        &self,
        source: &ComplexGrid,
        phi: &RealGrid,
        trainable: bool,
    ) -> Result<MicroscopeModel> {
        let lens = LensBlock::new(self.focal_length_um, self.pupil_radius_um)?;
        let mut mask = TrainableParam::phase("mask", phi).trainable(trainable);
        if self.mask.bound_phase {
            mask = mask.with_bounds(-PHASE_HALF_RANGE, PHASE_HALF_RANGE);
        }
        let mut params = ParamSet::new();
        params.insert(TrainableParam::field("source", source))?;
        params.insert(mask)?;
        let blocks = vec![
            Block::PsfSource { param: "source".into() },
            Block::Wp(WavePropagation { distance_um: 0.0 }),
            Block::Lens(lens),
            Block::PhaseMask { param: "mask".into() },
            Block::Lens(lens),
            Block::Camera { gain: None },
        ];
        Ok(MicroscopeModel::new(self.grid, blocks, params)?.with_axial_scale(self.axial_scale()))
    }
}

/// Seed of trial `index` derived from the experiment seed. Independent of
/// how many trials run and in which order.
pub fn trial_seed(seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng.next_u64()
}

/// Adds zero-mean Gaussian noise of standard deviation `sigma_rel·max(img)`
/// and clamps at zero.
pub fn add_noise(img: &IntensityImage, sigma_rel: f64, seed: u64) -> Result<IntensityImage> {
    if !(sigma_rel >= 0.0 && sigma_rel.is_finite()) {
        return Err(Error::param(format!("noise level {sigma_rel} must be non-negative")));
    }
    if sigma_rel == 0.0 {
        return Ok(img.clone());
    }
    let sigma = sigma_rel * img.values.max();
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::param(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = img.values.map(|&v| (v + normal.sample(&mut rng)).max(0.0));
    IntensityImage::new(img.grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;

    #[test]
    fn default_setup_is_consistent() {
        let s = ExperimentSetup::default();
        s.validate().unwrap();
        assert!(s.grid.pitch_um / s.objective.magnification <= s.grid.wavelength_um / (4.0 * s.objective.na));
        assert!((s.fourier_pitch_um() - 54.348).abs() < 1e-2);
        assert!(s.pupil_px() > 50.0 && s.pupil_px() < 70.0);
    }

    #[test]
    fn trial_seeds_are_distinct_and_stable() {
        let a: Vec<u64> = (0..20).map(|i| trial_seed(7, i)).collect();
        let b: Vec<u64> = (0..20).map(|i| trial_seed(7, i)).collect();
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 20);
        assert_ne!(trial_seed(8, 0), a[0]);
    }

    #[test]
    fn zero_noise_is_identity_and_output_non_negative() {
        let g = GridSpec::new(16, 1.0, 0.5).unwrap();
        let img = IntensityImage::new(g, Grid::from_fn(16, |r, c| (r * c) as f64 * 0.01)).unwrap();
        assert_eq!(add_noise(&img, 0.0, 3).unwrap(), img);
        let noisy = add_noise(&img, 0.5, 3).unwrap();
        assert!(noisy.values.min() >= 0.0);
        assert!(add_noise(&img, -0.1, 3).is_err());
    }

    #[test]
    fn noise_level_matches_request() {
        let g = GridSpec::new(64, 1.0, 0.5).unwrap();
        let img = IntensityImage::new(g, Grid::from_fn(64, |_, _| 10.0)).unwrap();
        let noisy = add_noise(&img, 0.05, 11).unwrap();
        let d: Vec<f64> = noisy
            .values
            .as_slice()
            .iter()
            .map(|v| v - 10.0)
            .collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
        assert!((var.sqrt() - 0.5).abs() / 0.5 < 0.05, "{}", var.sqrt());
    }
}
