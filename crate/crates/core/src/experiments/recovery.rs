use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::masks::{mask_nmse, pupil_support, MaskFamily};
use super::{add_noise, make_ground_truth_psf, trial_seed, usaf_target, ExperimentSetup};
use crate::error::{Error, Result};
use crate::field::{ComplexGrid, IntensityImage, RealGrid};
use crate::optim::{calibrate, nmse, stack_loss, AdamConfig};
use crate::psf::gen_ideal_psf;
use crate::stack::DepthStack;
use crate::blocks::MicroscopeModel;

/// One row of a recovery experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub seed: u64,
    /// `psf`, or the mask family for phase-mask trials.
    pub label: String,
    pub initial_nmse: f64,
    pub image_nmse: f64,
    pub param_nmse: f64,
    pub iterations: usize,
    pub diverged: bool,
}

/// Ground truth and recovered parameters of one trial.
#[derive(Clone, Debug)]
pub struct TrialArtifacts {
    pub ground_truth: ComplexGrid,
    pub recovered: ComplexGrid,
    pub loss_history: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    /// Sample statistics; values are sorted first so the result does not
    /// depend on their order.
    pub fn of(values: &[f64]) -> Stat {
        if values.is_empty() {
            return Stat::default();
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = if v.len() > 1 {
            let mut d: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
            d.sort_by(f64::total_cmp);
            (d.iter().sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Stat {
            mean,
            std,
            min: v[0],
            max: v[v.len() - 1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_trials: usize,
    pub n_diverged: usize,
    pub initial_nmse: Stat,
    pub image_nmse: Stat,
    pub param_nmse: Stat,
    pub iterations: Stat,
}

impl Aggregate {
    pub fn of(reports: &[TrialReport]) -> Aggregate {
        let col = |f: fn(&TrialReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
        Aggregate {
            n_trials: reports.len(),
            n_diverged: reports.iter().filter(|r| r.diverged).count(),
            initial_nmse: Stat::of(&col(|r| r.initial_nmse)),
            image_nmse: Stat::of(&col(|r| r.image_nmse)),
            param_nmse: Stat::of(&col(|r| r.param_nmse)),
            iterations: Stat::of(&col(|r| r.iterations as f64)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RecoveryRun {
    pub reports: Vec<TrialReport>,
    pub artifacts: Vec<TrialArtifacts>,
    pub aggregate: Aggregate,
}

fn observe(
    setup: &ExperimentSetup,
    truth: &MicroscopeModel,
    object: &IntensityImage,
    seed: u64,
) -> Result<DepthStack> {
    let clean = truth.synthesize(std::slice::from_ref(object), &setup.depths_um)?;
    let images = clean
        .iter()
        .enumerate()
        .map(|(i, img)| add_noise(img, setup.noise_sigma_rel, seed ^ (i as u64 + 1)))
        .collect::<Result<Vec<_>>>()?;
    DepthStack::new(images, setup.depths_um.clone(), object.clone())
}

fn unit_sum(img: &IntensityImage) -> Vec<f64> {
    let s = img.values.sum();
    img.values.as_slice().iter().map(|v| v / s).collect()
}

/// Mean over depths of the NMSE between unit-sum camera-plane PSFs.
fn psf_distance(setup: &ExperimentSetup, truth: &MicroscopeModel, model: &MicroscopeModel) -> Result<f64> {
    let mut total = 0.0;
    for &d in &setup.depths_um {
        total += nmse(&unit_sum(&truth.psf_at(d)?), &unit_sum(&model.psf_at(d)?))?;
    }
    Ok(total / setup.depths_um.len() as f64)
}

fn run_calibration(
    model: &mut MicroscopeModel,
    obs: &DepthStack,
    cfg: &AdamConfig,
) -> Result<(f64, f64, usize, Vec<f64>, bool)> {
    let start = model.params.snapshot();
    match calibrate(model, obs, cfg) {
        Ok(r) => Ok((r.initial_loss(), r.image_nmse, r.iterations(), r.loss_history, false)),
        Err(Error::Divergence { iteration, .. }) => {
            // a diverged trial keeps its starting parameters and counts as no improvement
            model.params.restore(&start)?;
            let initial = stack_loss(model, obs)?;
            Ok((initial, initial, iteration, Vec::new(), true))
        }
        Err(e) => Err(e),
    }
}

/// One PSF-recovery trial: perturb the ideal PSF, observe a bar target at
/// the calibration depths, and fit the source field from the ideal PSF.
pub fn psf_trial(setup: &ExperimentSetup, trial: usize, seed: u64) -> Result<(TrialReport, TrialArtifacts)> {
    let base = gen_ideal_psf(&setup.objective, &setup.grid, 0.0)?;
    let gt = make_ground_truth_psf(&base, &setup.perturbation.with_seed(seed))?;
    let object = usaf_target(&setup.grid)?;
    let truth = setup.psf_model(&gt.values, false)?;
    let obs = observe(setup, &truth, &object, seed)?;

    let mut model = setup.psf_model(&base.values, true)?;
    let (initial_nmse, image_nmse, iterations, loss_history, diverged) =
        run_calibration(&mut model, &obs, &setup.psf_optimizer)?;
    let param_nmse = psf_distance(setup, &truth, &model)?;
    let recovered = model.params.get("psf").expect("psf parameter").as_complex_grid();
    Ok((
        TrialReport {
            trial,
            seed,
            label: "psf".into(),
            initial_nmse,
            image_nmse,
            param_nmse,
            iterations,
            diverged,
        },
        TrialArtifacts {
            ground_truth: gt.values,
            recovered,
            loss_history,
        },
    ))
}

/// One phase-mask trial: draw a mask (or use `family`), observe the target
/// through the 4-f stack, and fit the mask from zero phase.
pub fn pm_trial(
    setup: &ExperimentSetup,
    trial: usize,
    seed: u64,
    family: Option<MaskFamily>,
) -> Result<(TrialReport, TrialArtifacts)> {
    let n = setup.grid.n_side;
    let source = gen_ideal_psf(&setup.objective, &setup.grid, 0.0)?.values;
    let draw = setup.mask.sample(seed, family)?;
    let pupil_px = setup.pupil_px();
    let phi_gt = draw.render(n, pupil_px);
    let object = usaf_target(&setup.grid)?;
    let truth = setup.four_f_model(&source, &phi_gt, false)?;
    let obs = observe(setup, &truth, &object, seed)?;

    let mut model = setup.four_f_model(&source, &RealGrid::zeros(n), true)?;
    let (initial_nmse, image_nmse, iterations, loss_history, diverged) =
        run_calibration(&mut model, &obs, &setup.pm_optimizer)?;
    let phi = model.params.get("mask").expect("mask parameter").as_real_grid();
    let param_nmse = mask_nmse(&phi_gt, &phi, &pupil_support(n, pupil_px))?;
    Ok((
        TrialReport {
            trial,
            seed,
            label: draw.family.name().into(),
            initial_nmse,
            image_nmse,
            param_nmse,
            iterations,
            diverged,
        },
        TrialArtifacts {
            ground_truth: phi_gt.to_complex(),
            recovered: phi.to_complex(),
            loss_history,
        },
    ))
}

fn run_trials<F>(n_trials: usize, seed: u64, trial: F) -> Result<RecoveryRun>
where
    F: Fn(usize, u64) -> Result<(TrialReport, TrialArtifacts)> + Sync,
{
    if n_trials == 0 {
        return Err(Error::param("at least one trial is required"));
    }
    let results = (0..n_trials)
        .into_par_iter()
        .map(|i| trial(i, trial_seed(seed, i)))
        .collect::<Result<Vec<_>>>()?;
    let (reports, artifacts): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let aggregate = Aggregate::of(&reports);
    Ok(RecoveryRun {
        reports,
        artifacts,
        aggregate,
    })
}

/// Independent PSF-recovery trials on the rayon pool, one derived seed each.
pub fn run_psf_recovery(setup: &ExperimentSetup, n_trials: usize, seed: u64) -> Result<RecoveryRun> {
    setup.validate()?;
    run_trials(n_trials, seed, |i, s| psf_trial(setup, i, s))
}

/// Independent phase-mask recovery trials on the rayon pool.
pub fn run_pm_recovery(setup: &ExperimentSetup, n_trials: usize, seed: u64) -> Result<RecoveryRun> {
    setup.validate()?;
    run_trials(n_trials, seed, |i, s| pm_trial(setup, i, s, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_reference_values() {
        let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!((s.min, s.max), (1.0, 4.0));
        assert_eq!(Stat::of(&[3.0]).std, 0.0);
    }

    #[test]
    fn aggregate_ignores_trial_order() {
        let row = |trial: usize, v: f64| TrialReport {
            trial,
            seed: trial as u64,
            label: "psf".into(),
            initial_nmse: 1.0,
            image_nmse: v,
            param_nmse: 0.1 * v,
            iterations: 10 * trial,
            diverged: false,
        };
        let a: Vec<_> = (0..7).map(|i| row(i, 0.1 + 0.37 * i as f64)).collect();
        let mut b = a.clone();
        b.reverse();
        b.swap(1, 4);
        assert_eq!(Aggregate::of(&a), Aggregate::of(&b));
    }
}
