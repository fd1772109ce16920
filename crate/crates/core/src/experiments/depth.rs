use serde::{Deserialize, Serialize};

use super::{make_ground_truth_psf, usaf_target, ExperimentSetup};
use crate::blocks::{prepare_object, MicroscopeModel};
use crate::error::{Error, Result};
use crate::field::IntensityImage;
use crate::optim::{calibrate, nmse};
use crate::psf::{gen_aberrated_psf, gen_ideal_psf};
use crate::stack::DepthStack;

/// Relative NMSE difference under which two candidate depths count as tied.
const TIE_REL: f64 = 1e-9;

fn argmin_depth(errors: &[f64], depths: &[f64]) -> f64 {
    let best = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = TIE_REL * best.abs();
    let mut pick: Option<usize> = None;
    for (i, &e) in errors.iter().enumerate() {
        if e - best > tol {
            continue;
        }
        match pick {
            Some(p) if depths[i].abs() >= depths[p].abs() => {}
            _ => pick = Some(i),
        }
    }
    depths[pick.expect("non-empty depth grid")]
}

/// Depths in `depth_grid_um` whose model image best matches each query.
/// Ties go to the smaller |depth|, then to the earlier grid entry.
pub fn predict_depths(
    model: &MicroscopeModel,
    queries: &[IntensityImage],
    object: &IntensityImage,
    depth_grid_um: &[f64],
) -> Result<Vec<f64>> {
    if depth_grid_um.is_empty() {
        return Err(Error::param("depth grid is empty"));
    }
    for &d in depth_grid_um {
        model.propagation_distance(d)?;
    }
    let obj = prepare_object(object)?;
    let candidates = depth_grid_um
        .iter()
        .map(|&d| model.image_at(d, &obj))
        .collect::<Result<Vec<_>>>()?;
    queries
        .iter()
        .map(|q| {
            let errors = candidates
                .iter()
                .map(|c| nmse(q.values.as_slice(), c.values.as_slice()))
                .collect::<Result<Vec<_>>>()?;
            Ok(argmin_depth(&errors, depth_grid_um))
        })
        .collect()
}

/// Single-query form of [`predict_depths`].
pub fn predict_depth(
    model: &MicroscopeModel,
    query: &IntensityImage,
    object: &IntensityImage,
    depth_grid_um: &[f64],
) -> Result<f64> {
    Ok(predict_depths(model, std::slice::from_ref(query), object, depth_grid_um)?[0])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub true_depth: f64,
    pub predicted_depth: f64,
    /// Prediction of the uncalibrated ideal-PSF model.
    pub control_depth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthReport {
    pub rows: Vec<DepthRow>,
    pub mean_abs_error: f64,
    pub control_mean_abs_error: f64,
    /// Control predictions on the opposite side of focus from the truth.
    pub control_sign_flips: usize,
    pub calibration_nmse: f64,
}

/// Depth from defocus on a synthetic stack: a perturbed ground-truth PSF
/// with spherical aberration images the bar target over `stack_depths_um`; a model calibrated at the
/// setup's calibration depths and the ideal unaberrated model then predict
/// each image's depth over the same grid.
pub fn run_depth_experiment(
    setup: &ExperimentSetup,
    stack_depths_um: &[f64],
    seed: u64,
) -> Result<DepthReport> {
    setup.validate()?;
    let base = gen_ideal_psf(&setup.objective, &setup.grid, 0.0)?;
    let aberrated = gen_aberrated_psf(&setup.objective, &setup.grid, 0.0, setup.depth_spherical_waves)?;
    let gt = make_ground_truth_psf(&aberrated, &setup.perturbation.with_seed(seed))?;
    let object = usaf_target(&setup.grid)?;
    let truth = setup.psf_model(&gt.values, false)?;
    let stack = truth.synthesize(std::slice::from_ref(&object), stack_depths_um)?;

    let calib_images = truth.synthesize(std::slice::from_ref(&object), &setup.depths_um)?;
    let obs = DepthStack::new(calib_images, setup.depths_um.clone(), object.clone())?;
    let mut model = setup.psf_model(&base.values, true)?;
    let fit = calibrate(&mut model, &obs, &setup.psf_optimizer)?;
    let control = setup.psf_model(&base.values, false)?;

    let predicted = predict_depths(&model, &stack, &object, stack_depths_um)?;
    let controls = predict_depths(&control, &stack, &object, stack_depths_um)?;
    let rows: Vec<DepthRow> = stack_depths_um
        .iter()
        .zip(predicted.iter().zip(&controls))
        .map(|(&t, (&p, &c))| DepthRow {
            true_depth: t,
            predicted_depth: p,
            control_depth: c,
        })
        .collect();
    let n = rows.len() as f64;
    Ok(DepthReport {
        mean_abs_error: rows.iter().map(|r| (r.predicted_depth - r.true_depth).abs()).sum::<f64>() / n,
        control_mean_abs_error: rows.iter().map(|r| (r.control_depth - r.true_depth).abs()).sum::<f64>()
            / n,
        control_sign_flips: rows
            .iter()
            .filter(|r| r.control_depth * r.true_depth < 0.0)
            .count(),
        calibration_nmse: fit.image_nmse,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_prefer_smaller_magnitude_then_grid_order() {
        let depths = [-4.0, -2.0, 0.0, 2.0, 4.0];
        assert_eq!(argmin_depth(&[5.0, 1.0, 3.0, 1.0, 2.0], &depths), -2.0);
        assert_eq!(argmin_depth(&[1.0, 3.0, 3.0, 2.0, 1.0], &depths), -4.0);
        assert_eq!(argmin_depth(&[1.0, 3.0, 1.0 + 1e-12, 2.0, 1.0], &depths), 0.0);
        assert_eq!(argmin_depth(&[3.0, 3.0, 3.0, 2.0, 1.0], &depths), 4.0);
        assert_eq!(argmin_depth(&[0.0, 1.0, 1.0, 1.0, 0.0], &depths), -4.0);
    }
}
