//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use diffoptics::blocks::{lens_forward, wp_forward, LensBlock};
use diffoptics::experiments::{
    pm_trial, run_depth_experiment, run_pm_recovery, run_psf_recovery, ExperimentSetup, MaskFamily, RecoveryRun,
};
use diffoptics::field::{Grid, GridSpec, SampledField};
use diffoptics::io::{decode_pfm, encode_pfm, trials_csv};
use diffoptics::Error;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 7;
const DEPTH_SEED: u64 = 3;
const TRIALS: usize = 20;
const PREFIX: usize = 2;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gradients() -> Outcome {
    let mut worst = ("", 0.0f64);
    for (name, case) in grad::all() {
        let e = case();
        if e > worst.1 {
            worst = (name, e);
        }
    }
    assert!(grad::COORDS >= 20);
    outcome(
        worst.1 <= grad::TOL,
        format!("worst {} = {:.2e} (tol {:.0e}, {} coordinates)", worst.0, worst.1, grad::TOL, grad::COORDS),
    )
}

fn propagation() -> Outcome {
    let grid = GridSpec::new(256, 0.5, 0.5).unwrap();
    let w0 = 20.0;
    let u = gaussian(&grid, w0, 0.0, 0.0);
    let mut radius_err = 0.0f64;
    let mut power_err = 0.0f64;
    for z in [500.0, 1000.0, 2000.0] {
        let out = wp_forward(&u, z).unwrap();
        let want = gaussian_radius(w0, grid.wavelength_um, z);
        radius_err = radius_err.max((measured_radius(&out) - want).abs() / want);
        power_err = power_err.max((power(&out) - power(&u)).abs() / power(&u));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut round_err = 0.0f64;
    let mut cases = 0;
    while cases < 16 {
        let w = rng.random_range(5.0..20.0);
        let z = rng.random_range(200.0..5000.0);
        let (x0, y0): (f64, f64) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        // the propagated beam must stay inside the window
        if x0.abs().max(y0.abs()) + 3.0 * gaussian_radius(w, grid.wavelength_um, z) >= grid.extent_um() / 2.0 {
            continue;
        }
        cases += 1;
        let v = gaussian(&grid, w, x0, y0);
        let fwd = wp_forward(&v, z).unwrap();
        power_err = power_err.max((power(&fwd) - power(&v)).abs() / power(&v));
        round_err = round_err.max(rel_l2(&wp_forward(&fwd, -z).unwrap(), &v));
    }
    outcome(
        radius_err < 0.02 && power_err < 0.01 && round_err < 1e-3,
        format!("radius {radius_err:.2e} (<2e-2), power {power_err:.2e} (<1e-2), round trip {round_err:.2e} (<1e-3)"),
    )
}

fn airy() -> Outcome {
    let (n, wavelength, f, diameter) = (256, 0.64, 150_000.0, 50_800.0);
    let grid = GridSpec::new(n, 4.0 * diameter / n as f64, wavelength).unwrap();
    let plane = SampledField::new(grid, Grid::from_fn(n, |_, _| Complex64::new(1.0, 0.0))).unwrap();
    let out = lens_forward(&plane, &LensBlock::new(f, diameter / 2.0).unwrap()).unwrap();
    let pixel = out.grid.pitch_um;
    let got = first_zero_radius(out.irradiance().values.as_slice(), n, pixel);
    let want = 1.22 * wavelength * f / diameter;
    outcome(
        (got - want).abs() <= pixel,
        format!("first zero {got:.3} µm vs {want:.3} µm (pixel {pixel:.3} µm)"),
    )
}

fn never_worse(run: &RecoveryRun) -> bool {
    run.reports.iter().all(|r| r.image_nmse <= r.initial_nmse)
}

fn psf_recovery(run: &RecoveryRun) -> Outcome {
    let mean = run.aggregate.image_nmse.mean;
    outcome(
        mean <= 2e-2 && never_worse(run),
        format!(
            "mean image NMSE {:.3e} ± {:.2e} (≤2e-2), final ≤ initial in {}/{} trials, mean param NMSE {:.3e}",
            mean,
            run.aggregate.image_nmse.std,
            run.reports.iter().filter(|r| r.image_nmse <= r.initial_nmse).count(),
            run.reports.len(),
            run.aggregate.param_nmse.mean
        ),
    )
}

fn pm_recovery(setup: &ExperimentSetup, run: &RecoveryRun) -> Outcome {
    let mean = run.aggregate.image_nmse.mean;
    let (control, _) = pm_trial(setup, 0, SEED, Some(MaskFamily::Zero)).unwrap();
    outcome(
        mean <= 1e-1 && control.image_nmse < 1e-10,
        format!(
            "mean image NMSE {:.3e} ± {:.2e} (≤1e-1), zero-mask control {:.2e} (<1e-10)",
            mean, run.aggregate.image_nmse.std, control.image_nmse
        ),
    )
}

fn depth(setup: &ExperimentSetup) -> Outcome {
    let mut setup = setup.clone();
    setup.depths_um = (0..11).map(|k| -50.0 + 10.0 * k as f64).collect();
    let stack: Vec<f64> = (0..51).map(|k| -50.0 + 2.0 * k as f64).collect();
    let r = run_depth_experiment(&setup, &stack, DEPTH_SEED).unwrap();
    outcome(
        r.mean_abs_error <= 4.0 && r.control_sign_flips >= 1,
        format!(
            "mean |error| {:.3} µm (≤4), control mean |error| {:.3} µm with {} sign flips (≥1)",
            r.mean_abs_error, r.control_mean_abs_error, r.control_sign_flips
        ),
    )
}

fn prefix_lines(csv: &str, rows: usize) -> String {
    csv.lines().take(rows + 1).collect::<Vec<_>>().join("\n")
}

fn determinism(setup: &ExperimentSetup, psf: &RecoveryRun, pm: &RecoveryRun) -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let (psf1, pm1) = pool.install(|| {
        (run_psf_recovery(setup, PREFIX, SEED).unwrap(), run_pm_recovery(setup, PREFIX, SEED).unwrap())
    });
    let same_psf = trials_csv(&psf1.reports) == prefix_lines(&trials_csv(&psf.reports), PREFIX) + "\n";
    let same_pm = trials_csv(&pm1.reports) == prefix_lines(&trials_csv(&pm.reports), PREFIX) + "\n";
    outcome(
        same_psf && same_pm,
        format!("one-thread rerun of {PREFIX} trials: psf identical {same_psf}, pm identical {same_pm}"),
    )
}

fn formats() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut lossless = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=24usize);
        let samples: Vec<f32> = (0..n * n)
            .map(|_| loop {
                let v = f32::from_bits(rng.random());
                if v.is_finite() {
                    break v;
                }
            })
            .collect();
        let grid = Grid::from_vec(n, samples.iter().map(|&v| v as f64).collect()).unwrap();
        let back = decode_pfm(&encode_pfm(&grid).unwrap()).unwrap();
        if back.side() == n && back.as_slice().iter().zip(&samples).all(|(a, b)| (*a as f32).to_bits() == b.to_bits()) {
            lossless += 1;
        }
    }
    let corpus = malformed_pfm_corpus();
    let rejected = corpus
        .iter()
        .filter(|(_, bytes)| matches!(decode_pfm(bytes), Err(Error::Format { .. })))
        .count();
    outcome(
        lossless == 1000 && corpus.len() >= 5 && rejected == corpus.len(),
        format!("{lossless}/1000 lossless round trips, {rejected}/{} malformed headers rejected", corpus.len()),
    )
}

fn report(index: usize, name: &str, start: Instant, o: Outcome) -> bool {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!("{tag} {index} {name}: {} [{:.1}s]", o.detail, start.elapsed().as_secs_f64());
    o.pass
}

fn main() -> ExitCode {
    let setup = ExperimentSetup::default();
    let mut ok = true;

    let t = Instant::now();
    ok &= report(1, "gradients", t, gradients());
    let t = Instant::now();
    ok &= report(2, "propagation", t, propagation());
    let t = Instant::now();
    ok &= report(3, "airy", t, airy());

    let t = Instant::now();
    let psf = run_psf_recovery(&setup, TRIALS, SEED).unwrap();
    ok &= report(4, "psf recovery", t, psf_recovery(&psf));
    let t = Instant::now();
    let pm = run_pm_recovery(&setup, TRIALS, SEED).unwrap();
    ok &= report(5, "phase-mask recovery", t, pm_recovery(&setup, &pm));
    let t = Instant::now();
    ok &= report(6, "depth prediction", t, depth(&setup));
    let t = Instant::now();
    ok &= report(7, "determinism", t, determinism(&setup, &psf, &pm));
    let t = Instant::now();
    ok &= report(8, "formats", t, formats());

    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
