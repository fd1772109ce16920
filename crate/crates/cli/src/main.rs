use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{CommandFactory, Parser, Subcommand};
use serde_json::json;

use diffoptics::autodiff::{check_model, primitive_suite, GradCheck};
use diffoptics::experiments::{
    make_ground_truth_psf, run_depth_experiment, run_pm_recovery, run_psf_recovery, usaf_target,
    RecoveryRun,
};
use diffoptics::io::{
    depth_csv, load_model_config, loss_csv, trials_csv, write_complex_pfm, write_pfm, write_pgm,
    ModelConfig,
};
use diffoptics::psf::gen_ideal_psf;
use diffoptics::Error;

/// Differentiable microscope simulation and calibration.
#[derive(Parser, Debug)]
#[command(name = "diffoptics", version)]
struct Cli {
    /// JSON file describing the model and the experiment.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for parallel trials (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ideal objective PSF as PFM and PGM.
    GenPsf {
        /// Image-space defocus in µm.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        defocus_um: f64,
    },
    /// Images of the bar target through the configured model at the
    /// experiment's calibration depths.
    Simulate,
    /// Analytic gradients against central finite differences.
    Gradcheck {
        /// Coordinates sampled per parameter.
        #[arg(long, default_value_t = 20)]
        coords: usize,
    },
    /// PSF-recovery trials.
    CalibratePsf {
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Phase-mask recovery trials on the 4-f stack.
    CalibratePm {
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Calibrate, then predict the depth of every image of a stack.
    PredictDepth,
    /// A perturbed ground-truth PSF, the target and its image stack.
    MakeSynthetic,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenPsf { .. } => "gen-psf",
            Command::Simulate => "simulate",
            Command::Gradcheck { .. } => "gradcheck",
            Command::CalibratePsf { .. } => "calibrate-psf",
            Command::CalibratePm { .. } => "calibrate-pm",
            Command::PredictDepth => "predict-depth",
            Command::MakeSynthetic => "make-synthetic",
        }
    }
}

enum Failure {
    Usage(String),
    Lib(Error),
    /// Outputs were written but a trial diverged or a check failed.
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(e.into())
    }
}

type Run<T> = Result<T, Failure>;

struct Ctx {
    cfg: ModelConfig,
    out: PathBuf,
    seed: u64,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Run<()> {
        fs::write(self.path(name), contents)?;
        Ok(())
    }
}

fn gen_psf(ctx: &Ctx, defocus_um: f64) -> Run<serde_json::Value> {
    let objective = ctx
        .cfg
        .objective
        .as_ref()
        .ok_or_else(|| Error::Configuration("gen-psf needs an 'objective' section".into()))?;
    let psf = gen_ideal_psf(objective, &ctx.cfg.grid, defocus_um)?;
    write_complex_pfm(ctx.path("psf"), &psf.values)?;
    let irr = psf.irradiance();
    write_pfm(ctx.path("psf_irradiance.pfm"), &irr.values)?;
    write_pgm(ctx.path("psf_irradiance.pgm"), &irr.values)?;
    Ok(json!({ "defocus_um": defocus_um, "total_power": psf.total_power() }))
}

fn simulate(ctx: &Ctx) -> Run<serde_json::Value> {
    let model = ctx.cfg.build_model()?;
    let object = usaf_target(&ctx.cfg.grid)?;
    let depths = &ctx.cfg.experiment.setup.depths_um;
    let images = model.synthesize(std::slice::from_ref(&object), depths)?;
    write_pfm(ctx.path("object.pfm"), &object.values)?;
    write_pgm(ctx.path("object.pgm"), &object.values)?;
    for (i, img) in images.iter().enumerate() {
        write_pfm(ctx.path(&format!("image_{i:02}.pfm")), &img.values)?;
        write_pgm(ctx.path(&format!("image_{i:02}.pgm")), &img.values)?;
    }
    Ok(json!({ "depths_um": depths }))
}

fn gradcheck(ctx: &Ctx, coords: usize) -> Run<serde_json::Value> {
    let n = ctx.cfg.grid.n_side;
    let mut rows: Vec<GradCheck> = primitive_suite(n.min(64), coords, ctx.seed)?;
    if n <= 64 {
        let model = ctx.cfg.build_model()?;
        rows.push(check_model(&model, &ctx.cfg.experiment.setup.depths_um, coords, ctx.seed)?);
    } else {
        eprintln!("grid side {n} > 64: skipping the full-model check");
    }
    let mut csv = String::from("primitive,max_rel_error,coordinates\n");
    for r in &rows {
        csv.push_str(&format!("{},{:e},{}\n", r.name, r.max_rel_error, r.coordinates));
    }
    ctx.write("gradcheck.csv", csv)?;
    let worst = rows.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let summary = json!({ "max_rel_error": worst, "tolerance": 1e-4 });
    if worst > 1e-4 {
        return Err(Failure::Numerical(format!("gradient check failed: max relative error {worst:e}")));
    }
    Ok(summary)
}

fn write_recovery(ctx: &Ctx, run: &RecoveryRun, stem: &str) -> Run<serde_json::Value> {
    ctx.write("trials.csv", trials_csv(&run.reports))?;
    ctx.write("aggregate.json", serde_json::to_string_pretty(&run.aggregate).map_err(Error::from)?)?;
    for (r, a) in run.reports.iter().zip(&run.artifacts) {
        let t = r.trial;
        write_complex_pfm(ctx.path(&format!("trial_{t:03}_{stem}_recovered")), &a.recovered)?;
        write_complex_pfm(ctx.path(&format!("trial_{t:03}_{stem}_ground_truth")), &a.ground_truth)?;
        ctx.write(&format!("trial_{t:03}_loss.csv"), loss_csv(&a.loss_history))?;
    }
    Ok(serde_json::to_value(&run.aggregate).map_err(Error::from)?)
}

fn recovery(ctx: &Ctx, trials: Option<usize>, pm: bool) -> Run<serde_json::Value> {
    let n = trials.unwrap_or(ctx.cfg.experiment.n_trials);
    if n == 0 {
        return Err(Error::Validation(vec!["--trials must be at least 1".into()]).into());
    }
    let setup = &ctx.cfg.experiment.setup;
    let run = if pm {
        run_pm_recovery(setup, n, ctx.seed)?
    } else {
        run_psf_recovery(setup, n, ctx.seed)?
    };
    let summary = write_recovery(ctx, &run, if pm { "mask" } else { "psf" })?;
    if run.aggregate.n_diverged > 0 {
        return Err(Failure::Numerical(format!(
            "{} of {n} trials diverged",
            run.aggregate.n_diverged
        )));
    }
    Ok(summary)
}

fn predict_depth(ctx: &Ctx) -> Run<serde_json::Value> {
    let mut setup = ctx.cfg.experiment.setup.clone();
    setup.depths_um = ctx.cfg.experiment.depth_calibration_um.clone();
    let report = run_depth_experiment(&setup, &ctx.cfg.experiment.depth_grid_um, ctx.seed)?;
    ctx.write("depth.csv", depth_csv(&report.rows))?;
    let summary = json!({
        "mean_abs_error_um": report.mean_abs_error,
        "control_mean_abs_error_um": report.control_mean_abs_error,
        "control_sign_flips": report.control_sign_flips,
        "calibration_nmse": report.calibration_nmse,
    });
    ctx.write("depth_summary.json", serde_json::to_string_pretty(&summary).map_err(Error::from)?)?;
    Ok(summary)
}

fn make_synthetic(ctx: &Ctx) -> Run<serde_json::Value> {
    let setup = &ctx.cfg.experiment.setup;
    setup.validate()?;
    let base = gen_ideal_psf(&setup.objective, &setup.grid, 0.0)?;
    let gt = make_ground_truth_psf(&base, &setup.perturbation.with_seed(ctx.seed))?;
    let object = usaf_target(&setup.grid)?;
    let model = setup.psf_model(&gt.values, false)?;
    let images = model.synthesize(std::slice::from_ref(&object), &setup.depths_um)?;
    write_complex_pfm(ctx.path("ground_truth_psf"), &gt.values)?;
    write_pfm(ctx.path("object.pfm"), &object.values)?;
    write_pgm(ctx.path("object.pgm"), &object.values)?;
    for (i, img) in images.iter().enumerate() {
        write_pfm(ctx.path(&format!("image_{i:02}.pfm")), &img.values)?;
        write_pgm(ctx.path(&format!("image_{i:02}.pgm")), &img.values)?;
    }
    let perturbation = setup.perturbation.with_seed(ctx.seed).sample()?;
    Ok(json!({ "depths_um": setup.depths_um, "perturbation": perturbation }))
}

fn execute(cli: &Cli) -> Run<()> {
    let Some(config_path) = &cli.config else {
        return Err(Failure::Usage("missing --config <path>".into()));
    };
    let mut cfg = load_model_config(config_path)?;
    if let Some(seed) = cli.seed {
        cfg.experiment.seed = seed;
    }
    match &cli.command {
        Command::CalibratePsf { trials: Some(t) } | Command::CalibratePm { trials: Some(t) } => {
            cfg.experiment.n_trials = *t;
        }
        _ => {}
    }
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Validation(vec!["--threads must be at least 1".into()]).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Configuration(e.to_string()))?;
    }
    fs::create_dir_all(&cli.out)?;
    let ctx = Ctx {
        seed: cfg.experiment.seed,
        cfg,
        out: cli.out.clone(),
    };

    let start = Instant::now();
    let outcome = match &cli.command {
        Command::GenPsf { defocus_um } => gen_psf(&ctx, *defocus_um),
        Command::Simulate => simulate(&ctx),
        Command::Gradcheck { coords } => gradcheck(&ctx, *coords),
        Command::CalibratePsf { trials } => recovery(&ctx, *trials, false),
        Command::CalibratePm { trials } => recovery(&ctx, *trials, true),
        Command::PredictDepth => predict_depth(&ctx),
        Command::MakeSynthetic => make_synthetic(&ctx),
    };
    let status = match &outcome {
        Ok(_) => "ok".to_string(),
        Err(Failure::Numerical(m)) => m.clone(),
        Err(_) => return outcome.map(|_| ()),
    };
    let manifest = json!({
        "command": cli.command.name(),
        "seed": ctx.seed,
        "threads": cli.threads.unwrap_or_else(rayon::current_num_threads),
        "config_path": absolute(cli.config.as_deref().expect("checked")),
        "config": ctx.cfg.to_json(),
        "versions": {
            "diffoptics": env!("CARGO_PKG_VERSION"),
            "manifest_format": 1,
        },
        "wall_time_s": start.elapsed().as_secs_f64(),
        "status": status,
        "result": outcome.as_ref().ok(),
    });
    ctx.write(
        "manifest.json",
        serde_json::to_string_pretty(&manifest).map_err(Error::from)?,
    )?;
    outcome.map(|_| ())
}

fn absolute(p: &Path) -> String {
    fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf()).display().to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n");
            eprintln!("{}", Cli::command().render_usage());
            ExitCode::from(1)
        }
        Err(Failure::Lib(e @ Error::Divergence { .. })) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
