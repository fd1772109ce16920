//! NMSE loss, Adam, and the calibration loop that fits model parameters to
//! observed images of a known object.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamKind, ParamSet, Tape};
use crate::blocks::{prepare_object, MicroscopeModel};
use crate::error::{Error, Result};
use crate::stack::DepthStack;

/// `‖i − k‖² / ‖i‖²`.
pub fn nmse(i: &[f64], k: &[f64]) -> Result<f64> {
    if i.len() != k.len() {
        return Err(Error::dim(format!(
            "nmse of {} against {} samples",
            i.len(),
            k.len()
        )));
    }
    let energy: f64 = i.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Err(Error::DegenerateReference);
    }
    let err: f64 = i.iter().zip(k).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(err / energy)
}

/// Adam hyperparameters and stopping rule. Step sizes are chosen per
/// parameter kind.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    /// Step size for generic real grids.
    pub lr: f64,
    pub lr_phase: f64,
    pub lr_field: f64,
    pub lr_gain: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_iters: usize,
    pub plateau_patience: usize,
    pub plateau_tol: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-2,
            lr_phase: 1e-2,
            lr_field: 1e-3,
            lr_gain: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_iters: 2000,
            plateau_patience: 100,
            plateau_tol: 1e-5,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        for (name, v) in [
            ("lr", self.lr),
            ("lr_phase", self.lr_phase),
            ("lr_field", self.lr_field),
            ("lr_gain", self.lr_gain),
            ("eps", self.eps),
        ] {
            if !(v.is_finite() && v > 0.0) {
                errs.push(format!("optimizer.{name} must be positive, got {v}"));
            }
        }
        if !(self.beta1 > 0.0 && self.beta1 < self.beta2 && self.beta2 < 1.0) {
            errs.push(format!(
                "optimizer betas must satisfy 0 < beta1 < beta2 < 1, got ({}, {})",
                self.beta1, self.beta2
            ));
        }
        if self.max_iters == 0 {
            errs.push("optimizer.max_iters must be at least 1".into());
        }
        if !(self.plateau_tol >= 0.0) {
            errs.push("optimizer.plateau_tol must be non-negative".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn lr_for(&self, kind: ParamKind) -> f64 {
        match kind {
            ParamKind::Phase => self.lr_phase,
            ParamKind::Field => self.lr_field,
            ParamKind::LogGain => self.lr_gain,
            ParamKind::Real => self.lr,
        }
    }
}

/// One bias-corrected Adam update of every trainable parameter.
pub fn adam_step(params: &mut ParamSet, cfg: &AdamConfig) -> Result<()> {
    if let Some(p) = params.iter().find(|p| p.trainable && !p.grad_is_fresh()) {
        return Err(Error::State(format!(
            "parameter '{}' has no gradient from a backward pass since its last update",
            p.name
        )));
    }
    for p in params.iter_mut().filter(|p| p.trainable) {
        let lr = cfg.lr_for(p.kind);
        p.adam.step += 1;
        let t = p.adam.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..p.values.len() {
            let g = p.grad[i];
            let m = cfg.beta1 * p.adam.m[i] + (1.0 - cfg.beta1) * g;
            let v = cfg.beta2 * p.adam.v[i] + (1.0 - cfg.beta2) * g * g;
            p.adam.m[i] = m;
            p.adam.v[i] = v;
            let step = lr * (m / c1) / ((v / c2).sqrt() + cfg.eps);
            let mut x = p.values[i] - step;
            if let Some((lo, hi)) = p.bounds {
                x = x.clamp(lo, hi);
            }
            p.values[i] = x;
        }
        p.grad_fresh = false;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    Plateau,
}

#[derive(Clone, Debug)]
pub struct CalibrationResult {
    /// Best-loss parameter values by name.
    pub final_params: Vec<(String, Vec<f64>)>,
    /// Loss at every evaluated iterate, starting with the initial parameters.
    pub loss_history: Vec<f64>,
    /// Loss recomputed at the returned parameters.
    pub image_nmse: f64,
    pub param_nmse: Option<f64>,
    pub best_iteration: usize,
    pub stop: StopReason,
}

impl CalibrationResult {
    pub fn initial_loss(&self) -> f64 {
        self.loss_history[0]
    }

    pub fn iterations(&self) -> usize {
        self.loss_history.len()
    }
}

/// Precomputed pieces of the calibration objective.
struct Objective {
    object: Arc<crate::spectral::SpectralFilter>,
    references: Vec<Arc<Vec<f64>>>,
    depths: Vec<f64>,
    start: usize,
    prefixes: Vec<Option<crate::field::ComplexGrid>>,
}

impl Objective {
    fn new(model: &MicroscopeModel, obs: &DepthStack) -> Result<Self> {
        let object = prepare_object(&obs.object)?;
        let references = obs
            .images
            .iter()
            .map(|i| Arc::new(i.values.as_slice().to_vec()))
            .collect();
        let start = model.first_trainable_block();
        // blocks before the first trainable one are constant; evaluate once
        let prefixes = obs
            .depths_um
            .iter()
            .map(|&d| {
                if start == 0 {
                    Ok(None)
                } else {
                    model.field_before(start, d).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Objective {
            object,
            references,
            depths: obs.depths_um.clone(),
            start,
            prefixes,
        })
    }

    fn record(&self, model: &MicroscopeModel, tape: &mut Tape) -> Result<crate::autodiff::Var> {
        let end = model.blocks().len();
        let mut losses = Vec::with_capacity(self.depths.len());
        for ((&d, reference), prefix) in self.depths.iter().zip(&self.references).zip(&self.prefixes) {
            let input = prefix.as_ref().map(|f| tape.leaf_complex(f));
            let img = model.record_range(tape, self.start..end, input, d, Some(&self.object))?;
            losses.push(tape.nmse(reference.clone(), img)?);
        }
        tape.mean(&losses)
    }
}

/// Mean per-depth NMSE between the observations and the model's images at
/// the current parameters.
pub fn stack_loss(model: &MicroscopeModel, obs: &DepthStack) -> Result<f64> {
    let objective = Objective::new(model, obs)?;
    let mut tape = Tape::new();
    let loss = objective.record(model, &mut tape)?;
    tape.scalar(loss)
}

/// Fits the trainable parameters of `model` to `obs` by Adam on the mean
/// per-depth NMSE. Stops at `max_iters` or when the best loss has not
/// improved by a relative `plateau_tol` for `plateau_patience` iterations.
/// The model is left holding the best parameters seen.
pub fn calibrate(
    model: &mut MicroscopeModel,
    obs: &DepthStack,
    cfg: &AdamConfig,
) -> Result<CalibrationResult> {
    cfg.validate()?;
    if obs.is_empty() {
        return Err(Error::param("calibration needs at least one observation"));
    }
    if !model.params.iter().any(|p| p.trainable) {
        return Err(Error::Configuration("model has no trainable parameters".into()));
    }
    for &d in &obs.depths_um {
        model.propagation_distance(d)?;
    }
    let objective = Objective::new(model, obs)?;

    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut best_iteration = 0;
    let mut snapshot = model.params.snapshot();
    let mut stall = 0usize;
    let mut stop = StopReason::MaxIters;

    for it in 0..cfg.max_iters {
        let mut tape = Tape::new();
        let loss_var = objective.record(model, &mut tape)?;
        let loss = tape.scalar(loss_var)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { iteration: it, loss });
        }
        history.push(loss);
        if loss < best * (1.0 - cfg.plateau_tol) {
            stall = 0;
        } else {
            stall += 1;
        }
        if loss < best {
            best = loss;
            best_iteration = it;
            snapshot = model.params.snapshot();
        }
        if stall >= cfg.plateau_patience {
            stop = StopReason::Plateau;
            break;
        }
        if it + 1 == cfg.max_iters {
            break;
        }
        tape.backward_into(loss_var, &mut model.params)?;
        adam_step(&mut model.params, cfg)?;
    }

    model.params.restore(&snapshot)?;
    let mut tape = Tape::new();
    let v = objective.record(model, &mut tape)?;
    let image_nmse = tape.scalar(v)?;

    Ok(CalibrationResult {
        final_params: model
            .params
            .iter()
            .map(|p| (p.name.clone(), p.values.clone()))
            .collect(),
        loss_history: history,
        image_nmse,
        param_nmse: None,
        best_iteration,
        stop,
    })
}
