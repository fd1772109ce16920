//! JSON configuration: the model's block diagram, its parameters, the
//! optimizer and the experiment settings in one document.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::pfm::{read_complex_pfm, read_pfm};
use crate::autodiff::{ParamKind, ParamSet, TrainableParam};
use crate::blocks::{check_distance, validate_blocks, Block, MicroscopeModel};
use crate::error::{Error, Result};
use crate::experiments::ExperimentSetup;
use crate::field::{ComplexGrid, GridSpec, RealGrid};
use crate::optim::AdamConfig;
use crate::psf::{gen_ideal_psf, ObjectiveSpec};

/// Initial value of a parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "init", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParamInit {
    /// Ideal objective PSF at the given defocus (field parameters only).
    IdealPsf {
        #[serde(default)]
        defocus_um: f64,
    },
    Zero,
    /// Every sample (or the gain) set to `value`.
    Constant { value: f64 },
    /// Loaded from PFM: `path` is a file for real grids and a stem for
    /// complex ones. Relative paths resolve against the config file.
    Pfm { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamConfig {
    pub kind: ParamKind,
    #[serde(flatten)]
    pub init: ParamInit,
    /// Optional box constraint applied after each optimizer step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<(f64, f64)>,
}

/// Experiment settings; the grid and objective come from the top level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n_trials: usize,
    pub seed: u64,
    /// Depths (object space, µm) of the depth-prediction stack.
    pub depth_grid_um: Vec<f64>,
    /// Calibration depths used by the depth-prediction experiment.
    pub depth_calibration_um: Vec<f64>,
    #[serde(flatten)]
    pub setup: ExperimentSetup,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_trials: 20,
            seed: 0,
            depth_grid_um: (0..51).map(|k| -50.0 + 2.0 * k as f64).collect(),
            depth_calibration_um: (0..11).map(|k| -50.0 + 10.0 * k as f64).collect(),
            setup: ExperimentSetup::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub grid: GridSpec,
    pub objective: Option<ObjectiveSpec>,
    pub blocks: Vec<Block>,
    pub params: BTreeMap<String, ParamConfig>,
    pub trainable: Vec<String>,
    pub optimizer: AdamConfig,
    pub experiment: ExperimentConfig,
    /// Directory relative parameter paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

const TOP_LEVEL: [&str; 7] = [
    "grid",
    "objective",
    "blocks",
    "params",
    "trainable",
    "optimizer",
    "experiment",
];

fn field<T: DeserializeOwned>(
    root: &serde_json::Map<String, Value>,
    key: &str,
    errs: &mut Vec<String>,
) -> Option<T> {
    let v = root.get(key)?;
    match serde_json::from_value(v.clone()) {
        Ok(t) => Some(t),
        Err(e) => {
            errs.push(format!("{key}: {e}"));
            None
        }
    }
}

fn placeholder(name: &str, kind: ParamKind, n: usize) -> TrainableParam {
    match kind {
        ParamKind::Phase => TrainableParam::phase(name, &RealGrid::zeros(n)),
        ParamKind::Real => TrainableParam::real(name, &RealGrid::zeros(n)),
        ParamKind::Field => TrainableParam::field(name, &ComplexGrid::zeros(n)),
        ParamKind::LogGain => TrainableParam::log_gain(name, 1.0),
    }
}

/// Parses and fully validates a configuration, reporting every problem
/// found rather than stopping at the first.
pub fn parse_model_config(text: &str) -> Result<ModelConfig> {
    let root: Value = serde_json::from_str(text)
        .map_err(|e| Error::Validation(vec![format!("invalid JSON: {e}")]))?;
    let Value::Object(root) = root else {
        return Err(Error::Validation(vec!["configuration must be a JSON object".into()]));
    };
    let mut errs = Vec::new();
    for key in root.keys() {
        if !TOP_LEVEL.contains(&key.as_str()) {
            errs.push(format!("unknown top-level field '{key}'"));
        }
    }
    for key in ["grid", "blocks"] {
        if !root.contains_key(key) {
            errs.push(format!("missing field '{key}'"));
        }
    }

    let grid: Option<GridSpec> = field(&root, "grid", &mut errs);
    if let Some(g) = &grid {
        if let Err(e) = g.validate() {
            errs.push(format!("grid: {e}"));
        }
    }
    let objective: Option<ObjectiveSpec> = field(&root, "objective", &mut errs);
    if let Some(o) = &objective {
        if let Err(e) = o.validate() {
            errs.push(format!("objective: {e}"));
        }
    }

    let mut blocks = Vec::new();
    let mut blocks_ok = true;
    match root.get("blocks") {
        Some(Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                match serde_json::from_value::<Block>(item.clone()) {
                    Ok(b) => {
                        if let Block::Wp(wp) = &b {
                            if let Err(e) = check_distance(wp.distance_um) {
                                errs.push(format!("blocks[{i}] (wp): {e}"));
                            }
                        }
                        blocks.push(b);
                    }
                    Err(e) => {
                        blocks_ok = false;
                        errs.push(format!("blocks[{i}]: {e}"));
                    }
                }
            }
        }
        Some(_) => {
            blocks_ok = false;
            errs.push("blocks: expected an array".into());
        }
        None => blocks_ok = false,
    }

    let mut params = BTreeMap::new();
    match root.get("params") {
        Some(Value::Object(map)) => {
            for (name, v) in map {
                match serde_json::from_value::<ParamConfig>(v.clone()) {
                    Ok(p) => {
                        if matches!(p.init, ParamInit::IdealPsf { .. }) {
                            if p.kind != ParamKind::Field {
                                errs.push(format!("params.{name}: ideal_psf initializes field parameters only"));
                            }
                            if objective.is_none() {
                                errs.push(format!("params.{name}: ideal_psf needs an 'objective' section"));
                            }
                        }
                        if let Some((lo, hi)) = p.bounds {
                            if !(lo < hi) {
                                errs.push(format!("params.{name}: bounds must satisfy lo < hi"));
                            }
                        }
                        params.insert(name.clone(), p);
                    }
                    Err(e) => errs.push(format!("params.{name}: {e}")),
                }
            }
        }
        Some(_) => errs.push("params: expected an object".into()),
        None => {}
    }

    let trainable: Vec<String> = field(&root, "trainable", &mut errs).unwrap_or_default();
    let referenced: Vec<String> = blocks
        .iter()
        .flat_map(|b| match b {
            Block::PsfSource { param } | Block::PhaseMask { param } => vec![param.clone()],
            Block::Camera { gain: Some(g) } => vec![g.clone()],
            _ => vec![],
        })
        .collect();
    for name in &trainable {
        if !params.contains_key(name) {
            errs.push(format!("trainable parameter '{name}' is not declared in params"));
        }
        if !referenced.contains(name) {
            errs.push(format!("trainable parameter '{name}' is not referenced by any block"));
        }
    }

    let optimizer: AdamConfig = field(&root, "optimizer", &mut errs).unwrap_or_default();
    if let Err(Error::Validation(v)) = optimizer.validate() {
        errs.extend(v);
    }
    let mut experiment: ExperimentConfig =
        field(&root, "experiment", &mut errs).unwrap_or_default();
    if let Some(g) = grid {
        experiment.setup.grid = g;
    }
    if let Some(o) = objective {
        experiment.setup.objective = o;
    }
    if experiment.n_trials == 0 {
        errs.push("experiment.n_trials must be at least 1".into());
    }

    if let (Some(g), true) = (grid, blocks_ok) {
        let mut set = ParamSet::new();
        for (name, p) in &params {
            let _ = set.insert(placeholder(name, p.kind, g.n_side));
        }
        errs.extend(validate_blocks(&g, &blocks, &set));
    }

    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    Ok(ModelConfig {
        grid: grid.expect("validated"),
        objective,
        blocks,
        params,
        trainable,
        optimizer,
        experiment,
        base_dir: PathBuf::new(),
    })
}

/// Reads and validates a configuration file.
pub fn load_model_config(path: impl AsRef<Path>) -> Result<ModelConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut cfg = parse_model_config(&text)?;
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(cfg)
}

impl ModelConfig {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn initial_param(&self, name: &str, p: &ParamConfig) -> Result<TrainableParam> {
        let n = self.grid.n_side;
        let sized = |side: usize| {
            if side == n {
                Ok(())
            } else {
                Err(Error::dim(format!("params.{name}: file holds side {side}, grid is {n}")))
            }
        };
        let mut param = match (&p.init, p.kind) {
            (ParamInit::IdealPsf { defocus_um }, ParamKind::Field) => {
                let objective = self.objective.as_ref().ok_or_else(|| {
                    Error::Configuration("ideal_psf needs an objective".into())
                })?;
                let psf = gen_ideal_psf(objective, &self.grid, *defocus_um)?;
                TrainableParam::field(name, &psf.values)
            }
            (ParamInit::IdealPsf { .. }, _) => {
                return Err(Error::Configuration(format!(
                    "params.{name}: ideal_psf initializes field parameters only"
                )))
            }
            (ParamInit::Zero, kind) => placeholder(name, kind, n),
            (ParamInit::Constant { value }, ParamKind::LogGain) => {
                let mut g = TrainableParam::log_gain(name, 1.0);
                g.values[0] = *value;
                g
            }
            (ParamInit::Constant { value }, kind) => {
                let mut g = placeholder(name, kind, n);
                let len = if kind == ParamKind::Field { n * n } else { g.values.len() };
                g.values[..len].iter_mut().for_each(|v| *v = *value);
                g
            }
            (ParamInit::Pfm { path }, ParamKind::Field) => {
                let u = read_complex_pfm(self.resolve(path))?;
                sized(u.side())?;
                TrainableParam::field(name, &u)
            }
            (ParamInit::Pfm { path }, kind) => {
                let g = read_pfm(self.resolve(path))?;
                sized(g.side())?;
                match kind {
                    ParamKind::Phase => TrainableParam::phase(name, &g),
                    _ => TrainableParam::real(name, &g),
                }
            }
        };
        param = param.trainable(self.trainable.iter().any(|t| t == name));
        if let Some((lo, hi)) = p.bounds {
            param = param.with_bounds(lo, hi);
        }
        Ok(param)
    }

    /// Builds the model with its initial parameter values.
    pub fn build_model(&self) -> Result<MicroscopeModel> {
        let mut set = ParamSet::new();
        for (name, p) in &self.params {
            set.insert(self.initial_param(name, p)?)?;
        }
        let axial = self
            .objective
            .as_ref()
            .map(ObjectiveSpec::axial_magnification)
            .unwrap_or(1.0);
        Ok(MicroscopeModel::new(self.grid, self.blocks.clone(), set)?.with_axial_scale(axial))
    }

    /// The configuration as JSON, for run manifests.
    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("configuration serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const FOUR_F: &str = r#"{
        "grid": {"n_side": 32, "pitch_um": 4.0, "wavelength_um": 0.5},
        "blocks": [
            {"kind": "psf_source", "param": "src"},
            {"kind": "wp", "distance_um": 300.0},
            {"kind": "lens", "focal_length_um": 1024.0, "pupil_radius_um": 50.0},
            {"kind": "phase_mask", "param": "mask"},
            {"kind": "lens", "focal_length_um": 1024.0, "pupil_radius_um": 50.0},
            {"kind": "camera"}
        ],
        "params": {
            "src": {"kind": "field", "init": "constant", "value": 1.0},
            "mask": {"kind": "phase", "init": "zero"}
        },
        "trainable": ["mask"]
    }"#;

    fn errors(text: &str) -> Vec<String> {
        match parse_model_config(text) {
            Err(Error::Validation(v)) => v,
            other => panic!("expected validation errors, got {other:?}"),
        }
    }

    #[test]
    fn four_f_config_validates_and_builds() {
        let cfg = parse_model_config(FOUR_F).unwrap();
        assert_eq!(cfg.blocks.len(), 6);
        let model = cfg.build_model().unwrap();
        assert!(model.params.get("mask").unwrap().trainable);
        assert!(!model.params.get("src").unwrap().trainable);
    }

    #[test]
    fn short_propagation_cites_minimum_distance() {
        let text = FOUR_F.replace("\"distance_um\": 300.0", "\"distance_um\": 100.0");
        let errs = errors(&text);
        assert!(errs.iter().any(|e| e.contains("minimum distance")), "{errs:?}");
    }

    #[test]
    fn unreferenced_trainable_reported() {
        let text = FOUR_F.replace("\"trainable\": [\"mask\"]", "\"trainable\": [\"mask\", \"ghost\"]");
        let errs = errors(&text);
        assert!(errs.iter().any(|e| e.contains("'ghost' is not referenced")), "{errs:?}");
    }

    #[test]
    fn collects_every_error() {
        let text = FOUR_F
            .replace("\"distance_um\": 300.0", "\"distance_um\": 50.0")
            .replace("\"kind\": \"camera\"", "\"kind\": \"telescope\"")
            .replace("\"trainable\": [\"mask\"]", "\"trainable\": [\"ghost\"], \"extra\": 1");
        let errs = errors(&text);
        assert!(errs.iter().any(|e| e.contains("minimum distance")));
        assert!(errs.iter().any(|e| e.contains("blocks[5]")));
        assert!(errs.iter().any(|e| e.contains("ghost")));
        assert!(errs.iter().any(|e| e.contains("'extra'")));
    }

    #[test]
    fn lens_pitch_mismatch_reported() {
        let text = FOUR_F.replacen("\"focal_length_um\": 1024.0", "\"focal_length_um\": 2048.0", 1);
        assert!(!errors(&text).is_empty());
    }

    #[test]
    fn missing_grid_and_bad_json() {
        assert!(!errors(r#"{"blocks": []}"#).is_empty());
        assert!(!errors("{ not json").is_empty());
    }
}
