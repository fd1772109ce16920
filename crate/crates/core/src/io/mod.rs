//! File formats and configuration.

mod config;
mod pfm;
mod pgm;

pub use config::{
    load_model_config, parse_model_config, ExperimentConfig, ModelConfig, ParamConfig, ParamInit,
};
pub use pfm::{decode_pfm, encode_pfm, read_complex_pfm, read_pfm, write_complex_pfm, write_pfm};
pub use pgm::{encode_pgm, write_pgm};

use crate::experiments::{DepthRow, TrialReport};

/// `trial,seed,label,initial_nmse,image_nmse,param_nmse,iters,diverged`.
pub fn trials_csv(reports: &[TrialReport]) -> String {
    let mut out = String::from("trial,seed,label,initial_nmse,image_nmse,param_nmse,iters,diverged\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{:e},{:e},{:e},{},{}\n",
            r.trial, r.seed, r.label, r.initial_nmse, r.image_nmse, r.param_nmse, r.iterations, r.diverged
        ));
    }
    out
}

/// `iteration,nmse`.
pub fn loss_csv(history: &[f64]) -> String {
    let mut out = String::from("iteration,nmse\n");
    for (i, l) in history.iter().enumerate() {
        out.push_str(&format!("{i},{l:e}\n"));
    }
    out
}

/// `true_depth,predicted_depth,control_depth`.
pub fn depth_csv(rows: &[DepthRow]) -> String {
    let mut out = String::from("true_depth,predicted_depth,control_depth\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.true_depth, r.predicted_depth, r.control_depth));
    }
    out
}
