//! Experiment runner: multi-trial train / calibrate / evaluate pipelines,
//! sensitivity grids, variance traces and plot data, all driven by an
//! [`ExperimentConfig`].
//!
//! Every output file is a pure function of the config; wall-clock timing
//! goes to a separate `timing.csv` so that `results.json` reruns
//! bit-identically.

pub mod config;
pub mod run;
pub mod sensitivity;
pub mod trace;
pub mod trial;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use config::{
    CalibrationSource, ConformalConfig, DatasetSource, ExperimentConfig, Method, ModelConfig, TrainSettings,
};
pub use run::{cmd_run, run, summarize, RunResults, Stat, SummaryRow, TABLE_HEADER, VERSION};
pub use sensitivity::{cmd_sensitivity, sensitivity, SensitivityCell, SensitivityResults, DEFAULT_DELTAS, DEFAULT_PATIENCES};
pub use trace::{cmd_quantile_plotdata, cmd_trace, plotdata_header, quantile_plotdata, trace};
pub use trial::{evaluate, prepare, Prepared, TrialResult};

use crate::data::Task;
use crate::error::{Error, Result};
use crate::nn::{grad_check, Loss, Mlp};

/// Writes trial 0's dataset (before splitting) to `out/dataset.csv`.
pub fn cmd_synth(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    if matches!(cfg.dataset, DatasetSource::Csv { .. } | DatasetSource::Replay { .. }) {
        return Err(Error::config("dataset.kind", "synth needs a synthetic source"));
    }
    let ds = trial::trial_dataset(cfg, None, trial::trial_seed(cfg.master_seed, 0))?;
    std::fs::create_dir_all(out)?;
    ds.write_csv(out.join("dataset.csv"))
}

/// Largest gradient-check error allowed by `cmd_gradcheck`.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub loss: Loss,
    pub batch: usize,
    pub max_relative_error: f64,
    pub passed: bool,
}

/// Finite-difference check of the config's freshly initialized network on
/// up to 16 training rows of trial 0. Regression rows within `1e-3` of a
/// pinball kink are skipped.
pub fn gradcheck(cfg: &ExperimentConfig) -> Result<GradcheckReport> {
    cfg.validate()?;
    let base = trial::load_base(cfg)?;
    let seed = trial::trial_seed(cfg.master_seed, 0);
    let ds = trial::trial_dataset(cfg, base.as_ref(), seed)?;
    let splits = crate::data::split(&ds, &cfg.split_spec(seed))?;
    let spec = cfg.model().spec(cfg.task, ds.dim(), ds.num_classes());
    let mlp = Mlp::init(&spec, seed)?;
    let loss = cfg.train_config(seed).loss;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (x, &y) in splits.train.features.iter().zip(&splits.train.targets) {
        if xs.len() == 16 {
            break;
        }
        if cfg.task == Task::Regression {
            let out = mlp.forward(x, None)?;
            if out.iter().any(|o| (y - o).abs() < 1e-3) {
                continue;
            }
        }
        xs.push(x.clone());
        ys.push(y);
    }
    let err = grad_check(&mlp, &xs, &ys, &loss)?;
    Ok(GradcheckReport {
        loss,
        batch: xs.len(),
        max_relative_error: err,
        passed: err <= GRADCHECK_TOLERANCE,
    })
}

pub fn cmd_gradcheck(cfg: &ExperimentConfig, out: &Path) -> Result<GradcheckReport> {
    let rep = gradcheck(cfg)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("gradcheck.json"), serde_json::to_string_pretty(&rep)?)?;
    Ok(rep)
}
