use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method};
use super::run::{trial_error, Stat, VERSION};
use super::trial::{evaluate, load_base, prepare, Prepared};
use crate::adaptive::AdaptiveConfig;
use crate::data::Task;
use crate::error::{Error, Result};

pub const DEFAULT_DELTAS: [f64; 5] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];
pub const DEFAULT_PATIENCES: [usize; 3] = [1, 10, 100];

/// MC-CP at one `(delta, patience)` setting, averaged over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCell {
    pub delta: f64,
    pub patience: usize,
    /// Forward passes pooled over every evaluated input of every trial.
    pub passes: Stat,
    pub coverage: Stat,
    pub mean_size: Stat,
    pub test_error: Option<Stat>,
    pub mae: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResults {
    pub version: String,
    pub config: ExperimentConfig,
    pub cells: Vec<SensitivityCell>,
}

pub const SENSITIVITY_HEADER: [&str; 12] = [
    "delta",
    "patience",
    "passes_mean",
    "passes_std",
    "coverage_mean",
    "coverage_std",
    "size_mean",
    "size_std",
    "test_error_mean",
    "test_error_std",
    "mae_mean",
    "mae_std",
];

fn stat(values: &[f64]) -> Stat {
    let (mean, std) = crate::metrics::mean_std(values);
    Stat { mean, std }
}

/// Pools per-group `(n, mean, population std)` into one mean and std.
fn pooled(groups: &[(usize, f64, f64)]) -> Stat {
    let n: usize = groups.iter().map(|g| g.0).sum();
    let mean = groups.iter().map(|&(k, m, _)| k as f64 * m).sum::<f64>() / n as f64;
    let var = groups
        .iter()
        .map(|&(k, m, s)| k as f64 * (s * s + (m - mean).powi(2)))
        .sum::<f64>()
        / n as f64;
    Stat { mean, std: var.sqrt() }
}

/// Full `deltas × patiences` grid of MC-CP, the config's `max_passes` kept.
/// Models and splits are shared by every cell.
pub fn sensitivity(cfg: &ExperimentConfig, deltas: &[f64], patiences: &[usize]) -> Result<SensitivityResults> {
    cfg.validate()?;
    if deltas.is_empty() || patiences.is_empty() {
        return Err(Error::config("grid", "delta and patience grids must be non-empty"));
    }
    for (i, d) in deltas.iter().enumerate() {
        if d.is_nan() || *d < 0.0 {
            return Err(Error::config(format!("deltas[{i}]"), format!("{d}")));
        }
    }
    if let Some(i) = patiences.iter().position(|p| *p == 0) {
        return Err(Error::config(format!("patiences[{i}]"), "must be positive"));
    }
    let base = load_base(cfg)?;
    let preps: Vec<Prepared> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| prepare(cfg, base.as_ref(), t).map_err(|e| trial_error(cfg, t, e)))
        .collect::<Result<_>>()?;

    let grid: Vec<(f64, usize)> = deltas.iter().flat_map(|&d| patiences.iter().map(move |&p| (d, p))).collect();
    let cells = grid
        .into_iter()
        .map(|(delta, patience)| {
            let adaptive = AdaptiveConfig {
                delta,
                patience,
                ..cfg.adaptive
            };
            let reports = preps
                .iter()
                .map(|p| Ok(evaluate(cfg, p, &adaptive, &[Method::McCp])?.0.reports[&Method::McCp].clone()))
                .collect::<Result<Vec<_>>>()?;
            let col = |f: fn(&crate::metrics::EvalReport) -> f64| stat(&reports.iter().map(f).collect::<Vec<_>>());
            let groups: Vec<_> = preps
                .iter()
                .zip(&reports)
                .map(|(p, r)| (p.eval_len(cfg), r.mean_passes, r.passes_stddev))
                .collect();
            Ok(SensitivityCell {
                delta,
                patience,
                passes: pooled(&groups),
                coverage: col(|r| r.coverage),
                mean_size: col(|r| r.mean_size),
                test_error: (cfg.task == Task::Classification).then(|| col(|r| r.test_error)),
                mae: (cfg.task == Task::Regression).then(|| col(|r| r.mae.unwrap_or(f64::NAN))),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SensitivityResults {
        version: VERSION.to_owned(),
        config: cfg.clone(),
        cells,
    })
}

/// `sensitivity`, writing `sensitivity.json` and `sensitivity.csv`.
pub fn cmd_sensitivity(
    cfg: &ExperimentConfig,
    deltas: &[f64],
    patiences: &[usize],
    out: &Path,
) -> Result<SensitivityResults> {
    let res = sensitivity(cfg, deltas, patiences)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("sensitivity.json"), serde_json::to_string_pretty(&res)?)?;
    let mut w = csv::Writer::from_path(out.join("sensitivity.csv"))?;
    w.write_record(SENSITIVITY_HEADER)?;
    for c in &res.cells {
        let two = |s: Stat| [s.mean.to_string(), s.std.to_string()];
        let opt = |s: Option<Stat>| s.map_or([String::new(), String::new()], two);
        let mut rec = vec![c.delta.to_string(), c.patience.to_string()];
        rec.extend(two(c.passes));
        rec.extend(two(c.coverage));
        rec.extend(two(c.mean_size));
        rec.extend(opt(c.test_error));
        rec.extend(opt(c.mae));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(res)
}

/// Number of adjacent pairs where `values` decreases.
pub fn inversions(values: &[f64]) -> usize {
    values.windows(2).filter(|w| w[1] < w[0]).count()
}
