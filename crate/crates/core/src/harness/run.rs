use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method};
use super::trial::{evaluate, load_base, prepare, Timings, TrialResult};
use crate::error::{Error, Result};
use crate::metrics::{mean_std, EvalReport};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Contents of `results.json`: enough to rerun the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    pub version: String,
    pub config: ExperimentConfig,
    pub trials: Vec<TrialResult>,
    pub summary: Vec<SummaryRow>,
}

/// `(mean, population stddev)` over trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Option<Self> {
        let v: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
        if v.is_empty() {
            return None;
        }
        let (mean, std) = mean_std(&v);
        Some(Self { mean, std })
    }
}

/// One line of `table.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub coverage: Stat,
    pub test_error: Stat,
    pub mean_size: Stat,
    pub mae: Option<Stat>,
    pub mean_passes: Stat,
    pub singleton_fraction: Option<Stat>,
    pub mean_top_confidence: Option<Stat>,
}

pub const TABLE_HEADER: [&str; 15] = [
    "method",
    "coverage_mean",
    "coverage_std",
    "test_error_mean",
    "test_error_std",
    "size_mean",
    "size_std",
    "mae_mean",
    "mae_std",
    "passes_mean",
    "passes_std",
    "singleton_fraction_mean",
    "singleton_fraction_std",
    "top_confidence_mean",
    "top_confidence_std",
];

impl SummaryRow {
    pub fn csv_record(&self) -> Vec<String> {
        let two = |s: Stat| [s.mean.to_string(), s.std.to_string()];
        let opt = |s: Option<Stat>| s.map_or([String::new(), String::new()], two);
        let mut r = vec![self.method.to_string()];
        r.extend(two(self.coverage));
        r.extend(two(self.test_error));
        r.extend(two(self.mean_size));
        r.extend(opt(self.mae));
        r.extend(two(self.mean_passes));
        r.extend(opt(self.singleton_fraction));
        r.extend(opt(self.mean_top_confidence));
        r
    }
}

pub fn summarize(methods: &[Method], trials: &[TrialResult]) -> Vec<SummaryRow> {
    methods
        .iter()
        .filter_map(|&m| {
            let reps: Vec<&EvalReport> = trials.iter().filter_map(|t| t.reports.get(&m)).collect();
            if reps.is_empty() {
                return None;
            }
            let col = |f: &dyn Fn(&EvalReport) -> f64| Stat::of(&reps.iter().map(|r| f(r)).collect::<Vec<_>>());
            let opt = |f: &dyn Fn(&EvalReport) -> Option<f64>| {
                Stat::of(&reps.iter().map(|r| f(r).unwrap_or(f64::NAN)).collect::<Vec<_>>())
            };
            Some(SummaryRow {
                method: m,
                coverage: col(&|r| r.coverage)?,
                test_error: col(&|r| r.test_error)?,
                mean_size: col(&|r| r.mean_size)?,
                mae: opt(&|r| r.mae),
                mean_passes: col(&|r| r.mean_passes)?,
                singleton_fraction: opt(&|r| r.singleton_fraction),
                mean_top_confidence: opt(&|r| r.mean_top_confidence),
            })
        })
        .collect()
}

/// Trains, calibrates and evaluates every trial. Trials run in parallel;
/// the output is ordered by trial index.
pub fn run(cfg: &ExperimentConfig) -> Result<(RunResults, Vec<Timings>)> {
    cfg.validate()?;
    let base = load_base(cfg)?;
    let methods = cfg.methods();
    let per_trial: Vec<(TrialResult, Timings)> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let prep = prepare(cfg, base.as_ref(), t)?;
            evaluate(cfg, &prep, &cfg.adaptive, &methods)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .enumerate()
        .map(|(t, r)| r.map_err(|e| trial_error(cfg, t, e)))
        .collect::<Result<_>>()?;
    let (trials, timings): (Vec<_>, Vec<_>) = per_trial.into_iter().unzip();
    let summary = summarize(&methods, &trials);
    Ok((
        RunResults {
            version: VERSION.to_owned(),
            config: cfg.clone(),
            trials,
            summary,
        },
        timings,
    ))
}

pub(crate) fn trial_error(cfg: &ExperimentConfig, trial: usize, e: Error) -> Error {
    match e {
        Error::Config { .. } => e,
        e => {
            log::error!(
                "trial {trial} (seed {}) failed: {e}",
                super::trial::trial_seed(cfg.master_seed, trial)
            );
            e
        }
    }
}

/// `run`, writing `results.json`, `table.csv` and `timing.csv` into `out`.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<RunResults> {
    let (results, timings) = run(cfg)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("results.json"), serde_json::to_string_pretty(&results)?)?;
    write_table(&results.summary, &out.join("table.csv"))?;
    write_timings(&timings, &out.join("timing.csv"))?;
    Ok(results)
}

pub fn write_table(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TABLE_HEADER)?;
    for r in rows {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

fn write_timings(timings: &[Timings], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["trial", "method", "ms_per_input"])?;
    for (t, per) in timings.iter().enumerate() {
        for (m, ms) in per {
            w.write_record([t.to_string(), m.to_string(), format!("{ms:.6}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-method report lists across trials.
pub fn reports_by_method(results: &RunResults) -> BTreeMap<Method, Vec<EvalReport>> {
    let mut out: BTreeMap<Method, Vec<EvalReport>> = BTreeMap::new();
    for t in &results.trials {
        for (m, r) in &t.reports {
            out.entry(*m).or_default().push(r.clone());
        }
    }
    out
}
