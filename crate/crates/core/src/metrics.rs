//! Evaluation quantities: coverage, efficiency (set size / interval width),
//! test error, singleton statistics, top confidence, MAE and per-class
//! coverage.
//!
//! Test error of a set-valued predictor is the fraction of samples whose set
//! misses the truth, so `test_error + coverage == 1` by construction. For a
//! point predictor wrapped as singleton sets it is plain top-1 error.
//! Every `±` figure uses the population standard deviation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{PredictionInterval, PredictionSet, ProbVector};

/// A prediction region that may or may not contain the truth.
pub trait Region {
    type Truth: Copy;
    fn covers(&self, truth: Self::Truth) -> bool;
    /// Cardinality for sets, width for intervals.
    fn size(&self) -> f64;
}

impl Region for PredictionSet {
    type Truth = usize;
    fn covers(&self, truth: usize) -> bool {
        self.contains(truth)
    }
    fn size(&self) -> f64 {
        self.len() as f64
    }
}

impl Region for PredictionInterval {
    type Truth = f64;
    fn covers(&self, truth: f64) -> bool {
        self.contains(truth)
    }
    fn size(&self) -> f64 {
        self.width()
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, got: b });
    }
    if a == 0 {
        return Err(Error::Empty("evaluation set"));
    }
    Ok(())
}

/// Fraction of regions containing their truth. Empty regions are misses.
pub fn coverage<R: Region>(outputs: &[R], truths: &[R::Truth]) -> Result<f64> {
    check_lengths(outputs.len(), truths.len())?;
    let hits = outputs.iter().zip(truths).filter(|(r, t)| r.covers(**t)).count();
    Ok(hits as f64 / outputs.len() as f64)
}

/// Population mean and standard deviation of a sample.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and population stddev of region sizes.
pub fn mean_size<R: Region>(outputs: &[R]) -> Result<(f64, f64)> {
    if outputs.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let sizes: Vec<f64> = outputs.iter().map(Region::size).collect();
    Ok(mean_std(&sizes))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingletonStats {
    pub singleton_fraction: f64,
    /// Coverage among `|C| = 1`; absent when there are none.
    pub singleton_accuracy: Option<f64>,
    /// Coverage among the rest (`|C| != 1`, empty sets included as misses).
    pub mixed_accuracy: Option<f64>,
}

pub fn singleton_stats(sets: &[PredictionSet], truths: &[usize]) -> Result<SingletonStats> {
    check_lengths(sets.len(), truths.len())?;
    let (mut single, mut single_hit, mut mixed, mut mixed_hit) = (0usize, 0usize, 0usize, 0usize);
    for (s, &t) in sets.iter().zip(truths) {
        let hit = s.contains(t) as usize;
        if s.len() == 1 {
            single += 1;
            single_hit += hit;
        } else {
            mixed += 1;
            mixed_hit += hit;
        }
    }
    let ratio = |h: usize, n: usize| (n > 0).then(|| h as f64 / n as f64);
    Ok(SingletonStats {
        singleton_fraction: single as f64 / sets.len() as f64,
        singleton_accuracy: ratio(single_hit, single),
        mixed_accuracy: ratio(mixed_hit, mixed),
    })
}

/// Mean over samples of the largest class probability.
pub fn mean_top_confidence(probs: &[ProbVector]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::Empty("probability vectors"));
    }
    Ok(probs.iter().map(ProbVector::top).sum::<f64>() / probs.len() as f64)
}

/// Coverage restricted to each true class; `None` for classes that never
/// occur.
pub fn per_class_coverage(
    sets: &[PredictionSet],
    truths: &[usize],
    num_classes: usize,
) -> Result<Vec<Option<f64>>> {
    check_lengths(sets.len(), truths.len())?;
    let mut seen = vec![0usize; num_classes];
    let mut hit = vec![0usize; num_classes];
    for (s, &t) in sets.iter().zip(truths) {
        if t >= num_classes {
            return Err(Error::invalid(format!("label {t} out of range")));
        }
        seen[t] += 1;
        hit[t] += s.contains(t) as usize;
    }
    Ok(seen
        .iter()
        .zip(&hit)
        .map(|(&n, &h)| (n > 0).then(|| h as f64 / n as f64))
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaeMode {
    /// `|(lo + hi)/2 - y|` over non-empty, finite intervals.
    #[default]
    Midpoint,
    /// Mean of `|lo - y|` and `|hi - y|` over finite intervals.
    PerQuantile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mae {
    pub mae: f64,
    /// Intervals left out (empty, or unbounded).
    pub excluded: usize,
}

pub fn regression_mae(intervals: &[PredictionInterval], ys: &[f64], mode: MaeMode) -> Result<Mae> {
    check_lengths(intervals.len(), ys.len())?;
    let mut total = 0.0;
    let mut used = 0usize;
    for (iv, &y) in intervals.iter().zip(ys) {
        let bounded = iv.lo.is_finite() && iv.hi.is_finite();
        let err = match mode {
            MaeMode::Midpoint if bounded && !iv.empty => (iv.midpoint() - y).abs(),
            MaeMode::PerQuantile if bounded => 0.5 * ((iv.lo - y).abs() + (iv.hi - y).abs()),
            _ => continue,
        };
        total += err;
        used += 1;
    }
    Ok(Mae {
        mae: if used > 0 { total / used as f64 } else { f64::NAN },
        excluded: intervals.len() - used,
    })
}

/// Everything reported for one method on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub coverage: f64,
    /// Mean set size, or mean interval width.
    pub mean_size: f64,
    pub size_stddev: f64,
    pub test_error: f64,
    pub singleton_fraction: Option<f64>,
    pub singleton_accuracy: Option<f64>,
    pub mixed_accuracy: Option<f64>,
    pub mean_top_confidence: Option<f64>,
    pub empty_count: usize,
    pub per_class_coverage: Vec<Option<f64>>,
    pub mae: Option<f64>,
    pub mean_passes: f64,
    pub passes_stddev: f64,
    /// Raw quantile pairs with `lo > hi` (regression only).
    pub crossing_count: Option<usize>,
}

impl EvalReport {
    pub fn for_sets(
        sets: &[PredictionSet],
        truths: &[usize],
        probs: &[ProbVector],
        passes: &[usize],
        num_classes: usize,
    ) -> Result<Self> {
        let cov = coverage(sets, truths)?;
        let (mean_size, size_stddev) = mean_size(sets)?;
        let single = singleton_stats(sets, truths)?;
        let (mp, sp) = passes_stats(passes);
        Ok(Self {
            coverage: cov,
            mean_size,
            size_stddev,
            test_error: 1.0 - cov,
            singleton_fraction: Some(single.singleton_fraction),
            singleton_accuracy: single.singleton_accuracy,
            mixed_accuracy: single.mixed_accuracy,
            mean_top_confidence: Some(mean_top_confidence(probs)?),
            empty_count: sets.iter().filter(|s| s.is_empty()).count(),
            per_class_coverage: per_class_coverage(sets, truths, num_classes)?,
            mae: None,
            mean_passes: mp,
            passes_stddev: sp,
            crossing_count: None,
        })
    }

    pub fn for_intervals(
        intervals: &[PredictionInterval],
        ys: &[f64],
        passes: &[usize],
        mae_mode: MaeMode,
    ) -> Result<Self> {
        let cov = coverage(intervals, ys)?;
        let (mean_size, size_stddev) = mean_size(intervals)?;
        let (mp, sp) = passes_stats(passes);
        Ok(Self {
            coverage: cov,
            mean_size,
            size_stddev,
            test_error: 1.0 - cov,
            singleton_fraction: None,
            singleton_accuracy: None,
            mixed_accuracy: None,
            mean_top_confidence: None,
            empty_count: intervals.iter().filter(|i| i.empty).count(),
            per_class_coverage: Vec::new(),
            mae: Some(regression_mae(intervals, ys, mae_mode)?.mae),
            mean_passes: mp,
            passes_stddev: sp,
            crossing_count: None,
        })
    }

    pub const CSV_HEADER: [&'static str; 11] = [
        "coverage",
        "test_error",
        "mean_size",
        "size_stddev",
        "singleton_fraction",
        "singleton_accuracy",
        "mixed_accuracy",
        "mean_top_confidence",
        "empty_count",
        "mae",
        "mean_passes",
    ];

    pub fn csv_row(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        vec![
            self.coverage.to_string(),
            self.test_error.to_string(),
            self.mean_size.to_string(),
            self.size_stddev.to_string(),
            opt(self.singleton_fraction),
            opt(self.singleton_accuracy),
            opt(self.mixed_accuracy),
            opt(self.mean_top_confidence),
            self.empty_count.to_string(),
            opt(self.mae),
            self.mean_passes.to_string(),
        ]
    }
}

fn passes_stats(passes: &[usize]) -> (f64, f64) {
    if passes.is_empty() {
        return (0.0, 0.0);
    }
    mean_std(&passes.iter().map(|&p| p as f64).collect::<Vec<_>>())
}
