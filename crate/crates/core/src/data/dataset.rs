use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
}

/// Rows of real features with one target each. Class labels are stored as
/// integral `f64` so both tasks share one layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularDataset {
    pub task: Task,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    /// Rows discarded during ingestion.
    pub dropped_rows: usize,
}

impl TabularDataset {
    pub fn new(
        task: Task,
        feature_names: Vec<String>,
        target_name: impl Into<String>,
        features: Vec<Vec<f64>>,
        targets: Vec<f64>,
    ) -> Result<Self> {
        if features.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                got: targets.len(),
            });
        }
        if let Some(row) = features.iter().find(|r| r.len() != feature_names.len()) {
            return Err(Error::DimensionMismatch {
                expected: feature_names.len(),
                got: row.len(),
            });
        }
        if task == Task::Classification {
            if let Some(t) = targets.iter().find(|t| !is_label(**t)) {
                return Err(Error::invalid(format!("class label {t} is not a non-negative integer")));
            }
        }
        Ok(Self {
            task,
            feature_names,
            target_name: target_name.into(),
            features,
            targets,
            dropped_rows: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    /// `max label + 1`; zero for regression.
    pub fn num_classes(&self) -> usize {
        match self.task {
            Task::Regression => 0,
            Task::Classification => self.labels().into_iter().max().map_or(0, |m| m + 1),
        }
    }

    pub fn labels(&self) -> Vec<usize> {
        self.targets.iter().map(|&t| t as usize).collect()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            task: self.task,
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            dropped_rows: 0,
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.feature_names.clone();
        header.push(self.target_name.clone());
        w.write_record(&header)?;
        for (row, t) in self.features.iter().zip(&self.targets) {
            let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            rec.push(match self.task {
                Task::Classification => (*t as usize).to_string(),
                Task::Regression => format!("{t:?}"),
            });
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn is_label(t: f64) -> bool {
    t >= 0.0 && t.fract() == 0.0 && t < u32::MAX as f64
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Fail on the first unparseable cell instead of dropping its row.
    pub strict: bool,
}

/// Reads a headed CSV. Every column except `target_column` becomes a
/// feature. Rows holding a non-finite or unparseable number are dropped
/// with a warning (or rejected when `strict`).
pub fn load_csv(path: impl AsRef<Path>, target_column: &str, task: Task) -> Result<TabularDataset> {
    load_csv_with(path, target_column, task, LoadOptions::default())
}

pub fn load_csv_with(
    path: impl AsRef<Path>,
    target_column: &str,
    task: Task,
    opts: LoadOptions,
) -> Result<TabularDataset> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let target_idx = header
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::MissingColumn(target_column.to_owned()))?;
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != target_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let (mut features, mut targets, mut dropped) = (Vec::new(), Vec::new(), 0usize);
    for (row_no, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // 1-based, counting the header line.
        let line = row_no + 2;
        let mut row = Vec::with_capacity(feature_names.len());
        let mut target = None;
        let mut bad = None;
        for (i, cell) in rec.iter().enumerate() {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    if i == target_idx {
                        target = Some(v);
                    } else {
                        row.push(v);
                    }
                }
                Ok(v) => bad = Some((i, format!("non-finite value {v}"))),
                Err(e) => bad = Some((i, format!("{e} ({cell:?})"))),
            }
            if bad.is_some() {
                break;
            }
        }
        if rec.len() != header.len() {
            bad = Some((rec.len().min(header.len().saturating_sub(1)), "wrong field count".into()));
        }
        if let Some((col, message)) = bad {
            let err = Error::Parse {
                row: line,
                column: header.get(col).cloned().unwrap_or_default(),
                message,
            };
            if opts.strict {
                return Err(err);
            }
            log::warn!("{}: dropping row: {err}", path.display());
            dropped += 1;
            continue;
        }
        let target = target.expect("target parsed");
        if task == Task::Classification && !is_label(target) {
            return Err(Error::Parse {
                row: line,
                column: target_column.to_owned(),
                message: format!("class label {target} is not a non-negative integer"),
            });
        }
        features.push(row);
        targets.push(target);
    }
    if targets.is_empty() {
        return Err(Error::Empty("dataset after filtering"));
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} row(s)", path.display());
    }
    let mut ds = TabularDataset::new(task, feature_names, target_column, features, targets)?;
    ds.dropped_rows = dropped;
    Ok(ds)
}

/// Per-column z-score statistics, fitted on one split and applied to all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    /// `(mean, std)` of the target; regression only.
    pub target: Option<(f64, f64)>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    // Constant columns are centred but not scaled.
    let std = if var > 0.0 { var.sqrt() } else { 1.0 };
    (mean, std)
}

impl Standardizer {
    pub fn fit(train: &TabularDataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty("training split"));
        }
        let (feature_mean, feature_std) = (0..train.dim())
            .map(|j| mean_std(train.features.iter().map(move |r| r[j])))
            .unzip();
        let target = (train.task == Task::Regression).then(|| mean_std(train.targets.iter().copied()));
        Ok(Self {
            feature_mean,
            feature_std,
            target,
        })
    }

    pub fn apply(&self, ds: &mut TabularDataset) {
        for row in &mut ds.features {
            for ((v, m), s) in row.iter_mut().zip(&self.feature_mean).zip(&self.feature_std) {
                *v = (*v - m) / s;
            }
        }
        if let Some((m, s)) = self.target {
            for t in &mut ds.targets {
                *t = (*t - m) / s;
            }
        }
    }

    /// Maps a standardized target back to original units.
    pub fn invert_target(&self, t: f64) -> f64 {
        self.target.map_or(t, |(m, s)| t * s + m)
    }
}
