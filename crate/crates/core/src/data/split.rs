use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::{Standardizer, TabularDataset};
use crate::error::{Error, Result};
use crate::rng::{purpose, stream};

/// Calibration sets smaller than this trigger a warning.
pub const MIN_CALIBRATION: usize = 10;

/// How a dataset is cut into train / calibration / validation.
///
/// `test_fraction` of the rows form the test part, of which
/// `calibration_fraction_of_test` go to calibration and the rest to
/// validation. When `train_fraction + test_fraction < 1` the leftover rows
/// are unused.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub test_fraction: f64,
    pub calibration_fraction_of_test: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SplitSpec {
    pub fn classification(seed: u64) -> Self {
        Self {
            train_fraction: 0.8,
            test_fraction: 0.2,
            calibration_fraction_of_test: 0.25,
            seed,
        }
    }

    pub fn regression(seed: u64) -> Self {
        Self {
            train_fraction: 0.8,
            test_fraction: 0.2,
            calibration_fraction_of_test: 0.02,
            seed,
        }
    }

    /// Fractions giving exactly these sizes.
    pub fn from_sizes(train: usize, calibration: usize, validation: usize, seed: u64) -> Self {
        let test = calibration + validation;
        let n = (train + test) as f64;
        Self {
            train_fraction: train as f64 / n,
            test_fraction: test as f64 / n,
            calibration_fraction_of_test: calibration as f64 / test as f64,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("train_fraction", self.train_fraction),
            ("test_fraction", self.test_fraction),
            ("calibration_fraction_of_test", self.calibration_fraction_of_test),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(name, format!("{v} not in (0, 1)")));
            }
        }
        if self.train_fraction + self.test_fraction > 1.0 + 1e-9 {
            return Err(Error::config("train_fraction", "train + test fractions exceed 1"));
        }
        Ok(())
    }

    /// `(train, calibration, validation)` sizes for `n` rows.
    pub fn sizes(&self, n: usize) -> Result<(usize, usize, usize)> {
        self.validate()?;
        let n_test = (n as f64 * self.test_fraction).round() as usize;
        let n_train = if self.train_fraction + self.test_fraction >= 1.0 - 1e-9 {
            n - n_test
        } else {
            (n as f64 * self.train_fraction).round() as usize
        };
        let n_cal = ((n_test as f64 * self.calibration_fraction_of_test).round() as usize).max(1);
        if n_train == 0 || n_cal >= n_test {
            return Err(Error::Empty("split"));
        }
        if n_cal < MIN_CALIBRATION {
            log::warn!("degenerate calibration set of {n_cal} sample(s)");
        }
        Ok((n_train, n_cal, n_test - n_cal))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub calibration: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Seeded shuffle of `0..n`, then contiguous train / calibration /
/// validation blocks.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<SplitIndices> {
    let (n_train, n_cal, n_val) = spec.sizes(n)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(spec.seed, &[purpose::SPLIT]));
    let mut it = idx.into_iter();
    let train = it.by_ref().take(n_train).collect();
    let calibration = it.by_ref().take(n_cal).collect();
    let validation = it.take(n_val).collect();
    Ok(SplitIndices {
        train,
        calibration,
        validation,
    })
}

/// The three standardized parts plus the training-fitted statistics.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: TabularDataset,
    pub calibration: TabularDataset,
    pub validation: TabularDataset,
    pub standardizer: Standardizer,
    pub indices: SplitIndices,
}

/// Splits, then z-scores every part with statistics of the training part.
pub fn split(ds: &TabularDataset, spec: &SplitSpec) -> Result<Splits> {
    let indices = split_indices(ds.len(), spec)?;
    let mut train = ds.subset(&indices.train);
    let mut calibration = ds.subset(&indices.calibration);
    let mut validation = ds.subset(&indices.validation);
    let standardizer = Standardizer::fit(&train)?;
    for part in [&mut train, &mut calibration, &mut validation] {
        standardizer.apply(part);
    }
    Ok(Splits {
        train,
        calibration,
        validation,
        standardizer,
        indices,
    })
}
