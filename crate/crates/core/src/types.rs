//! Shared value types: probability vectors, quantile pairs, prediction sets
//! and prediction intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `Σ p = 1` for a [`ProbVector`].
pub const PROB_SUM_TOL: f64 = 1e-6;

/// One softmax output over `C >= 2` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::invalid(format!(
                "probability vector needs at least 2 classes, got {}",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::invalid(format!("probabilities sum to {sum}")));
        }
        Ok(Self(probs))
    }

    /// Numerically stable softmax of `logits / temperature`.
    pub fn softmax(logits: &[f64], temperature: f64) -> Result<Self> {
        if temperature.is_nan() || temperature <= 0.0 {
            return Err(Error::invalid(format!("temperature {temperature}")));
        }
        Self::new(softmax(logits, temperature))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, class: usize) -> f64 {
        self.0[class]
    }

    /// Largest entry.
    pub fn top(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the largest entry, lowest index on ties.
    pub fn argmax(&self) -> usize {
        self.descending_order()[0]
    }

    /// Class indices sorted by descending probability, ties broken by
    /// ascending class index.
    pub fn descending_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.0.len()).collect();
        order.sort_by(|&a, &b| self.0[b].total_cmp(&self.0[a]).then(a.cmp(&b)));
        order
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Self {
        p.0
    }
}

/// Softmax of `logits / temperature` without validation.
pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits
        .iter()
        .map(|z| z / temperature)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits
        .iter()
        .map(|z| (z / temperature - max).exp())
        .collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

/// Default quantile levels of the regression head.
pub const DEFAULT_QUANTILE_LEVELS: (f64, f64) = (0.05, 0.95);

/// A `(lower, upper)` quantile prediction. `lo > hi` (quantile crossing) is
/// representable and never repaired here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantilePair {
    pub lo: f64,
    pub hi: f64,
    pub levels: (f64, f64),
}

impl QuantilePair {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            levels: DEFAULT_QUANTILE_LEVELS,
        }
    }

    pub fn with_levels(lo: f64, hi: f64, levels: (f64, f64)) -> Result<Self> {
        let (a, b) = levels;
        if !(0.0 < a && a < b && b < 1.0) {
            return Err(Error::invalid(format!("quantile levels ({a}, {b})")));
        }
        Ok(Self { lo, hi, levels })
    }

    /// Builds a pair from a two-wide model output.
    pub fn from_output(out: &[f64], levels: (f64, f64)) -> Result<Self> {
        match out {
            [lo, hi] => Self::with_levels(*lo, *hi, levels),
            _ => Err(Error::DimensionMismatch {
                expected: 2,
                got: out.len(),
            }),
        }
    }

    pub fn is_crossed(&self) -> bool {
        self.lo > self.hi
    }
}

/// A classification prediction set. May be empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    /// Member classes, in the order they were admitted.
    pub classes: Vec<usize>,
    /// Highest entry of the probability vector the set was built from.
    pub top_confidence: f64,
}

impl PredictionSet {
    pub fn contains(&self, class: usize) -> bool {
        self.classes.contains(&class)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// A regression prediction interval. `empty` is set when the lower edge
/// ended up above the upper edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    #[serde(with = "crate::serde_f64")]
    pub lo: f64,
    #[serde(with = "crate::serde_f64")]
    pub hi: f64,
    pub empty: bool,
}

impl PredictionInterval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            empty: lo > hi,
        }
    }

    pub fn whole_line() -> Self {
        Self::new(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn contains(&self, y: f64) -> bool {
        !self.empty && self.lo <= y && y <= self.hi
    }

    /// `hi - lo`, or 0 for an empty interval.
    pub fn width(&self) -> f64 {
        if self.empty {
            0.0
        } else {
            self.hi - self.lo
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}
