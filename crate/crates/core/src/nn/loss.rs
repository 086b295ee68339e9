use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::softmax;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Loss {
    /// Softmax cross-entropy on logits; the target is a class index.
    CrossEntropy,
    /// Sum of pinball losses, one output per level.
    MultiQuantile { levels: Vec<f64> },
}

impl Loss {
    pub fn validate(&self) -> Result<()> {
        if let Loss::MultiQuantile { levels } = self {
            check_levels(levels)?;
        }
        Ok(())
    }

    /// Loss of one sample and its gradient w.r.t. the raw output,
    /// written into `grad`.
    pub fn value_and_grad(&self, out: &[f64], target: f64, grad: &mut [f64]) -> f64 {
        match self {
            Loss::CrossEntropy => {
                let label = target as usize;
                let p = softmax(out, 1.0);
                grad.iter_mut().zip(&p).for_each(|(g, p)| *g = *p);
                grad[label] -= 1.0;
                cross_entropy(out, label)
            }
            Loss::MultiQuantile { levels } => {
                for ((g, &pred), &tau) in grad.iter_mut().zip(out).zip(levels) {
                    *g = if target - pred >= 0.0 { -tau } else { 1.0 - tau };
                }
                pinball(out, target, levels)
            }
        }
    }

    pub fn value(&self, out: &[f64], target: f64) -> f64 {
        match self {
            Loss::CrossEntropy => cross_entropy(out, target as usize),
            Loss::MultiQuantile { levels } => pinball(out, target, levels),
        }
    }
}

fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty()
        || levels.iter().any(|t| !(*t > 0.0 && *t < 1.0))
        || levels.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::invalid(format!(
            "quantile levels {levels:?} must be strictly increasing in (0, 1)"
        )));
    }
    Ok(())
}

/// `-log softmax(logits)[label]`, via log-sum-exp.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// `Σ_τ max(τ·u, (τ-1)·u)` with `u = y - ŷ_τ`.
pub fn pinball(pred: &[f64], y: f64, levels: &[f64]) -> f64 {
    pred.iter()
        .zip(levels)
        .map(|(p, tau)| {
            let u = y - p;
            (tau * u).max((tau - 1.0) * u)
        })
        .sum()
}

/// Mean over samples of [`pinball`].
pub fn pinball_loss(preds: &[Vec<f64>], ys: &[f64], levels: &[f64]) -> Result<f64> {
    check_levels(levels)?;
    if preds.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: preds.len(),
            got: ys.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    let total: f64 = preds.iter().zip(ys).map(|(p, y)| pinball(p, *y, levels)).sum();
    Ok(total / preds.len() as f64)
}
