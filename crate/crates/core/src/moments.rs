//! Per-dimension running mean and population variance (Welford).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Online count/mean/variance over a stream of equally sized vectors.
///
/// The dimension is fixed by the first observation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentAccumulator {
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    /// Output dimension, 0 while fresh.
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn update(&mut self, obs: &[f64]) -> Result<()> {
        if self.n == 0 {
            self.mean = vec![0.0; obs.len()];
            self.m2 = vec![0.0; obs.len()];
        } else if obs.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: obs.len(),
            });
        }
        self.n += 1;
        let n = self.n as f64;
        for ((mean, m2), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(obs) {
            let delta = x - *mean;
            *mean += delta / n;
            *m2 += delta * (x - *mean);
        }
        Ok(())
    }

    /// Population variance per dimension (`m2 / n`); zeros when `n <= 1`.
    pub fn variance(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.variance_into(&mut out);
        out
    }

    pub fn variance_into(&self, out: &mut [f64]) {
        if self.n <= 1 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let n = self.n as f64;
        for (o, m2) in out.iter_mut().zip(&self.m2) {
            *o = m2 / n;
        }
    }
}
