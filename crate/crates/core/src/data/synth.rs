use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::{TabularDataset, Task};
use crate::error::{Error, Result};
use crate::rng::{purpose, stream};

/// Standard normal 0.95 quantile.
pub const Z95: f64 = 1.644_853_626_951_472_2;

/// Isotropic unit-variance Gaussian blobs. Class `k` is centred at
/// `separation * (cos θ_k, sin θ_k, 0, ...)` with `θ_k = 2πk/C` (for
/// `d = 1`, at `separation * k`). Labels are drawn uniformly.
pub fn synth_blobs(n: usize, classes: usize, dim: usize, separation: f64, seed: u64) -> Result<TabularDataset> {
    if classes < 2 || dim == 0 {
        return Err(Error::invalid("blobs need at least 2 classes and 1 dimension"));
    }
    if n < classes * 10 {
        return Err(Error::invalid(format!("n = {n} below 10 per class")));
    }
    let mut rng = stream(seed, &[purpose::DATA]);
    let centre = |k: usize| -> Vec<f64> {
        let mut c = vec![0.0; dim];
        if dim == 1 {
            c[0] = separation * k as f64;
        } else {
            let theta = std::f64::consts::TAU * k as f64 / classes as f64;
            c[0] = separation * theta.cos();
            c[1] = separation * theta.sin();
        }
        c
    };
    let centres: Vec<Vec<f64>> = (0..classes).map(centre).collect();
    let (mut features, mut targets) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let k = rng.random_range(0..classes);
        let x: Vec<f64> = centres[k]
            .iter()
            .map(|c| c + Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        features.push(x);
        targets.push(k as f64);
    }
    let names = (0..dim).map(|j| format!("x{j}")).collect();
    TabularDataset::new(Task::Classification, names, "label", features, targets)
}

/// Noise scale `base + slope·|x|` of the heteroscedastic generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub base: f64,
    pub slope: f64,
}

impl Default for NoiseProfile {
    fn default() -> Self {
        Self { base: 0.1, slope: 0.4 }
    }
}

impl NoiseProfile {
    pub fn sigma(&self, x: f64) -> f64 {
        self.base + self.slope * x.abs()
    }

    /// True 0.05 / 0.95 conditional quantiles at `x`.
    pub fn true_quantiles(&self, x: f64) -> (f64, f64) {
        let m = (2.0 * x).sin();
        let s = Z95 * self.sigma(x);
        (m - s, m + s)
    }
}

/// `y = sin(2x) + σ(x)·ε`, `x ~ U[-2, 2]`, `ε ~ N(0, 1)`.
pub fn synth_hetero(n: usize, noise: NoiseProfile, seed: u64) -> Result<TabularDataset> {
    if n == 0 {
        return Err(Error::Empty("synthetic dataset"));
    }
    let mut rng = stream(seed, &[purpose::DATA]);
    let (mut features, mut targets) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let x: f64 = rng.random_range(-2.0..=2.0);
        let eps: f64 = StandardNormal.sample(&mut rng);
        features.push(vec![x]);
        targets.push((2.0 * x).sin() + noise.sigma(x) * eps);
    }
    TabularDataset::new(Task::Regression, vec!["x".into()], "y", features, targets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_data() {
        assert_eq!(synth_blobs(100, 3, 2, 3.0, 5).unwrap(), synth_blobs(100, 3, 2, 3.0, 5).unwrap());
        assert_ne!(synth_blobs(100, 3, 2, 3.0, 5).unwrap(), synth_blobs(100, 3, 2, 3.0, 6).unwrap());
        assert_eq!(
            synth_hetero(50, NoiseProfile::default(), 1).unwrap(),
            synth_hetero(50, NoiseProfile::default(), 1).unwrap()
        );
    }

    #[test]
    fn blobs_reject_tiny_n() {
        assert!(synth_blobs(29, 3, 2, 1.0, 0).is_err());
        assert_eq!(synth_blobs(30, 3, 2, 1.0, 0).unwrap().len(), 30);
    }

    #[test]
    fn far_blobs_are_separable_by_nearest_centre() {
        let ds = synth_blobs(3000, 3, 2, 50.0, 2).unwrap();
        for (x, &t) in ds.features.iter().zip(&ds.targets) {
            let best = (0..3)
                .min_by(|&a, &b| {
                    let d = |k: usize| {
                        let th = std::f64::consts::TAU * k as f64 / 3.0;
                        (x[0] - 50.0 * th.cos()).powi(2) + (x[1] - 50.0 * th.sin()).powi(2)
                    };
                    d(a).total_cmp(&d(b))
                })
                .unwrap();
            assert_eq!(best as f64, t);
        }
    }

    #[test]
    fn hetero_true_quantiles_cover_ninety_percent() {
        let p = NoiseProfile::default();
        let ds = synth_hetero(200_000, p, 3).unwrap();
        let (mut below, mut above) = (0usize, 0usize);
        for (x, &y) in ds.features.iter().zip(&ds.targets) {
            let (lo, hi) = p.true_quantiles(x[0]);
            below += (y < lo) as usize;
            above += (y > hi) as usize;
        }
        let n = ds.len() as f64;
        // 3 standard errors of a 5% rate
        let tol = 3.0 * (0.05f64 * 0.95 / n).sqrt();
        assert!((below as f64 / n - 0.05).abs() < tol);
        assert!((above as f64 / n - 0.05).abs() < tol);
    }
}
