//! Split-conformal classification over (mean) softmax outputs.
//!
//! Two nonconformity scores are provided:
//!
//! * naive: `1 - p_y`, with sets `{y : 1 - p_y <= q̂}`;
//! * RAPS: the cumulative probability mass down to the true class's rank,
//!   plus `λ` for every rank past `k_reg`. Sets admit classes in
//!   descending-probability order while that cumulative score stays within
//!   the threshold.
//!
//! Both set builders evaluate exactly the same expression as their score,
//! so `score(x, y) <= threshold` holds iff `y` is in the set.

use serde::{Deserialize, Serialize};

use crate::adaptive::{adaptive_mc_dropout, AdaptiveConfig};
use crate::error::{Error, Result};
use crate::predictor::{StochasticPredictor, TemperatureScaled};
use crate::quantile::conformal_threshold;
use crate::rng::Rng;
use crate::types::{softmax, PredictionSet, ProbVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RapsParams {
    /// Penalty per rank beyond `k_reg`.
    pub lambda: f64,
    pub k_reg: usize,
    pub alpha: f64,
    /// Also admit the class whose mass first pushes the cumulative score
    /// past the threshold (smallest `k` with cumulative `>= T`). Over-covers.
    #[serde(default)]
    pub include_crossing: bool,
}

impl Default for RapsParams {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            k_reg: 5,
            alpha: 0.05,
            include_crossing: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClsMethod {
    Naive,
    Raps {
        lambda: f64,
        k_reg: usize,
        #[serde(default)]
        include_crossing: bool,
    },
}

impl From<RapsParams> for ClsMethod {
    fn from(p: RapsParams) -> Self {
        ClsMethod::Raps {
            lambda: p.lambda,
            k_reg: p.k_reg,
            include_crossing: p.include_crossing,
        }
    }
}

impl ClsMethod {
    pub fn score(&self, probs: &ProbVector, label: usize) -> f64 {
        match *self {
            ClsMethod::Naive => naive_score(probs, label),
            ClsMethod::Raps { lambda, k_reg, .. } => raps_score(probs, label, lambda, k_reg),
        }
    }

    pub fn set(&self, probs: &ProbVector, threshold: f64) -> PredictionSet {
        match *self {
            ClsMethod::Naive => naive_set(probs, threshold),
            ClsMethod::Raps {
                lambda,
                k_reg,
                include_crossing,
            } => raps_set(
                probs,
                threshold,
                &RapsParams {
                    lambda,
                    k_reg,
                    alpha: 0.5,
                    include_crossing,
                },
            ),
        }
    }
}

/// `1 - p_y`.
pub fn naive_score(probs: &ProbVector, label: usize) -> f64 {
    1.0 - probs.get(label)
}

/// `{y : 1 - p_y <= q̂}`, i.e. `p_y >= 1 - q̂`. `q̂ = +∞` admits every class.
pub fn naive_set(probs: &ProbVector, qhat: f64) -> PredictionSet {
    let classes = probs
        .descending_order()
        .into_iter()
        .filter(|&y| naive_score(probs, y) <= qhat)
        .collect();
    PredictionSet {
        classes,
        top_confidence: probs.top(),
    }
}

/// Class order (descending probability) and the penalized cumulative score
/// at each rank.
fn raps_cumulative(probs: &ProbVector, lambda: f64, k_reg: usize) -> (Vec<usize>, Vec<f64>) {
    let order = probs.descending_order();
    let mut mass = 0.0;
    let cum = order
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            mass += probs.get(c);
            let rank = i + 1;
            mass + lambda * rank.saturating_sub(k_reg) as f64
        })
        .collect();
    (order, cum)
}

/// `Σ_{i<=k'} p_(i) + λ·max(0, k' - k_reg)`, `k'` the 1-based rank of
/// `label` (ties broken by ascending class index).
pub fn raps_score(probs: &ProbVector, label: usize, lambda: f64, k_reg: usize) -> f64 {
    let (order, cum) = raps_cumulative(probs, lambda, k_reg);
    let rank = order
        .iter()
        .position(|&c| c == label)
        .unwrap_or_else(|| panic!("label {label} out of range"));
    cum[rank]
}

pub fn raps_set(probs: &ProbVector, threshold: f64, params: &RapsParams) -> PredictionSet {
    let (order, cum) = raps_cumulative(probs, params.lambda, params.k_reg);
    let k = if threshold == f64::INFINITY {
        order.len()
    } else if params.include_crossing {
        cum.iter()
            .position(|&c| c >= threshold)
            .map_or(order.len(), |i| i + 1)
    } else {
        cum.iter().take_while(|&&c| c <= threshold).count()
    };
    PredictionSet {
        classes: order[..k].to_vec(),
        top_confidence: probs.top(),
    }
}

/// A fitted classification calibration. The threshold is always
/// recomputable from the stored scores and `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClsCalibration {
    pub method: ClsMethod,
    pub alpha: f64,
    pub temperature: f64,
    #[serde(with = "crate::serde_f64")]
    pub threshold: f64,
    pub scores: Vec<f64>,
}

impl ClsCalibration {
    pub fn predict_set(&self, probs: &ProbVector) -> PredictionSet {
        self.method.set(probs, self.threshold)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        let expected = conformal_threshold(&c.scores, c.alpha)?;
        if expected.to_bits() != c.threshold.to_bits() {
            return Err(Error::invalid(format!(
                "stored threshold {} disagrees with scores ({expected})",
                c.threshold
            )));
        }
        Ok(c)
    }
}

/// Scores every calibration sample and takes the finite-sample corrected
/// `(1-α)` order statistic.
pub fn calibrate(
    method: ClsMethod,
    probs: &[ProbVector],
    labels: &[usize],
    alpha: f64,
    temperature: f64,
) -> Result<ClsCalibration> {
    if probs.is_empty() {
        return Err(Error::Empty("calibration set"));
    }
    if probs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: probs.len(),
            got: labels.len(),
        });
    }
    if let Some(&y) = labels.iter().zip(probs).find(|(y, p)| **y >= p.num_classes()).map(|(y, _)| y) {
        return Err(Error::invalid(format!("label {y} out of range")));
    }
    let scores: Vec<f64> = probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| method.score(p, y))
        .collect();
    let threshold = conformal_threshold(&scores, alpha)?;
    Ok(ClsCalibration {
        method,
        alpha,
        temperature,
        threshold,
        scores,
    })
}

/// Mean negative log-likelihood of `softmax(logits / T)`.
pub fn temperature_nll(logits: &[Vec<f64>], labels: &[usize], temperature: f64) -> f64 {
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(z, &y)| {
            let scaled: Vec<f64> = z.iter().map(|v| v / temperature).collect();
            crate::nn::cross_entropy(&scaled, y)
        })
        .sum();
    total / logits.len() as f64
}

pub const TEMPERATURE_BOUNDS: (f64, f64) = (0.05, 10.0);
const GOLDEN_TOL: f64 = 1e-4;

/// Single-parameter temperature scaling: golden-section search for the `T`
/// minimizing calibration-set NLL within `bounds`. Never returns a `T`
/// worse than `T = 1` when 1 lies inside the bounds.
pub fn fit_temperature(logits: &[Vec<f64>], labels: &[usize], bounds: (f64, f64)) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::Empty("calibration logits"));
    }
    if logits.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: logits.len(),
            got: labels.len(),
        });
    }
    if logits.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite logit"));
    }
    if labels.iter().all(|&y| y == labels[0]) {
        return Err(Error::DegenerateCalibration(format!(
            "only class {} present; temperature is unidentifiable",
            labels[0]
        )));
    }
    let (mut a, mut b) = bounds;
    if !(0.0 < a && a < b) {
        return Err(Error::invalid(format!("temperature bounds {bounds:?}")));
    }
    let f = |t: f64| temperature_nll(logits, labels, t);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > GOLDEN_TOL {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    if bounds.0 <= 1.0 && 1.0 <= bounds.1 && f(1.0) < f(t) {
        return Ok(1.0);
    }
    Ok(t)
}

/// Where the fitted temperature enters Monte Carlo prediction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureMode {
    /// Scale each pass's logits before its softmax, then average.
    #[default]
    PerPass,
    /// Average unscaled softmax outputs, then rescale the mean.
    OnMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClsPrediction {
    pub set: PredictionSet,
    pub mean: ProbVector,
    pub variance: Vec<f64>,
    pub passes: usize,
}

/// Adaptive MC dropout over a logit predictor, followed by the calibrated
/// set constructor on the mean probability vector.
pub fn mc_cp_classify<P: StochasticPredictor>(
    logit_predictor: &P,
    x: &[f64],
    cfg: &AdaptiveConfig,
    calibration: &ClsCalibration,
    mode: TemperatureMode,
    rng: &mut Rng,
) -> Result<ClsPrediction> {
    let mc_mean = |temperature: f64, rng: &mut Rng| {
        let scaled = TemperatureScaled::new(logit_predictor, temperature)?;
        adaptive_mc_dropout(&scaled, x, cfg, rng)
    };
    let (mean, res) = match mode {
        TemperatureMode::PerPass => {
            let res = mc_mean(calibration.temperature, rng)?;
            (renormalize(&res.mean)?, res)
        }
        TemperatureMode::OnMean => {
            let res = mc_mean(1.0, rng)?;
            let logp: Vec<f64> = res.mean.iter().map(|p| p.ln()).collect();
            (renormalize(&softmax(&logp, calibration.temperature))?, res)
        }
    };
    Ok(ClsPrediction {
        set: calibration.predict_set(&mean),
        mean,
        variance: res.variance,
        passes: res.passes,
    })
}

/// Averages of probability vectors drift from 1 by rounding only; fold that
/// drift back in so the result validates.
pub(crate) fn renormalize(p: &[f64]) -> Result<ProbVector> {
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() <= 1e-12 && p.iter().all(|v| (0.0..=1.0).contains(v)) {
        return ProbVector::new(p.to_vec());
    }
    ProbVector::new(p.iter().map(|v| (v / sum).clamp(0.0, 1.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::ConstantPredictor;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn naive_score_examples() {
        assert!((naive_score(&pv(&[0.9, 0.1]), 0) - 0.1).abs() < 1e-15);
        assert_eq!(naive_score(&pv(&[1.0, 0.0]), 0), 0.0);
        assert!((naive_score(&pv(&[0.25; 4]), 3) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn naive_set_examples() {
        let p = pv(&[0.6, 0.3, 0.1]);
        assert_eq!(naive_set(&p, 0.5).classes, vec![0]);
        assert_eq!(naive_set(&p, 1.0).classes, vec![0, 1, 2]);
        assert!(naive_set(&p, 0.0).is_empty());
        assert_eq!(naive_set(&p, f64::INFINITY).len(), 3);
        assert_eq!(naive_set(&p, 0.5).top_confidence, 0.6);
    }

    #[test]
    fn raps_score_examples() {
        let p = pv(&[0.5, 0.3, 0.2]);
        assert_eq!(raps_score(&p, 0, 0.0, 5), 0.5);
        assert!((raps_score(&p, 2, 0.1, 1) - 1.2).abs() < 1e-12);
        assert_eq!(raps_score(&p, 0, 7.0, 1), 0.5);
    }

    #[test]
    fn raps_set_default_rule() {
        let p = pv(&[0.6, 0.3, 0.1]);
        let params = RapsParams {
            lambda: 0.0,
            ..RapsParams::default()
        };
        assert_eq!(raps_set(&p, 0.85, &params).classes, vec![0]);
        assert_eq!(raps_set(&p, 0.9, &params).classes, vec![0, 1]);
        assert!(raps_set(&p, 0.5, &params).is_empty());
        assert_eq!(raps_set(&p, 1.5, &params).len(), 3);
        assert_eq!(raps_set(&p, f64::INFINITY, &params).len(), 3);
    }

    #[test]
    fn raps_set_crossing_rule() {
        let p = pv(&[0.6, 0.3, 0.1]);
        let params = RapsParams {
            lambda: 0.0,
            include_crossing: true,
            ..RapsParams::default()
        };
        // 0.6 < 0.85 <= 0.9
        assert_eq!(raps_set(&p, 0.85, &params).classes, vec![0, 1]);
        assert_eq!(raps_set(&p, 0.5, &params).classes, vec![0]);
        let lam = RapsParams {
            lambda: 0.1,
            k_reg: 1,
            include_crossing: true,
            ..RapsParams::default()
        };
        // exhaustion: T > 1 + λ(C - k_reg)
        assert_eq!(raps_set(&p, 1.0 + 0.1 * 2.0 + 1e-9, &lam).len(), 3);
    }

    #[test]
    fn raps_boundary_tie_is_inside() {
        // Dyadic probabilities make the cumulative sums exact.
        let p = pv(&[0.5, 0.25, 0.25]);
        let params = RapsParams {
            lambda: 0.0,
            ..RapsParams::default()
        };
        let s = raps_score(&p, 1, 0.0, 5);
        assert_eq!(s, 0.75);
        assert!(raps_set(&p, 0.75, &params).contains(1));
        assert!(!raps_set(&p, 0.75, &params).contains(2));
        assert!(!raps_set(&p, 0.75 - 1e-12, &params).contains(1));
    }

    #[test]
    fn calibrate_examples() {
        let probs: Vec<ProbVector> = [0.9, 0.8, 0.7, 0.6].iter().map(|p| pv(&[*p, 1.0 - p])).collect();
        let c = calibrate(ClsMethod::Naive, &probs, &[0, 0, 0, 0], 0.5, 1.0).unwrap();
        assert!((c.threshold - 0.3).abs() < 1e-12);
        let c = calibrate(ClsMethod::Naive, &vec![pv(&[0.7, 0.3]); 5], &[0; 5], 0.2, 1.0).unwrap();
        assert!((c.threshold - 0.3).abs() < 1e-12);
        let c = calibrate(ClsMethod::Naive, &[pv(&[0.7, 0.3])], &[0], 0.05, 1.0).unwrap();
        assert_eq!(c.threshold, f64::INFINITY);
        assert!(calibrate(ClsMethod::Naive, &[], &[], 0.1, 1.0).is_err());
    }

    #[test]
    fn calibration_json_roundtrip() {
        let probs = vec![pv(&[0.7, 0.3])];
        let c = calibrate(RapsParams::default().into(), &probs, &[1], 0.1, 1.3).unwrap();
        let back = ClsCalibration::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        let mut tampered = c.clone();
        tampered.threshold = 0.2;
        assert!(ClsCalibration::from_json(&tampered.to_json().unwrap()).is_err());
    }

    /// Logits `c·log p` with labels drawn from `p`.
    fn synthetic_logits(n: usize, scale: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut r = stream(seed, &[]);
        (0..n)
            .map(|_| {
                let raw: Vec<f64> = (0..4).map(|_| 2.5 * r.random::<f64>()).collect();
                let p = softmax(&raw, 1.0);
                let u: f64 = r.random();
                let mut acc = 0.0;
                let y = p
                    .iter()
                    .position(|pi| {
                        acc += pi;
                        u < acc
                    })
                    .unwrap_or(3);
                (p.iter().map(|pi| scale * pi.ln()).collect(), y)
            })
            .unzip()
    }

    #[test]
    fn temperature_recovers_calibrated_logits() {
        let (z, y) = synthetic_logits(60_000, 1.0, 1);
        let t = fit_temperature(&z, &y, TEMPERATURE_BOUNDS).unwrap();
        assert!((t - 1.0).abs() < 1e-2, "T = {t}");
    }

    #[test]
    fn temperature_recovers_known_scale() {
        let (z, y) = synthetic_logits(60_000, 2.0, 2);
        let t = fit_temperature(&z, &y, TEMPERATURE_BOUNDS).unwrap();
        assert!((t - 2.0).abs() < 5e-2, "T = {t}");
    }

    #[test]
    fn temperature_never_worse_than_one() {
        for seed in 0..5 {
            let (z, y) = synthetic_logits(50, 0.3 + seed as f64, seed);
            let t = fit_temperature(&z, &y, TEMPERATURE_BOUNDS).unwrap();
            assert!(temperature_nll(&z, &y, t) <= temperature_nll(&z, &y, 1.0));
        }
    }

    #[test]
    fn single_class_calibration_refused() {
        let z = vec![vec![1.0, 0.0]; 4];
        assert!(matches!(
            fit_temperature(&z, &[1, 1, 1, 1], TEMPERATURE_BOUNDS),
            Err(Error::DegenerateCalibration(_))
        ));
    }

    #[test]
    fn constant_predictor_mc_cp_equals_plain_naive() {
        let logits = vec![1.5, 0.2, -0.4];
        let probs = pv(&softmax(&logits, 1.0));
        let cal = ClsCalibration {
            method: ClsMethod::Naive,
            alpha: 0.1,
            temperature: 1.0,
            threshold: 0.6,
            scores: vec![0.6],
        };
        let out = mc_cp_classify(
            &ConstantPredictor(logits),
            &[],
            &AdaptiveConfig::default(),
            &cal,
            TemperatureMode::PerPass,
            &mut stream(0, &[]),
        )
        .unwrap();
        assert_eq!(out.set, naive_set(&probs, 0.6));
        assert_eq!(out.passes, 11);
    }

    fn arb_probs() -> impl Strategy<Value = ProbVector> {
        prop::collection::vec(0.0f64..1.0, 2..8).prop_filter_map("zero mass", |raw| {
            let s: f64 = raw.iter().sum();
            (s > 1e-6).then(|| renormalize(&raw).unwrap())
        })
    }

    proptest! {
        #[test]
        fn raps_set_grows_with_threshold(p in arb_probs(), a in 0.0f64..1.5, b in 0.0f64..1.5) {
            let params = RapsParams::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let small = raps_set(&p, lo, &params);
            let big = raps_set(&p, hi, &params);
            prop_assert!(small.classes.iter().all(|c| big.contains(*c)));
        }

        #[test]
        fn naive_set_grows_with_threshold(p in arb_probs(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let small = naive_set(&p, lo);
            let big = naive_set(&p, hi);
            prop_assert!(small.classes.iter().all(|c| big.contains(*c)));
        }

        #[test]
        fn temperature_preserves_order(raw in prop::collection::vec(-5.0f64..5.0, 2..8), t in 0.05f64..10.0) {
            let a = ProbVector::softmax(&raw, 1.0).unwrap();
            let b = ProbVector::softmax(&raw, t).unwrap();
            prop_assert_eq!(a.descending_order(), b.descending_order());
        }
    }
}
