//! Conformalized quantile regression.

use serde::{Deserialize, Serialize};

use crate::adaptive::{adaptive_mc_dropout, AdaptiveConfig};
use crate::error::{Error, Result};
use crate::predictor::StochasticPredictor;
use crate::quantile::conformal_threshold;
use crate::rng::Rng;
use crate::types::{PredictionInterval, QuantilePair};

/// `max(lo - y, y - hi)`: negative inside the band, positive outside.
pub fn cqr_score(pred: &QuantilePair, y: f64) -> f64 {
    (pred.lo - y).max(y - pred.hi)
}

/// `[lo - Q, hi + Q]`. A negative `Q` narrows the band and may empty it;
/// `Q = +∞` gives the whole line.
///
/// Edges are the extreme floats for which `cqr_score(pred, y) <= Q`, so
/// membership and score agree exactly; plain `lo - Q` can land a few ulps
/// off when the subtraction loses bits.
pub fn cqr_interval(pred: &QuantilePair, q_correction: f64) -> PredictionInterval {
    let q = q_correction;
    if q == f64::INFINITY {
        return PredictionInterval::whole_line();
    }
    let (a, b) = (pred.lo - q, pred.hi + q);
    if !(a.is_finite() && b.is_finite() && pred.lo.is_finite() && pred.hi.is_finite()) {
        return PredictionInterval::new(a, b);
    }
    let lo = first_where(window(a, pred.lo, q), |t| pred.lo - t <= q);
    let hi = first_where(window(b, pred.hi, q), |t| t - pred.hi > q).next_down();
    PredictionInterval::new(lo, hi)
}

/// Search range around `x` wide enough to absorb the rounding of
/// `edge ± q`.
fn window(x: f64, edge: f64, q: f64) -> (f64, f64) {
    let big = x.abs().max(edge.abs()).max(q.abs());
    let w = 4.0 * (big.next_up() - big);
    (x - w, x + w)
}

/// Total order of finite floats as unsigned integers.
fn key(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 { !b } else { b | 1 << 63 }
}

fn unkey(k: u64) -> f64 {
    f64::from_bits(if k >> 63 == 1 { k & !(1 << 63) } else { !k })
}

/// Smallest float in `[lo, hi]` satisfying a monotone predicate, or `hi`.
fn first_where(range: (f64, f64), pred: impl Fn(f64) -> bool) -> f64 {
    let (mut l, mut h) = (key(range.0), key(range.1));
    while l < h {
        let m = l + (h - l) / 2;
        if pred(unkey(m)) {
            h = m;
        } else {
            l = m + 1;
        }
    }
    unkey(l)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegCalibration {
    pub alpha: f64,
    /// Signed correction; never clamped.
    #[serde(with = "crate::serde_f64")]
    pub q_correction: f64,
    pub scores: Vec<f64>,
}

impl RegCalibration {
    pub fn interval(&self, pred: &QuantilePair) -> PredictionInterval {
        cqr_interval(pred, self.q_correction)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        let expected = conformal_threshold(&c.scores, c.alpha)?;
        if expected.to_bits() != c.q_correction.to_bits() {
            return Err(Error::invalid(format!(
                "stored correction {} disagrees with scores ({expected})",
                c.q_correction
            )));
        }
        Ok(c)
    }
}

pub fn calibrate_reg(preds: &[QuantilePair], ys: &[f64], alpha: f64) -> Result<RegCalibration> {
    if preds.is_empty() {
        return Err(Error::Empty("calibration set"));
    }
    if preds.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: preds.len(),
            got: ys.len(),
        });
    }
    let scores: Vec<f64> = preds.iter().zip(ys).map(|(p, y)| cqr_score(p, *y)).collect();
    Ok(RegCalibration {
        alpha,
        q_correction: conformal_threshold(&scores, alpha)?,
        scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegPrediction {
    pub interval: PredictionInterval,
    /// Mean quantile pair over the MC passes.
    pub mean: QuantilePair,
    pub variance: Vec<f64>,
    pub passes: usize,
}

/// Adaptive MC dropout over a two-output quantile predictor, then the
/// conformal correction on the mean pair.
pub fn mc_cp_regress<P: StochasticPredictor + ?Sized>(
    predictor: &P,
    x: &[f64],
    cfg: &AdaptiveConfig,
    calibration: &RegCalibration,
    levels: (f64, f64),
    rng: &mut Rng,
) -> Result<RegPrediction> {
    let res = adaptive_mc_dropout(predictor, x, cfg, rng)?;
    let mean = QuantilePair::from_output(&res.mean, levels)?;
    Ok(RegPrediction {
        interval: calibration.interval(&mean),
        mean,
        variance: res.variance,
        passes: res.passes,
    })
}

/// Number of pairs with `lo > hi`.
pub fn crossing_count(preds: &[QuantilePair]) -> usize {
    preds.iter().filter(|p| p.is_crossed()).count()
}
