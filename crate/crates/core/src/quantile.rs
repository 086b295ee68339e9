//! Finite-sample conformal quantiles as exact order statistics.

use crate::error::{Error, Result};

/// The 1-based order-statistic index `⌈(n+1)(1-α)⌉`.
///
/// Products that land within 1e-9 (relative) of an integer are snapped to
/// it, so that e.g. `n = 99, α = 0.1` yields 90 rather than 91 after
/// rounding noise.
pub fn conformal_index(n: usize, alpha: f64) -> Result<usize> {
    if n == 0 {
        return Err(Error::Empty("calibration scores"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {alpha} outside (0, 1)")));
    }
    let x = (n as f64 + 1.0) * (1.0 - alpha);
    let r = x.round();
    let idx = if (x - r).abs() <= 1e-9 * x.max(1.0) {
        r
    } else {
        x.ceil()
    };
    Ok(idx as usize)
}

/// The `index`-th smallest score (1-based, no interpolation).
///
/// An index beyond the number of scores yields `+∞`, which downstream set
/// and interval builders read as "include everything".
pub fn empirical_quantile(scores: &[f64], index: usize) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("scores"));
    }
    if index == 0 {
        return Err(Error::invalid("order-statistic index is 1-based"));
    }
    if index > scores.len() {
        return Ok(f64::INFINITY);
    }
    let mut buf = scores.to_vec();
    let (_, kth, _) = buf.select_nth_unstable_by(index - 1, f64::total_cmp);
    Ok(*kth)
}

/// `empirical_quantile(scores, conformal_index(scores.len(), alpha))`.
pub fn conformal_threshold(scores: &[f64], alpha: f64) -> Result<f64> {
    empirical_quantile(scores, conformal_index(scores.len(), alpha)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sort_oracle(scores: &[f64], index: usize) -> f64 {
        let mut v = scores.to_vec();
        v.sort_by(f64::total_cmp);
        v.get(index - 1).copied().unwrap_or(f64::INFINITY)
    }

    #[test]
    fn order_statistic_examples() {
        assert_eq!(empirical_quantile(&[0.4, 0.1, 0.3, 0.2], 3).unwrap(), 0.3);
        for i in 1..=3 {
            assert_eq!(empirical_quantile(&[0.5, 0.5, 0.5], i).unwrap(), 0.5);
        }
        assert_eq!(empirical_quantile(&[0.7], 2).unwrap(), f64::INFINITY);
        assert!(empirical_quantile(&[], 1).is_err());
    }

    #[test]
    fn index_examples() {
        assert_eq!(conformal_index(4, 0.5).unwrap(), 3);
        assert_eq!(conformal_index(99, 0.1).unwrap(), 90);
        assert_eq!(conformal_index(1, 0.1).unwrap(), 2);
        assert_eq!(conformal_index(500, 0.1).unwrap(), 451);
        assert_eq!(conformal_index(300, 0.1).unwrap(), 271);
    }

    proptest! {
        #[test]
        fn index_never_undercovers(n in 1usize..5000, alpha in 0.001f64..0.999) {
            let k = conformal_index(n, alpha).unwrap();
            prop_assert!(k as f64 / n as f64 >= 1.0 - alpha - 1e-12);
            // and it is the smallest such index w.r.t. (n+1)
            prop_assert!((k as f64 - 1.0) < (n as f64 + 1.0) * (1.0 - alpha) + 1e-6);
        }

        #[test]
        fn matches_sort_oracle(
            scores in prop::collection::vec(-10.0f64..10.0, 1..64),
            idx in 1usize..80,
        ) {
            prop_assert_eq!(empirical_quantile(&scores, idx).unwrap(), sort_oracle(&scores, idx));
        }
    }
}
