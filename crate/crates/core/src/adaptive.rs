//! Adaptive Monte Carlo dropout.
//!
//! Stochastic forward passes are drawn one at a time while a per-dimension
//! running variance is maintained. From the second pass on, the absolute
//! change of every dimension's variance is compared to `delta`: if all
//! changes are within it the patience counter grows, otherwise it drops back
//! to zero. Sampling stops once the counter reaches `patience`, or after
//! `max_passes` draws.
//!
//! With `patience >= max_passes` the stopping rule can never fire and the
//! procedure is ordinary fixed-budget MC dropout ([`batch_mc_dropout`]).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::MomentAccumulator;
use crate::predictor::StochasticPredictor;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    /// Maximum number of forward passes (K).
    pub max_passes: usize,
    /// Largest per-dimension variance change that still counts as converged.
    pub delta: f64,
    /// Consecutive converged passes required to stop.
    pub patience: usize,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            max_passes: 1000,
            delta: 5e-4,
            patience: 10,
        }
    }
}

impl AdaptiveConfig {
    pub fn new(max_passes: usize, delta: f64, patience: usize) -> Self {
        Self {
            max_passes,
            delta,
            patience,
        }
    }

    /// Fixed-budget MC dropout expressed as an adaptive configuration.
    pub fn fixed(max_passes: usize) -> Self {
        Self {
            max_passes,
            delta: 0.0,
            patience: max_passes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_passes == 0 {
            return Err(Error::invalid("max_passes must be positive"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be positive"));
        }
        if self.delta.is_nan() || self.delta < 0.0 {
            return Err(Error::invalid(format!("delta {} must be >= 0", self.delta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveResult {
    /// Posterior predictive mean over all passes performed.
    pub mean: Vec<f64>,
    /// Population variance per dimension over all passes performed.
    pub variance: Vec<f64>,
    pub passes: usize,
    /// True when sampling stopped because patience was reached.
    pub converged: bool,
}

/// State after one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PassTrace {
    /// 1-based pass number.
    pub pass: usize,
    pub variance: Vec<f64>,
    /// `|σ - σ_prev|` per dimension; absent on the first pass.
    pub diff: Option<Vec<f64>>,
    /// Patience counter after this pass.
    pub count: usize,
}

pub fn adaptive_mc_dropout<P: StochasticPredictor + ?Sized>(
    predictor: &P,
    x: &[f64],
    cfg: &AdaptiveConfig,
    rng: &mut Rng,
) -> Result<AdaptiveResult> {
    run(predictor, x, cfg, rng, None)
}

/// Like [`adaptive_mc_dropout`], also returning the per-pass variance trace.
pub fn adaptive_mc_dropout_traced<P: StochasticPredictor + ?Sized>(
    predictor: &P,
    x: &[f64],
    cfg: &AdaptiveConfig,
    rng: &mut Rng,
) -> Result<(AdaptiveResult, Vec<PassTrace>)> {
    let mut trace = Vec::new();
    let res = run(predictor, x, cfg, rng, Some(&mut trace))?;
    Ok((res, trace))
}

/// Conventional MC dropout: exactly `passes` draws, no convergence check.
pub fn batch_mc_dropout<P: StochasticPredictor + ?Sized>(
    predictor: &P,
    x: &[f64],
    passes: usize,
    rng: &mut Rng,
) -> Result<AdaptiveResult> {
    if passes == 0 {
        return Err(Error::invalid("at least one pass is required"));
    }
    let mut acc = MomentAccumulator::new();
    for pass in 1..=passes {
        let y = draw(predictor, x, rng, pass)?;
        acc.update(&y)?;
    }
    Ok(AdaptiveResult {
        mean: acc.mean().to_vec(),
        variance: acc.variance(),
        passes,
        converged: false,
    })
}

fn draw<P: StochasticPredictor + ?Sized>(
    predictor: &P,
    x: &[f64],
    rng: &mut Rng,
    pass: usize,
) -> Result<Vec<f64>> {
    predictor
        .predict_once(x, rng)
        .map_err(|e| Error::Predictor {
            pass,
            source: Box::new(e),
        })
}

fn run<P: StochasticPredictor + ?Sized>(
    predictor: &P,
    x: &[f64],
    cfg: &AdaptiveConfig,
    rng: &mut Rng,
    mut trace: Option<&mut Vec<PassTrace>>,
) -> Result<AdaptiveResult> {
    cfg.validate()?;
    let mut acc = MomentAccumulator::new();
    let mut count = 0;
    let mut passes = 0;
    let mut var = Vec::new();
    let mut prev_var = Vec::new();

    while count < cfg.patience && passes < cfg.max_passes {
        passes += 1;
        let y = draw(predictor, x, rng, passes)?;
        acc.update(&y).map_err(|e| Error::Predictor {
            pass: passes,
            source: Box::new(e),
        })?;
        var.resize(acc.dim(), 0.0);
        acc.variance_into(&mut var);

        let mut diff = None;
        if passes > 1 {
            let d: Vec<f64> = var.iter().zip(&prev_var).map(|(s, p)| (s - p).abs()).collect();
            if d.iter().all(|z| *z <= cfg.delta) {
                count += 1;
            } else {
                count = 0;
            }
            diff = Some(d);
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(PassTrace {
                pass: passes,
                variance: var.clone(),
                diff,
                count,
            });
        }
        std::mem::swap(&mut prev_var, &mut var);
    }

    Ok(AdaptiveResult {
        mean: acc.mean().to_vec(),
        variance: acc.variance(),
        passes,
        converged: count >= cfg.patience,
    })
}

/// Header of the variance-trace CSV.
pub const TRACE_HEADER: [&str; 6] = ["sample", "pass", "dim", "variance", "diff", "count"];

/// Writes one row per `(pass, dimension)`. The diff column is empty on the
/// first pass.
pub fn write_trace_rows<W: Write>(
    out: &mut csv::Writer<W>,
    sample: usize,
    trace: &[PassTrace],
) -> Result<()> {
    for t in trace {
        for (dim, v) in t.variance.iter().enumerate() {
            let diff = t
                .diff
                .as_ref()
                .map(|d| d[dim].to_string())
                .unwrap_or_default();
            out.write_record([
                sample.to_string(),
                t.pass.to_string(),
                dim.to_string(),
                v.to_string(),
                diff,
                t.count.to_string(),
            ])?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::ConstantPredictor;
    use crate::rng::stream;
    use std::cell::{Cell, RefCell};

    /// Plays back a fixed script, recording nothing else.
    struct Script {
        rows: Vec<Vec<f64>>,
        next: Cell<usize>,
    }

    impl Script {
        fn new(rows: Vec<Vec<f64>>) -> Self {
            Self {
                rows,
                next: Cell::new(0),
            }
        }
    }

    impl StochasticPredictor for Script {
        fn output_dim(&self) -> usize {
            self.rows[0].len()
        }
        fn predict_once(&self, _: &[f64], _: &mut Rng) -> Result<Vec<f64>> {
            let i = self.next.get();
            self.next.set(i + 1);
            self.rows.get(i).cloned().ok_or(Error::ReplayExhausted(i))
        }
        fn predict_deterministic(&self, _: &[f64]) -> Result<Vec<f64>> {
            Ok(self.rows[0].clone())
        }
    }

    /// Uniform noise around a centre, recording every draw.
    struct Noisy {
        seen: RefCell<Vec<Vec<f64>>>,
    }

    impl StochasticPredictor for Noisy {
        fn output_dim(&self) -> usize {
            3
        }
        fn predict_once(&self, _: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
            use rand::Rng as _;
            let y: Vec<f64> = (0..3).map(|d| d as f64 + rng.random::<f64>()).collect();
            self.seen.borrow_mut().push(y.clone());
            Ok(y)
        }
        fn predict_deterministic(&self, _: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![0.5, 1.5, 2.5])
        }
    }

    #[test]
    fn constant_predictor_stops_after_patience_plus_one() {
        let p = ConstantPredictor(vec![0.2, 0.8]);
        for delta in [0.0, 5e-4, 1.0] {
            let r = adaptive_mc_dropout(&p, &[], &AdaptiveConfig::new(1000, delta, 10), &mut stream(0, &[]))
                .unwrap();
            assert_eq!(r.passes, 11);
            assert_eq!(r.variance, vec![0.0, 0.0]);
            assert!(r.converged);
        }
    }

    #[test]
    fn huge_delta_stops_after_patience_plus_one() {
        let p = Noisy { seen: RefCell::new(Vec::new()) };
        let r = adaptive_mc_dropout(&p, &[], &AdaptiveConfig::new(1000, 1.0, 7), &mut stream(1, &[]))
            .unwrap();
        assert_eq!(r.passes, 8);
    }

    #[test]
    fn alternating_replay_exhausts_budget() {
        // Variance changes at every pass, so diff > 0 = delta in all dims.
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| if i % 2 == 0 { vec![0.0, 1.0] } else { vec![1.0, 0.0] })
            .collect();
        let p = Script::new(rows);
        let r = adaptive_mc_dropout(&p, &[], &AdaptiveConfig::new(50, 0.0, 3), &mut stream(0, &[]))
            .unwrap();
        assert_eq!(r.passes, 50);
        assert!(!r.converged);
    }

    #[test]
    fn one_spiking_dimension_resets_patience() {
        // Dims settle, then dim 1 jumps once, then settles again.
        let mut rows = vec![vec![0.5, 0.5]; 8];
        rows.push(vec![0.5, 0.9]);
        rows.extend(vec![vec![0.5, 0.5]; 20]);
        let p = Script::new(rows);
        let (r, trace) = adaptive_mc_dropout_traced(
            &p,
            &[],
            &AdaptiveConfig::new(100, 1e-3, 5),
            &mut stream(0, &[]),
        )
        .unwrap();
        // passes 2..6 reach count 5 before the spike
        assert_eq!(r.passes, 6);
        assert!(r.converged);
        assert_eq!(trace.iter().map(|t| t.count).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4, 5]);

        let p = Script::new({
            let mut rows = vec![vec![0.5, 0.5]; 4];
            rows.push(vec![0.5, 0.9]);
            rows.extend(vec![vec![0.5, 0.5]; 40]);
            rows
        });
        let (_, trace) = adaptive_mc_dropout_traced(
            &p,
            &[],
            &AdaptiveConfig::new(100, 1e-3, 5),
            &mut stream(0, &[]),
        )
        .unwrap();
        let counts: Vec<usize> = trace.iter().map(|t| t.count).collect();
        assert_eq!(&counts[..6], &[0, 1, 2, 3, 0, 0]);
        assert_eq!(*counts.last().unwrap(), 5);
    }

    #[test]
    fn moments_match_two_pass_over_recorded_draws() {
        let p = Noisy { seen: RefCell::new(Vec::new()) };
        let r = adaptive_mc_dropout(&p, &[], &AdaptiveConfig::new(400, 1e-3, 10), &mut stream(5, &[]))
            .unwrap();
        let seen = p.seen.borrow();
        assert_eq!(seen.len(), r.passes);
        let n = seen.len() as f64;
        for d in 0..3 {
            let mean = seen.iter().map(|y| y[d]).sum::<f64>() / n;
            let var = seen.iter().map(|y| (y[d] - mean).powi(2)).sum::<f64>() / n;
            assert!((r.mean[d] - mean).abs() <= 1e-12);
            assert!((r.variance[d] - var).abs() <= 1e-12);
        }
    }

    #[test]
    fn batch_equals_adaptive_with_unreachable_patience() {
        let p = Noisy { seen: RefCell::new(Vec::new()) };
        let a = adaptive_mc_dropout(&p, &[], &AdaptiveConfig::fixed(64), &mut stream(9, &[])).unwrap();
        let b = batch_mc_dropout(&p, &[], 64, &mut stream(9, &[])).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.passes, 64);
    }

    #[test]
    fn single_pass_batch() {
        let p = Noisy { seen: RefCell::new(Vec::new()) };
        let r = batch_mc_dropout(&p, &[], 1, &mut stream(2, &[])).unwrap();
        assert_eq!(r.mean, p.seen.borrow()[0]);
        assert_eq!(r.variance, vec![0.0; 3]);
    }

    #[test]
    fn predictor_failure_carries_pass_index() {
        let p = Script::new(vec![vec![0.0], vec![1.0], vec![0.0]]);
        let err = adaptive_mc_dropout(&p, &[], &AdaptiveConfig::new(10, 0.0, 10), &mut stream(0, &[]))
            .unwrap_err();
        assert!(matches!(err, Error::Predictor { pass: 4, .. }), "{err}");
    }

    #[test]
    fn trace_rows_for_constant_predictor() {
        let p = ConstantPredictor(vec![0.3, 0.7]);
        let (_, trace) =
            adaptive_mc_dropout_traced(&p, &[], &AdaptiveConfig::default(), &mut stream(0, &[])).unwrap();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(TRACE_HEADER).unwrap();
        write_trace_rows(&mut w, 0, &trace).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 11 * 2);
        assert_eq!(lines[1], "0,1,0,0,,0");
        assert!(lines[3..].iter().all(|l| l.split(',').nth(4) == Some("0")));
    }
}
