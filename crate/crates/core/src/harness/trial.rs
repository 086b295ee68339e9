//! One trial: data, split, training, calibration and per-method evaluation.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{CalibrationSource, DatasetSource, ExperimentConfig, Method};
use crate::adaptive::{adaptive_mc_dropout, AdaptiveConfig, AdaptiveResult};
use crate::conformal::{
    calibrate, calibrate_reg, crossing_count, fit_temperature, mc_cp_classify, mc_cp_regress,
    ClsCalibration, ClsMethod, RegCalibration, TEMPERATURE_BOUNDS,
};
use crate::data::{load_csv, split, synth_blobs, synth_hetero, Splits, TabularDataset, Task};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::nn::{train, Mlp, TrainReport};
use crate::predictor::{StochasticPredictor, TemperatureScaled};
use crate::rng::{derive_seed, purpose, stream, Rng};
use crate::types::{PredictionInterval, PredictionSet, ProbVector, QuantilePair};

/// Sub-streams of the MC purpose.
pub const MC_VALIDATION: u64 = 0;
pub const MC_CALIBRATION: u64 = 1;

pub fn trial_seed(master: u64, trial: usize) -> u64 {
    derive_seed(master, &[purpose::TRIAL, trial as u64])
}

/// Loads the rows that stay fixed across trials (CSV sources).
pub fn load_base(cfg: &ExperimentConfig) -> Result<Option<TabularDataset>> {
    match &cfg.dataset {
        DatasetSource::Csv { path, target } => Ok(Some(load_csv(path, target, cfg.task)?)),
        DatasetSource::Replay { .. } => Err(Error::config("dataset.kind", "replay sources are only valid for trace")),
        _ => Ok(None),
    }
}

/// The dataset of one trial: the shared CSV, or a fresh synthetic draw.
pub fn trial_dataset(cfg: &ExperimentConfig, base: Option<&TabularDataset>, seed: u64) -> Result<TabularDataset> {
    let data_seed = derive_seed(seed, &[purpose::DATA]);
    match (&cfg.dataset, base) {
        (_, Some(b)) => Ok(b.clone()),
        (DatasetSource::SynthBlobs { n, classes, dim, separation }, None) => {
            synth_blobs(*n, *classes, *dim, *separation, data_seed)
        }
        (DatasetSource::SynthHetero { n, noise }, None) => synth_hetero(*n, *noise, data_seed),
        _ => Err(Error::config("dataset", "source needs to be loaded first")),
    }
}

/// Everything a trial shares between methods.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub trial: usize,
    pub seed: u64,
    pub splits: Splits,
    pub num_classes: usize,
    pub model: Mlp,
    pub train_report: TrainReport,
}

impl Prepared {
    /// Validation rows actually evaluated.
    pub fn eval_len(&self, cfg: &ExperimentConfig) -> usize {
        let n = self.splits.validation.len();
        cfg.eval_limit.map_or(n, |l| l.min(n))
    }
}

pub fn prepare(cfg: &ExperimentConfig, base: Option<&TabularDataset>, trial: usize) -> Result<Prepared> {
    let seed = trial_seed(cfg.master_seed, trial);
    let ds = trial_dataset(cfg, base, seed)?;
    let num_classes = ds.num_classes();
    let splits = split(&ds, &cfg.split_spec(seed))?;
    let spec = cfg.model().spec(cfg.task, ds.dim(), num_classes);
    let (model, train_report) = train(
        &spec,
        &splits.train.features,
        &splits.train.targets,
        &cfg.train_config(seed),
    )?;
    Ok(Prepared {
        trial,
        seed,
        splits,
        num_classes,
        model,
        train_report,
    })
}

/// Per-input generator for MC passes; identical across methods of a trial.
pub fn mc_stream(seed: u64, which: u64, index: usize) -> Rng {
    stream(seed, &[purpose::MC, which, index as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_calibration: usize,
    pub n_validation: usize,
    pub final_train_loss: f64,
    /// Fitted temperature (classification).
    pub temperature: Option<f64>,
    /// Conformal threshold or correction per calibrated method.
    #[serde(with = "threshold_map")]
    pub thresholds: BTreeMap<Method, f64>,
    pub reports: BTreeMap<Method, EvalReport>,
}

/// Serializes `BTreeMap<Method, f64>` keeping non-finite values.
mod threshold_map {
    use super::Method;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    #[derive(Serialize, Deserialize)]
    struct Entry(#[serde(with = "crate::serde_f64")] f64);

    pub fn serialize<S: Serializer>(m: &BTreeMap<Method, f64>, s: S) -> Result<S::Ok, S::Error> {
        m.iter().map(|(k, v)| (*k, Entry(*v))).collect::<BTreeMap<_, _>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Method, f64>, D::Error> {
        Ok(BTreeMap::<Method, Entry>::deserialize(d)?.into_iter().map(|(k, v)| (k, v.0)).collect())
    }
}

/// Wall-clock per evaluated input, in milliseconds. Informational.
pub type Timings = BTreeMap<Method, f64>;

fn timed<T>(f: impl FnOnce() -> Result<T>, n: usize) -> Result<(T, f64)> {
    let t0 = Instant::now();
    let out = f()?;
    Ok((out, t0.elapsed().as_secs_f64() * 1e3 / n.max(1) as f64))
}

fn run_mc<P: StochasticPredictor + Sync>(
    p: &P,
    xs: &[Vec<f64>],
    cfg: &AdaptiveConfig,
    seed: u64,
    which: u64,
) -> Result<Vec<AdaptiveResult>> {
    xs.par_iter()
        .enumerate()
        .map(|(i, x)| adaptive_mc_dropout(p, x, cfg, &mut mc_stream(seed, which, i)))
        .collect()
}

fn probs_of(logits: &[Vec<f64>], temperature: f64) -> Result<Vec<ProbVector>> {
    logits.iter().map(|z| ProbVector::softmax(z, temperature)).collect()
}

fn top1(p: &ProbVector) -> PredictionSet {
    PredictionSet {
        classes: vec![p.argmax()],
        top_confidence: p.top(),
    }
}

fn deterministic_outputs(model: &Mlp, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    xs.par_iter().map(|x| model.predict_deterministic(x)).collect()
}

/// Evaluates every requested method of the config on a prepared trial,
/// with `adaptive` as the MC configuration.
pub fn evaluate(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    adaptive: &AdaptiveConfig,
    methods: &[Method],
) -> Result<(TrialResult, Timings)> {
    let s = &prep.splits;
    let n_eval = prep.eval_len(cfg);
    let val_x = &s.validation.features[..n_eval];
    let mut result = TrialResult {
        trial: prep.trial,
        seed: prep.seed,
        n_train: s.train.len(),
        n_calibration: s.calibration.len(),
        n_validation: n_eval,
        final_train_loss: prep.train_report.epoch_losses.last().copied().unwrap_or(f64::NAN),
        temperature: None,
        thresholds: BTreeMap::new(),
        reports: BTreeMap::new(),
    };
    let mut timings = Timings::new();
    match cfg.task {
        Task::Classification => evaluate_cls(cfg, prep, adaptive, methods, val_x, &mut result, &mut timings)?,
        Task::Regression => evaluate_reg(cfg, prep, adaptive, methods, val_x, &mut result, &mut timings)?,
    }
    Ok((result, timings))
}

fn evaluate_cls(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    adaptive: &AdaptiveConfig,
    methods: &[Method],
    val_x: &[Vec<f64>],
    result: &mut TrialResult,
    timings: &mut Timings,
) -> Result<()> {
    let s = &prep.splits;
    let c = &cfg.conformal;
    let k = prep.num_classes;
    let val_y = &s.validation.labels()[..val_x.len()];
    let cal_y = s.calibration.labels();
    let cal_logits = deterministic_outputs(&prep.model, &s.calibration.features)?;
    let temperature = if methods.iter().any(|m| matches!(m, Method::Raps | Method::McCp)) {
        let t = fit_temperature(&cal_logits, &cal_y, TEMPERATURE_BOUNDS)?;
        result.temperature = Some(t);
        t
    } else {
        1.0
    };
    let report = |sets: &[PredictionSet], probs: &[ProbVector], passes: &[usize]| {
        EvalReport::for_sets(sets, val_y, probs, passes, k)
    };
    let ones = vec![1usize; val_x.len()];

    for &m in methods {
        let (rep, ms) = match m {
            Method::Baseline => timed(
                || {
                    let probs = probs_of(&deterministic_outputs(&prep.model, val_x)?, 1.0)?;
                    let sets: Vec<_> = probs.iter().map(top1).collect();
                    report(&sets, &probs, &ones)
                },
                val_x.len(),
            )?,
            Method::Mc => timed(
                || {
                    let p = TemperatureScaled::new(&prep.model, 1.0)?;
                    let res = run_mc(&p, val_x, adaptive, prep.seed, MC_VALIDATION)?;
                    let probs = res
                        .iter()
                        .map(|r| crate::conformal::cls::renormalize(&r.mean))
                        .collect::<Result<Vec<_>>>()?;
                    let sets: Vec<_> = probs.iter().map(top1).collect();
                    let passes: Vec<_> = res.iter().map(|r| r.passes).collect();
                    report(&sets, &probs, &passes)
                },
                val_x.len(),
            )?,
            Method::Naive | Method::Raps => {
                let (method, t) = if m == Method::Naive {
                    (ClsMethod::Naive, 1.0)
                } else {
                    (c.raps(), temperature)
                };
                let cal = calibrate(method, &probs_of(&cal_logits, t)?, &cal_y, c.alpha, t)?;
                result.thresholds.insert(m, cal.threshold);
                timed(
                    || {
                        let probs = probs_of(&deterministic_outputs(&prep.model, val_x)?, t)?;
                        let sets: Vec<_> = probs.iter().map(|p| cal.predict_set(p)).collect();
                        report(&sets, &probs, &ones)
                    },
                    val_x.len(),
                )?
            }
            Method::McCp => {
                let cal = mc_cp_calibration(cfg, prep, adaptive, &cal_logits, &cal_y, temperature)?;
                result.thresholds.insert(m, cal.threshold);
                timed(
                    || {
                        let preds = val_x
                            .par_iter()
                            .enumerate()
                            .map(|(i, x)| {
                                mc_cp_classify(
                                    &prep.model,
                                    x,
                                    adaptive,
                                    &cal,
                                    c.temperature_mode,
                                    &mut mc_stream(prep.seed, MC_VALIDATION, i),
                                )
                            })
                            .collect::<Result<Vec<_>>>()?;
                        let sets: Vec<_> = preds.iter().map(|p| p.set.clone()).collect();
                        let probs: Vec<_> = preds.iter().map(|p| p.mean.clone()).collect();
                        let passes: Vec<_> = preds.iter().map(|p| p.passes).collect();
                        report(&sets, &probs, &passes)
                    },
                    val_x.len(),
                )?
            }
            Method::Cqr => return Err(Error::config("methods", "cqr is a regression method")),
        };
        result.reports.insert(m, rep);
        timings.insert(m, ms);
    }
    Ok(())
}

/// RAPS calibration for MC-CP, on deterministic or MC-mean probabilities.
pub fn mc_cp_calibration(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    adaptive: &AdaptiveConfig,
    cal_logits: &[Vec<f64>],
    cal_y: &[usize],
    temperature: f64,
) -> Result<ClsCalibration> {
    let c = &cfg.conformal;
    let probs = match cfg.calibration_source() {
        CalibrationSource::Deterministic => probs_of(cal_logits, temperature)?,
        CalibrationSource::McMean => prep
            .splits
            .calibration
            .features
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                // A set-free pass through the same estimator used at prediction time.
                let pred = mc_cp_classify(
                    &prep.model,
                    x,
                    adaptive,
                    &ClsCalibration {
                        method: ClsMethod::Naive,
                        alpha: c.alpha,
                        temperature,
                        threshold: f64::INFINITY,
                        scores: Vec::new(),
                    },
                    c.temperature_mode,
                    &mut mc_stream(prep.seed, MC_CALIBRATION, i),
                )?;
                Ok(pred.mean)
            })
            .collect::<Result<Vec<_>>>()?,
    };
    calibrate(c.raps(), &probs, cal_y, c.alpha, temperature)
}

fn pairs(outputs: &[Vec<f64>], levels: (f64, f64)) -> Result<Vec<QuantilePair>> {
    outputs.iter().map(|o| QuantilePair::from_output(o, levels)).collect()
}

fn raw_interval(p: &QuantilePair) -> PredictionInterval {
    PredictionInterval::new(p.lo, p.hi)
}

/// CQR calibration for MC-CP, on deterministic or MC-mean quantile pairs.
pub fn mc_cp_reg_calibration(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    adaptive: &AdaptiveConfig,
) -> Result<RegCalibration> {
    let c = &cfg.conformal;
    let cal = &prep.splits.calibration;
    let outputs = match cfg.calibration_source() {
        CalibrationSource::Deterministic => deterministic_outputs(&prep.model, &cal.features)?,
        CalibrationSource::McMean => run_mc(&prep.model, &cal.features, adaptive, prep.seed, MC_CALIBRATION)?
            .into_iter()
            .map(|r| r.mean)
            .collect(),
    };
    calibrate_reg(&pairs(&outputs, c.quantile_levels)?, &cal.targets, c.alpha)
}

/// Outputs of one regression method on the evaluated validation rows.
#[derive(Debug, Clone)]
pub struct RegOutputs {
    /// Quantile pair before conformalization (MC mean for stochastic methods).
    pub raw: Vec<QuantilePair>,
    pub intervals: Vec<PredictionInterval>,
    pub passes: Vec<usize>,
    /// Conformal correction, for calibrated methods.
    pub q_correction: Option<f64>,
}

pub fn regression_outputs(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    adaptive: &AdaptiveConfig,
    method: Method,
) -> Result<RegOutputs> {
    let s = &prep.splits;
    let c = &cfg.conformal;
    let levels = c.quantile_levels;
    let val_x = &s.validation.features[..prep.eval_len(cfg)];
    let ones = vec![1usize; val_x.len()];
    Ok(match method {
        Method::Baseline | Method::Cqr => {
            let cal = if method == Method::Cqr {
                let cal_pairs = pairs(&deterministic_outputs(&prep.model, &s.calibration.features)?, levels)?;
                Some(calibrate_reg(&cal_pairs, &s.calibration.targets, c.alpha)?)
            } else {
                None
            };
            let raw = pairs(&deterministic_outputs(&prep.model, val_x)?, levels)?;
            let intervals = raw
                .iter()
                .map(|p| cal.as_ref().map_or_else(|| raw_interval(p), |c| c.interval(p)))
                .collect();
            RegOutputs {
                raw,
                intervals,
                passes: ones,
                q_correction: cal.map(|c| c.q_correction),
            }
        }
        Method::Mc => {
            let res = run_mc(&prep.model, val_x, adaptive, prep.seed, MC_VALIDATION)?;
            let raw = pairs(&res.iter().map(|r| r.mean.clone()).collect::<Vec<_>>(), levels)?;
            RegOutputs {
                intervals: raw.iter().map(raw_interval).collect(),
                raw,
                passes: res.iter().map(|r| r.passes).collect(),
                q_correction: None,
            }
        }
        Method::McCp => {
            let cal = mc_cp_reg_calibration(cfg, prep, adaptive)?;
            let preds = val_x
                .par_iter()
                .enumerate()
                .map(|(i, x)| {
                    mc_cp_regress(&prep.model, x, adaptive, &cal, levels, &mut mc_stream(prep.seed, MC_VALIDATION, i))
                })
                .collect::<Result<Vec<_>>>()?;
            RegOutputs {
                raw: preds.iter().map(|p| p.mean).collect(),
                intervals: preds.iter().map(|p| p.interval).collect(),
                passes: preds.iter().map(|p| p.passes).collect(),
                q_correction: Some(cal.q_correction),
            }
        }
        m => return Err(Error::config("methods", format!("{m} is a classification method"))),
    })
}

fn evaluate_reg(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    adaptive: &AdaptiveConfig,
    methods: &[Method],
    val_x: &[Vec<f64>],
    result: &mut TrialResult,
    timings: &mut Timings,
) -> Result<()> {
    let val_y = &prep.splits.validation.targets[..val_x.len()];
    for &m in methods {
        let (out, ms) = timed(|| regression_outputs(cfg, prep, adaptive, m), val_x.len())?;
        let mut rep = EvalReport::for_intervals(&out.intervals, val_y, &out.passes, cfg.conformal.mae_mode)?;
        rep.crossing_count = Some(crossing_count(&out.raw));
        if let Some(q) = out.q_correction {
            result.thresholds.insert(m, q);
        }
        result.reports.insert(m, rep);
        timings.insert(m, ms);
    }
    Ok(())
}
