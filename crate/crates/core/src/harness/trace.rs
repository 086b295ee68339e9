use std::io::Write;
use std::path::Path;

use super::config::{DatasetSource, ExperimentConfig, Method};
use super::trial::{load_base, mc_stream, prepare, regression_outputs, Prepared, MC_VALIDATION};
use crate::adaptive::{adaptive_mc_dropout_traced, write_trace_rows, TRACE_HEADER};
use crate::conformal::{fit_temperature, TEMPERATURE_BOUNDS};
use crate::data::{ReplayFile, Task};
use crate::error::{Error, Result};
use crate::predictor::{StochasticPredictor, TemperatureScaled};
use crate::rng::stream;

/// Per-pass variance trace of the adaptive loop for each requested sample.
///
/// With a replay source, ids are replay sample ids. Otherwise they index
/// the validation rows of trial 0 and the passes are exactly those drawn by
/// `run` for the same rows; classification traces softmax outputs at the
/// fitted temperature.
pub fn trace<W: Write>(cfg: &ExperimentConfig, sample_ids: &[usize], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    if let DatasetSource::Replay { path } = &cfg.dataset {
        let file = ReplayFile::load(path)?;
        for &id in sample_ids {
            let s = file.stream(id)?;
            let (_, t) = adaptive_mc_dropout_traced(&s, &[], &cfg.adaptive, &mut stream(0, &[]))?;
            write_trace_rows(&mut w, id, &t)?;
        }
        w.flush()?;
        return Ok(());
    }
    if sample_ids.is_empty() {
        w.flush()?;
        return Ok(());
    }
    cfg.validate()?;
    let base = load_base(cfg)?;
    let prep = prepare(cfg, base.as_ref(), 0)?;
    let n = prep.eval_len(cfg);
    if let Some(&bad) = sample_ids.iter().find(|&&i| i >= n) {
        return Err(Error::UnknownSample(bad));
    }
    let mut traced = |p: &dyn Fn(usize) -> Result<Vec<crate::adaptive::PassTrace>>| -> Result<()> {
        for &id in sample_ids {
            write_trace_rows(&mut w, id, &p(id)?)?;
        }
        Ok(())
    };
    let xs = &prep.splits.validation.features;
    match cfg.task {
        Task::Classification => {
            let p = TemperatureScaled::new(&prep.model, fitted_temperature(&prep)?)?;
            traced(&|i| trace_one(&p, &xs[i], cfg, &prep, i))?;
        }
        Task::Regression => traced(&|i| trace_one(&prep.model, &xs[i], cfg, &prep, i))?,
    }
    w.flush()?;
    Ok(())
}

fn trace_one<P: StochasticPredictor>(
    p: &P,
    x: &[f64],
    cfg: &ExperimentConfig,
    prep: &Prepared,
    i: usize,
) -> Result<Vec<crate::adaptive::PassTrace>> {
    Ok(adaptive_mc_dropout_traced(p, x, &cfg.adaptive, &mut mc_stream(prep.seed, MC_VALIDATION, i))?.1)
}

fn fitted_temperature(prep: &Prepared) -> Result<f64> {
    let cal = &prep.splits.calibration;
    let logits = cal
        .features
        .iter()
        .map(|x| prep.model.predict_deterministic(x))
        .collect::<Result<Vec<_>>>()?;
    fit_temperature(&logits, &cal.labels(), TEMPERATURE_BOUNDS)
}

pub fn cmd_trace(cfg: &ExperimentConfig, sample_ids: &[usize], out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let f = std::fs::File::create(out.join("trace.csv"))?;
    trace(cfg, sample_ids, f)
}

/// Column names of the quantile plot data: index, y, then raw and
/// conformalized bounds per method.
pub fn plotdata_header(methods: &[Method]) -> Vec<String> {
    let mut h = vec!["index".to_owned(), "y".to_owned()];
    for m in methods {
        for suffix in ["raw_lo", "raw_hi", "lo", "hi"] {
            h.push(format!("{m}_{suffix}"));
        }
    }
    h
}

/// Raw and conformalized quantile bands of every method on the validation
/// rows of trial 0, in standardized target units.
pub fn quantile_plotdata<W: Write>(cfg: &ExperimentConfig, out: W) -> Result<()> {
    cfg.validate()?;
    if cfg.task != Task::Regression {
        return Err(Error::config("task", "plotdata needs a regression task"));
    }
    let methods = cfg.methods();
    let base = load_base(cfg)?;
    let prep = prepare(cfg, base.as_ref(), 0)?;
    let outputs = methods
        .iter()
        .map(|&m| regression_outputs(cfg, &prep, &cfg.adaptive, m))
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(plotdata_header(&methods))?;
    for i in 0..prep.eval_len(cfg) {
        let mut rec = vec![i.to_string(), prep.splits.validation.targets[i].to_string()];
        for o in &outputs {
            let (raw, iv) = (o.raw[i], o.intervals[i]);
            for v in [raw.lo, raw.hi, iv.lo, iv.hi] {
                rec.push(v.to_string());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_quantile_plotdata(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    quantile_plotdata(cfg, std::fs::File::create(out.join("plotdata.csv"))?)
}
