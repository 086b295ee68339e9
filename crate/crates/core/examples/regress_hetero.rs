//! Conformalized quantile regression with and without MC dropout on
//! heteroscedastic synthetic data, where the true quantiles are known.
//!
//!     cargo run --release --example regress_hetero [seed]

use mccp::adaptive::AdaptiveConfig;
use mccp::conformal::{calibrate_reg, crossing_count, mc_cp_regress};
use mccp::data::{split, synth_hetero, NoiseProfile, SplitSpec};
use mccp::metrics::{EvalReport, MaeMode};
use mccp::nn::{train, MlpSpec, TrainConfig};
use mccp::predictor::StochasticPredictor;
use mccp::rng::stream;
use mccp::{QuantilePair, Result};

fn main() -> Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(11);
    let levels = (0.05, 0.95);
    let ds = synth_hetero(3000, NoiseProfile::default(), seed)?;
    let s = split(&ds, &SplitSpec::from_sizes(1500, 300, 1200, seed))?;
    let spec = MlpSpec::regressor(1).with_hidden(&[64, 64]).with_dropout(0.25);
    let (model, _) = train(&spec, &s.train.features, &s.train.targets, &TrainConfig::regression(seed))?;

    let det = |xs: &[Vec<f64>]| {
        xs.iter()
            .map(|x| QuantilePair::from_output(&model.predict_deterministic(x)?, levels))
            .collect::<Result<Vec<_>>>()
    };
    let cal_q = det(&s.calibration.features)?;
    let cal = calibrate_reg(&cal_q, &s.calibration.targets, 0.1)?;
    println!("conformal correction Q = {:+.4} (standardized units)", cal.q_correction);

    let val_q = det(&s.validation.features)?;
    println!("crossed raw pairs on validation: {}", crossing_count(&val_q));
    let ys = &s.validation.targets;
    let cqr: Vec<_> = val_q.iter().map(|q| cal.interval(q)).collect();
    let r = EvalReport::for_intervals(&cqr, ys, &vec![1; ys.len()], MaeMode::Midpoint)?;
    println!("cqr    coverage {:.4}  width {:.3}  mae {:.3}", r.coverage, r.mean_size, r.mae.unwrap());

    let adaptive = AdaptiveConfig::default();
    let preds = s
        .validation
        .features
        .iter()
        .enumerate()
        .map(|(i, x)| mc_cp_regress(&model, x, &adaptive, &cal, levels, &mut stream(seed, &[i as u64])))
        .collect::<Result<Vec<_>>>()?;
    let iv: Vec<_> = preds.iter().map(|p| p.interval).collect();
    let passes: Vec<_> = preds.iter().map(|p| p.passes).collect();
    let r = EvalReport::for_intervals(&iv, ys, &passes, MaeMode::Midpoint)?;
    println!(
        "mc-cp  coverage {:.4}  width {:.3}  mae {:.3}  passes {:.1}",
        r.coverage,
        r.mean_size,
        r.mae.unwrap(),
        r.mean_passes
    );
    Ok(())
}
