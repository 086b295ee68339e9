//! Conformal classification by hand: train a dropout MLP on Gaussian
//! blobs, then compare naive, RAPS and MC-CP prediction sets.
//!
//!     cargo run --release --example classify_blobs [seed]

use mccp::adaptive::AdaptiveConfig;
use mccp::conformal::{calibrate, fit_temperature, mc_cp_classify, ClsMethod, TemperatureMode, TEMPERATURE_BOUNDS};
use mccp::data::{split, synth_blobs, SplitSpec};
use mccp::metrics::EvalReport;
use mccp::nn::{train, MlpSpec, TrainConfig};
use mccp::predictor::StochasticPredictor;
use mccp::rng::stream;
use mccp::{ProbVector, Result};

fn main() -> Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let alpha = 0.1;

    let ds = synth_blobs(3000, 3, 2, 2.0, seed)?;
    let s = split(&ds, &SplitSpec::from_sizes(1500, 500, 1000, seed))?;
    let spec = MlpSpec::classifier(2, 3).with_hidden(&[64, 32]).with_dropout(0.5);
    let (model, report) = train(&spec, &s.train.features, &s.train.targets, &TrainConfig::classification(seed))?;
    println!("final training loss {:.4}", report.epoch_losses.last().unwrap());

    let logits = |xs: &[Vec<f64>]| xs.iter().map(|x| model.predict_deterministic(x)).collect::<Result<Vec<_>>>();
    let (cal_logits, val_logits) = (logits(&s.calibration.features)?, logits(&s.validation.features)?);
    let (cal_y, val_y) = (s.calibration.labels(), s.validation.labels());
    let t = fit_temperature(&cal_logits, &cal_y, TEMPERATURE_BOUNDS)?;
    println!("temperature {t:.3}");

    let probs = |ls: &[Vec<f64>], t: f64| ls.iter().map(|l| ProbVector::softmax(l, t)).collect::<Result<Vec<_>>>();
    let raps = ClsMethod::Raps {
        lambda: 0.1,
        k_reg: 1,
        include_crossing: false,
    };
    let adaptive = AdaptiveConfig::new(200, 5e-4, 10);

    println!("{:<8} {:>8} {:>6} {:>10} {:>7}", "method", "coverage", "size", "singletons", "passes");
    for (name, method, temp) in [("naive", ClsMethod::Naive, 1.0), ("raps", raps, t)] {
        let cal = calibrate(method, &probs(&cal_logits, temp)?, &cal_y, alpha, temp)?;
        let vp = probs(&val_logits, temp)?;
        let sets: Vec<_> = vp.iter().map(|p| cal.predict_set(p)).collect();
        print_row(name, &EvalReport::for_sets(&sets, &val_y, &vp, &vec![1; sets.len()], 3)?);
    }

    // MC-CP: scores from the MC-mean probabilities on both sides.
    let mc = |xs: &[Vec<f64>], cal: &mccp::conformal::ClsCalibration, which: u64| {
        xs.iter()
            .enumerate()
            .map(|(i, x)| {
                let mut rng = stream(seed, &[which, i as u64]);
                mc_cp_classify(&model, x, &adaptive, cal, TemperatureMode::PerPass, &mut rng)
            })
            .collect::<Result<Vec<_>>>()
    };
    let dummy = calibrate(raps, &probs(&cal_logits[..1], t)?, &cal_y[..1], 0.5, t)?;
    let cal_mean: Vec<_> = mc(&s.calibration.features, &dummy, 1)?.into_iter().map(|p| p.mean).collect();
    let cal = calibrate(raps, &cal_mean, &cal_y, alpha, t)?;
    let preds = mc(&s.validation.features, &cal, 0)?;
    let sets: Vec<_> = preds.iter().map(|p| p.set.clone()).collect();
    let means: Vec<_> = preds.iter().map(|p| p.mean.clone()).collect();
    let passes: Vec<_> = preds.iter().map(|p| p.passes).collect();
    print_row("mc-cp", &EvalReport::for_sets(&sets, &val_y, &means, &passes, 3)?);
    Ok(())
}

fn print_row(name: &str, r: &EvalReport) {
    println!(
        "{name:<8} {:>8.4} {:>6.3} {:>10.3} {:>7.1}",
        r.coverage,
        r.mean_size,
        r.singleton_fraction.unwrap_or(f64::NAN),
        r.mean_passes
    );
}
