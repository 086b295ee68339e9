//! Adaptive versus fixed-budget MC dropout on a trained quantile network:
//! same posterior mean to within sampling noise, far fewer forward passes.
//!
//!     cargo run --release --example adaptive_dropout

use mccp::adaptive::{adaptive_mc_dropout, batch_mc_dropout, AdaptiveConfig};
use mccp::data::{split, synth_hetero, NoiseProfile, SplitSpec};
use mccp::nn::{train, MlpSpec, TrainConfig};
use mccp::rng::stream;
use mccp::Result;

fn main() -> Result<()> {
    let ds = synth_hetero(1500, NoiseProfile::default(), 3)?;
    let s = split(&ds, &SplitSpec::from_sizes(1000, 100, 400, 3))?;
    let spec = MlpSpec::regressor(1).with_hidden(&[64, 64]).with_dropout(0.25);
    let mut tc = TrainConfig::regression(3);
    tc.epochs = 40;
    let (model, _) = train(&spec, &s.train.features, &s.train.targets, &tc)?;

    let cfg = AdaptiveConfig::default();
    let k = cfg.max_passes;
    println!("{:>8} {:>8} {:>22} {:>22}", "x", "passes", "adaptive mean", "fixed-K mean");
    let mut total = 0;
    for (i, x) in s.validation.features.iter().take(10).enumerate() {
        let a = adaptive_mc_dropout(&model, x, &cfg, &mut stream(1, &[i as u64]))?;
        let b = batch_mc_dropout(&model, x, k, &mut stream(2, &[i as u64]))?;
        total += a.passes;
        println!(
            "{:>8.3} {:>8} {:>10.4} {:>10.4}  {:>10.4} {:>10.4}",
            x[0], a.passes, a.mean[0], a.mean[1], b.mean[0], b.mean[1]
        );
    }
    println!("mean passes {:.1} of {k} ({:.0}% saved)", total as f64 / 10.0, 100.0 * (1.0 - total as f64 / (10 * k) as f64));
    Ok(())
}
