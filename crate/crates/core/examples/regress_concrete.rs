//! CQR against MC-CP on the bundled Concrete compressive-strength data,
//! driven through the experiment harness and `configs/concrete.json`.
//!
//!     cargo run --release --example regress_concrete [trials]

use mccp::harness::{run, ExperimentConfig, Method};
use mccp::Result;

fn main() -> Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/concrete.json");
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(t) = std::env::args().nth(1).and_then(|s| s.parse().ok()) {
        cfg.trials = t;
    }
    cfg.methods = Some(vec![Method::Cqr, Method::McCp]);
    let (res, _) = run(&cfg)?;
    println!("{} trials, alpha {}", cfg.trials, cfg.conformal.alpha);
    for r in &res.summary {
        let mae = r.mae.expect("regression rows carry MAE");
        println!(
            "{:<6} coverage {:.4} ± {:.4}  mae {:.3} ± {:.3}  width {:.3}  passes {:.1}",
            r.method.to_string(),
            r.coverage.mean,
            r.coverage.std,
            mae.mean,
            mae.std,
            r.mean_size.mean,
            r.mean_passes.mean
        );
    }
    Ok(())
}
