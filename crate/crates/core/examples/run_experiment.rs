//! Runs any experiment config and writes `results.json`, `table.csv` and
//! `timing.csv`, the same files as `mccp run`.
//!
//!     cargo run --release --example run_experiment -- examples/configs/blobs.json out/blobs

use std::path::PathBuf;

use mccp::harness::{cmd_run, ExperimentConfig};
use mccp::Result;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/hetero.json").into());
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/experiment".into()));
    let cfg = ExperimentConfig::load(&config)?;
    let res = cmd_run(&cfg, &out)?;
    for r in &res.summary {
        println!("{:<9} coverage {:.4}  size {:.3}", r.method.to_string(), r.coverage.mean, r.mean_size.mean);
    }
    println!("wrote {}", out.display());
    Ok(())
}
