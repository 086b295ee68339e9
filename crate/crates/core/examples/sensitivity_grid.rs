//! Forward passes, coverage and MAE of MC-CP across a delta × patience
//! grid. Smaller delta and larger patience both buy more passes.
//!
//!     cargo run --release --example sensitivity_grid

use mccp::harness::{sensitivity, ExperimentConfig, DEFAULT_DELTAS, DEFAULT_PATIENCES};
use mccp::Result;

fn main() -> Result<()> {
    let mut cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/hetero.json"))?;
    cfg.trials = 1;
    cfg.eval_limit = Some(200);
    let res = sensitivity(&cfg, &DEFAULT_DELTAS, &DEFAULT_PATIENCES)?;
    print!("{:>8}", "delta");
    for p in DEFAULT_PATIENCES {
        print!("{:>16}", format!("P={p}"));
    }
    println!();
    for row in res.cells.chunks(DEFAULT_PATIENCES.len()) {
        print!("{:>8.0e}", row[0].delta);
        for c in row {
            print!("{:>9.1} ({:.2})", c.passes.mean, c.coverage.mean);
        }
        println!();
    }
    println!("cells: mean passes (coverage)");
    Ok(())
}
