//! Per-pass variance, variance change and patience counter of the adaptive
//! loop for two validation inputs, as CSV on stdout.
//!
//!     cargo run --release --example variance_trace > trace.csv

use mccp::harness::{trace, ExperimentConfig};
use mccp::Result;

fn main() -> Result<()> {
    let mut cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/hetero.json"))?;
    cfg.trials = 1;
    trace(&cfg, &[0, 1], std::io::stdout().lock())
}
