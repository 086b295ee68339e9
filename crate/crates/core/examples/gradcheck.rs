//! Finite-difference check of the backward pass for both heads and losses.
//!
//!     cargo run --release --example gradcheck

use mccp::nn::{grad_check, Loss, Mlp, MlpSpec};
use mccp::Result;

fn main() -> Result<()> {
    let xs = vec![vec![0.3, -1.1, 0.7], vec![-0.2, 0.4, 1.5], vec![1.0, 0.0, -0.6]];

    let cls = Mlp::init(&MlpSpec::classifier(3, 4).with_hidden(&[8, 6]), 1)?;
    let err = grad_check(&cls, &xs, &[0.0, 3.0, 1.0], &Loss::CrossEntropy)?;
    println!("cross-entropy  max relative error {err:.2e}");

    let reg = Mlp::init(&MlpSpec::regressor(3).with_hidden(&[8, 6]), 2)?;
    let pinball = Loss::MultiQuantile { levels: vec![0.05, 0.95] };
    // Targets far from the outputs keep every row off the pinball kink.
    let err = grad_check(&reg, &xs, &[5.0, -4.0, 6.5], &pinball)?;
    println!("pinball        max relative error {err:.2e}");
    Ok(())
}
