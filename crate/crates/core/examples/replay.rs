//! Records MC dropout draws to CSV, then reruns the adaptive loop on the
//! recording. The replayed result matches the live one exactly, which makes
//! externally produced network outputs usable with the same code.
//!
//!     cargo run --release --example replay

use mccp::adaptive::{adaptive_mc_dropout, AdaptiveConfig};
use mccp::data::{record, ReplayFile};
use mccp::nn::{Mlp, MlpSpec};
use mccp::rng::stream;
use mccp::Result;

fn main() -> Result<()> {
    let spec = MlpSpec::regressor(3).with_hidden(&[16]).with_dropout(0.3);
    let model = Mlp::init(&spec, 5)?;
    let inputs = [vec![0.1, -0.4, 1.2], vec![-1.0, 0.3, 0.0]];
    let cfg = AdaptiveConfig::default();

    let mut buf = Vec::new();
    for (id, x) in inputs.iter().enumerate() {
        // Record exactly the draws the live run consumes.
        let live = adaptive_mc_dropout(&model, x, &cfg, &mut stream(9, &[id as u64]))?;
        let rec = record(&model, &[(id, x.as_slice())], live.passes, &mut stream(9, &[id as u64]))?;
        buf.push((live, rec));
    }
    let mut file = ReplayFile::new(model.spec().output_dim());
    for (id, (_, rec)) in buf.iter().enumerate() {
        file.insert(id, rec.outputs(id)?.to_vec())?;
    }
    let path = std::env::temp_dir().join("mccp_replay_example.csv");
    file.save(&path)?;

    let loaded = ReplayFile::load(&path)?;
    for (id, (live, _)) in buf.iter().enumerate() {
        let s = loaded.stream(id)?;
        let replayed = adaptive_mc_dropout(&s, &[], &cfg, &mut stream(0, &[]))?;
        println!(
            "sample {id}: live {} passes, replay {} passes, identical: {}",
            live.passes,
            replayed.passes,
            replayed == *live
        );
    }
    println!("recording at {}", path.display());
    Ok(())
}
