use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mccp::harness::{self, ExperimentConfig, Method, DEFAULT_DELTAS, DEFAULT_PATIENCES};
use mccp::Error;

#[derive(Parser)]
#[command(name = "mccp", version, about = "Adaptive MC dropout + conformal prediction experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides `trials`.
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated, e.g. `naive,raps,mc-cp`.
    #[arg(long)]
    methods: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train, calibrate and evaluate every trial.
    Run(Common),
    /// MC-CP over a delta × patience grid.
    Sensitivity {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        deltas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        patiences: Option<Vec<usize>>,
    },
    /// Per-pass variance trace of the adaptive loop.
    Trace {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        samples: Vec<usize>,
    },
    /// Raw and conformalized quantile bands (regression).
    Plotdata(Common),
    /// Write the synthetic dataset of trial 0.
    Synth(Common),
    /// Finite-difference gradient check of the configured network.
    Gradcheck(Common),
}

impl Common {
    fn load(&self) -> mccp::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(m) = &self.methods {
            cfg.methods = Some(Method::parse_list(m)?);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn dispatch(cmd: Cmd) -> mccp::Result<bool> {
    match cmd {
        Cmd::Run(c) => {
            let res = harness::cmd_run(&c.load()?, &c.out)?;
            for r in &res.summary {
                println!(
                    "{:<9} coverage {:.4} ± {:.4}  size {:.3}  passes {:.1}",
                    r.method.to_string(),
                    r.coverage.mean,
                    r.coverage.std,
                    r.mean_size.mean,
                    r.mean_passes.mean
                );
            }
        }
        Cmd::Sensitivity {
            common,
            deltas,
            patiences,
        } => {
            let deltas = deltas.unwrap_or_else(|| DEFAULT_DELTAS.to_vec());
            let patiences = patiences.unwrap_or_else(|| DEFAULT_PATIENCES.to_vec());
            harness::cmd_sensitivity(&common.load()?, &deltas, &patiences, &common.out)?;
        }
        Cmd::Trace { common, samples } => harness::cmd_trace(&common.load()?, &samples, &common.out)?,
        Cmd::Plotdata(c) => harness::cmd_quantile_plotdata(&c.load()?, &c.out)?,
        Cmd::Synth(c) => harness::cmd_synth(&c.load()?, &c.out)?,
        Cmd::Gradcheck(c) => {
            let r = harness::cmd_gradcheck(&c.load()?, &c.out)?;
            println!("max relative error {:.3e} ({})", r.max_relative_error, if r.passed { "ok" } else { "FAILED" });
            return Ok(r.passed);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Config { .. }) { 2 } else { 3 })
        }
    }
}
