use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adaptive::AdaptiveConfig;
use crate::conformal::{ClsMethod, TemperatureMode};
use crate::data::{NoiseProfile, SplitSpec, Task};
use crate::error::{Error, Result};
use crate::metrics::MaeMode;
use crate::nn::{Activation, Loss, MlpSpec, Optimizer, TrainConfig};

/// Where the rows come from. Synthetic sources are regenerated per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Csv {
        path: PathBuf,
        target: String,
    },
    SynthBlobs {
        n: usize,
        classes: usize,
        dim: usize,
        separation: f64,
    },
    SynthHetero {
        n: usize,
        #[serde(default)]
        noise: NoiseProfile,
    },
    /// Recorded MC outputs; only `trace` accepts this source.
    Replay {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "mc")]
    Mc,
    #[serde(rename = "naive")]
    Naive,
    #[serde(rename = "raps")]
    Raps,
    #[serde(rename = "cqr")]
    Cqr,
    #[serde(rename = "mc-cp")]
    McCp,
}

impl Method {
    pub const CLASSIFICATION: [Method; 5] = [Method::Baseline, Method::Mc, Method::Naive, Method::Raps, Method::McCp];
    pub const REGRESSION: [Method; 4] = [Method::Baseline, Method::Mc, Method::Cqr, Method::McCp];

    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Mc => "mc",
            Method::Naive => "naive",
            Method::Raps => "raps",
            Method::Cqr => "cqr",
            Method::McCp => "mc-cp",
        }
    }

    pub fn supports(self, task: Task) -> bool {
        match task {
            Task::Classification => Self::CLASSIFICATION.contains(&self),
            Task::Regression => Self::REGRESSION.contains(&self),
        }
    }

    /// Uses Monte Carlo dropout at prediction time.
    pub fn is_stochastic(self) -> bool {
        matches!(self, Method::Mc | Method::McCp)
    }

    /// Parses a comma-separated list such as `naive,raps,mc-cp`.
    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        s.split(',').map(|m| m.trim().parse()).collect()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Method::Baseline, Method::Mc, Method::Naive, Method::Raps, Method::Cqr, Method::McCp]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config("methods", format!("unknown method `{s}`")))
    }
}

/// Which outputs the MC-CP calibration scores are computed from.
///
/// The task defaults differ. MC-mean class probabilities are flatter than
/// deterministic ones, so a threshold fitted on deterministic scores
/// over-covers badly (≈0.98 at α = 0.1 on blobs); classification therefore
/// calibrates on the MC mean. For regression the deterministic
/// calibration is kept, and the wider MC-mean quantile band then yields the
/// slightly higher coverage of MC-CP over CQR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationSource {
    /// Dropout off; the same scores as the plain conformal method.
    Deterministic,
    /// Adaptive MC mean, the same estimator used at prediction time.
    McMean,
}

impl CalibrationSource {
    pub fn default_for(task: Task) -> Self {
        match task {
            Task::Classification => CalibrationSource::McMean,
            Task::Regression => CalibrationSource::Deterministic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub dropout_rate: f64,
    #[serde(default)]
    pub activation: Activation,
}

impl ModelConfig {
    pub fn default_for(task: Task) -> Self {
        let (hidden, dropout_rate) = match task {
            Task::Classification => (vec![128, 64], 0.5),
            Task::Regression => (vec![64, 64], 0.25),
        };
        Self {
            hidden,
            dropout_rate,
            activation: Activation::Relu,
        }
    }

    pub fn spec(&self, task: Task, input_dim: usize, num_classes: usize) -> MlpSpec {
        let base = match task {
            Task::Classification => MlpSpec::classifier(input_dim, num_classes),
            Task::Regression => MlpSpec::regressor(input_dim),
        };
        let mut spec = base.with_hidden(&self.hidden).with_dropout(self.dropout_rate);
        spec.activation = self.activation;
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub optimizer: Optimizer,
    pub batch_size: usize,
    pub epochs: usize,
}

impl TrainSettings {
    pub fn default_for(task: Task) -> Self {
        let t = match task {
            Task::Classification => TrainConfig::classification(0),
            Task::Regression => TrainConfig::regression(0),
        };
        Self {
            optimizer: t.optimizer,
            batch_size: t.batch_size,
            epochs: t.epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConformalConfig {
    pub alpha: f64,
    pub lambda: f64,
    pub k_reg: usize,
    pub include_crossing: bool,
    pub temperature_mode: TemperatureMode,
    /// `None` picks [`CalibrationSource::default_for`] the task.
    pub calibration_source: Option<CalibrationSource>,
    pub mae_mode: MaeMode,
    pub quantile_levels: (f64, f64),
}

impl Default for ConformalConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            lambda: 0.1,
            k_reg: 5,
            include_crossing: false,
            temperature_mode: TemperatureMode::PerPass,
            calibration_source: None,
            mae_mode: MaeMode::Midpoint,
            quantile_levels: crate::types::DEFAULT_QUANTILE_LEVELS,
        }
    }
}

impl ConformalConfig {
    pub fn raps(&self) -> ClsMethod {
        ClsMethod::Raps {
            lambda: self.lambda,
            k_reg: self.k_reg,
            include_crossing: self.include_crossing,
        }
    }
}

/// A complete, file-backed experiment description. Every random draw of a
/// run is a function of this value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: Task,
    pub dataset: DatasetSource,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub train: Option<TrainSettings>,
    #[serde(default)]
    pub adaptive: AdaptiveConfig,
    #[serde(default)]
    pub conformal: ConformalConfig,
    #[serde(default)]
    pub split: Option<SplitSpec>,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Defaults to every method of the task.
    #[serde(default)]
    pub methods: Option<Vec<Method>>,
    /// Evaluate only the first `n` validation rows.
    #[serde(default)]
    pub eval_limit: Option<usize>,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(task: Task, dataset: DatasetSource) -> Self {
        Self {
            task,
            dataset,
            model: None,
            train: None,
            adaptive: AdaptiveConfig::default(),
            conformal: ConformalConfig::default(),
            split: None,
            trials: 1,
            master_seed: 0,
            methods: None,
            eval_limit: None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        let mut cfg = Self::from_json(&text)?;
        // Relative dataset paths are relative to the config file.
        if let Some(dir) = path.parent() {
            if let DatasetSource::Csv { path: p, .. } | DatasetSource::Replay { path: p } = &mut cfg.dataset {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::config("<root>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn model(&self) -> ModelConfig {
        self.model.clone().unwrap_or_else(|| ModelConfig::default_for(self.task))
    }

    pub fn train_settings(&self) -> TrainSettings {
        self.train.clone().unwrap_or_else(|| TrainSettings::default_for(self.task))
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = self.train_settings();
        let loss = match self.task {
            Task::Classification => Loss::CrossEntropy,
            Task::Regression => {
                let (lo, hi) = self.conformal.quantile_levels;
                Loss::MultiQuantile { levels: vec![lo, hi] }
            }
        };
        TrainConfig {
            optimizer: t.optimizer,
            batch_size: t.batch_size,
            epochs: t.epochs,
            loss,
            seed,
        }
    }

    pub fn calibration_source(&self) -> CalibrationSource {
        self.conformal
            .calibration_source
            .unwrap_or_else(|| CalibrationSource::default_for(self.task))
    }

    pub fn split_spec(&self, seed: u64) -> SplitSpec {
        let mut s = self.split.unwrap_or_else(|| match self.task {
            Task::Classification => SplitSpec::classification(0),
            Task::Regression => SplitSpec::regression(0),
        });
        s.seed = seed;
        s
    }

    pub fn methods(&self) -> Vec<Method> {
        match &self.methods {
            Some(m) => m.clone(),
            None => match self.task {
                Task::Classification => Method::CLASSIFICATION.to_vec(),
                Task::Regression => Method::REGRESSION.to_vec(),
            },
        }
    }

    /// Checks every field, reporting the dotted path of the first bad one.
    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, msg: String| Err(Error::config(path, msg));
        match &self.dataset {
            DatasetSource::SynthBlobs { n, classes, dim, separation } => {
                if self.task != Task::Classification {
                    return bad("dataset.kind", "synth_blobs is a classification source".into());
                }
                if *classes < 2 || *dim == 0 || *n < classes * 10 {
                    return bad("dataset.n", format!("need classes >= 2, dim >= 1, n >= 10·classes (n = {n})"));
                }
                if !(separation.is_finite() && *separation >= 0.0) {
                    return bad("dataset.separation", format!("{separation}"));
                }
            }
            DatasetSource::SynthHetero { n, noise } => {
                if self.task != Task::Regression {
                    return bad("dataset.kind", "synth_hetero is a regression source".into());
                }
                if *n == 0 {
                    return bad("dataset.n", "must be positive".into());
                }
                if !(noise.base >= 0.0 && noise.slope >= 0.0) {
                    return bad("dataset.noise", "scales must be non-negative".into());
                }
            }
            DatasetSource::Csv { target, .. } if target.is_empty() => {
                return bad("dataset.target", "empty column name".into());
            }
            _ => {}
        }
        let m = self.model();
        if m.hidden.is_empty() || m.hidden.contains(&0) {
            return bad("model.hidden", format!("{:?}", m.hidden));
        }
        if !(0.0..1.0).contains(&m.dropout_rate) {
            return bad("model.dropout_rate", format!("{} not in [0, 1)", m.dropout_rate));
        }
        let t = self.train_settings();
        if t.batch_size == 0 {
            return bad("train.batch_size", "must be positive".into());
        }
        if t.epochs == 0 {
            return bad("train.epochs", "must be positive".into());
        }
        let lr = match t.optimizer {
            Optimizer::SgdMomentum { lr, momentum } => {
                if !(0.0..1.0).contains(&momentum) {
                    return bad("train.optimizer.momentum", format!("{momentum}"));
                }
                lr
            }
            Optimizer::Adam { lr, .. } => lr,
        };
        if !(lr > 0.0 && lr.is_finite()) {
            return bad("train.optimizer.lr", format!("{lr}"));
        }
        if let Err(e) = self.adaptive.validate() {
            return bad("adaptive", e.to_string());
        }
        let c = &self.conformal;
        if !(c.alpha > 0.0 && c.alpha < 1.0) {
            return bad("conformal.alpha", format!("{} not in (0, 1)", c.alpha));
        }
        if !(c.lambda >= 0.0 && c.lambda.is_finite()) {
            return bad("conformal.lambda", format!("{}", c.lambda));
        }
        let (lo, hi) = c.quantile_levels;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return bad("conformal.quantile_levels", format!("({lo}, {hi})"));
        }
        if let Err(Error::Config { path, message }) = self.split_spec(0).validate() {
            return bad(&format!("split.{path}"), message);
        }
        if self.trials == 0 {
            return bad("trials", "must be positive".into());
        }
        if self.eval_limit == Some(0) {
            return bad("eval_limit", "must be positive".into());
        }
        let methods = self.methods();
        if methods.is_empty() {
            return bad("methods", "empty list".into());
        }
        for (i, m) in methods.iter().enumerate() {
            if !m.supports(self.task) {
                return bad(&format!("methods[{i}]"), format!("`{m}` does not apply to {:?}", self.task));
            }
            if methods[..i].contains(m) {
                return bad(&format!("methods[{i}]"), format!("duplicate `{m}`"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> ExperimentConfig {
        ExperimentConfig::new(
            Task::Classification,
            DatasetSource::SynthBlobs {
                n: 300,
                classes: 3,
                dim: 2,
                separation: 2.0,
            },
        )
    }

    fn path_of(cfg: &ExperimentConfig) -> String {
        match cfg.validate() {
            Err(Error::Config { path, .. }) => path,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn minimal_json_gets_task_defaults() {
        let cfg = ExperimentConfig::from_json(
            r#"{"task": "regression", "dataset": {"kind": "synth_hetero", "n": 500}}"#,
        )
        .unwrap();
        assert_eq!(cfg.methods(), Method::REGRESSION.to_vec());
        assert_eq!(cfg.model().hidden, vec![64, 64]);
        assert_eq!(cfg.train_settings().epochs, 100);
        assert_eq!(cfg.split_spec(3).calibration_fraction_of_test, 0.02);
        assert_eq!(cfg.adaptive, AdaptiveConfig::default());
        let again = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn errors_carry_field_paths() {
        let mut c = blobs();
        c.conformal.alpha = 1.5;
        assert_eq!(path_of(&c), "conformal.alpha");

        let mut c = blobs();
        c.methods = Some(vec![Method::Naive, Method::Cqr]);
        assert_eq!(path_of(&c), "methods[1]");

        let mut c = blobs();
        c.split = Some(SplitSpec {
            train_fraction: 0.9,
            test_fraction: 0.5,
            calibration_fraction_of_test: 0.2,
            seed: 0,
        });
        assert_eq!(path_of(&c), "split.train_fraction");

        let mut c = blobs();
        c.task = Task::Regression;
        assert_eq!(path_of(&c), "dataset.kind");

        let err = ExperimentConfig::from_json(r#"{"task": "classification"}"#).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn method_names_roundtrip() {
        let all = Method::parse_list("baseline, mc,naive,raps,cqr,mc-cp").unwrap();
        assert_eq!(all.len(), 6);
        for m in all {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
        assert!(Method::parse_list("naive,aps").is_err());
    }
}
