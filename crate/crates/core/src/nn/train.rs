use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ForwardCache, Head, Loss, Mlp, MlpSpec, Optimizer, OptimizerState};
use crate::error::{Error, Result};
use crate::rng::{self, purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: Loss,
    pub seed: u64,
}

impl TrainConfig {
    /// SGD (lr 0.1, momentum 0.9), batch 128, 10 epochs, cross-entropy.
    pub fn classification(seed: u64) -> Self {
        Self {
            optimizer: Optimizer::sgd_momentum(0.1, 0.9),
            batch_size: 128,
            epochs: 10,
            loss: Loss::CrossEntropy,
            seed,
        }
    }

    /// Adam (lr 0.001), batch 32, 100 epochs, pinball loss at 0.05/0.95.
    pub fn regression(seed: u64) -> Self {
        Self {
            optimizer: Optimizer::adam(0.001),
            batch_size: 32,
            epochs: 100,
            loss: Loss::MultiQuantile {
                levels: vec![0.05, 0.95],
            },
            seed,
        }
    }

    fn validate(&self, spec: &MlpSpec) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        self.loss.validate()?;
        match (&self.loss, spec.head) {
            (Loss::CrossEntropy, Head::Softmax) => Ok(()),
            (Loss::MultiQuantile { levels }, Head::Identity) if levels.len() == spec.output_dim() => {
                Ok(())
            }
            (loss, head) => Err(Error::invalid(format!(
                "loss {loss:?} does not fit a {head:?} head of width {}",
                spec.output_dim()
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss (dropout on) per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch training. Initialization, shuffling and dropout masks are all
/// drawn from `cfg.seed`, so equal inputs give bit-identical weights.
pub fn train(
    spec: &MlpSpec,
    features: &[Vec<f64>],
    targets: &[f64],
    cfg: &TrainConfig,
) -> Result<(Mlp, TrainReport)> {
    cfg.validate(spec)?;
    if features.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if features.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            got: targets.len(),
        });
    }
    if cfg.loss == Loss::CrossEntropy {
        if let Some(t) = targets
            .iter()
            .find(|t| t.fract() != 0.0 || **t < 0.0 || **t as usize >= spec.output_dim())
        {
            return Err(Error::invalid(format!("class label {t} out of range")));
        }
    }

    let mut mlp = Mlp::init(spec, cfg.seed)?;
    let mut opt = OptimizerState::new(cfg.optimizer, spec.num_params());
    let mut shuffle_rng = rng::stream(cfg.seed, &[purpose::SHUFFLE]);
    let mut dropout_rng = rng::stream(cfg.seed, &[purpose::DROPOUT]);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut grad = vec![0.0; spec.num_params()];
    let mut d_out = vec![0.0; spec.output_dim()];
    let mut cache = ForwardCache::default();
    let mut report = TrainReport::default();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            for &i in batch {
                mlp.forward_cached(&features[i], Some(&mut dropout_rng), &mut cache)?;
                batch_loss += cfg.loss.value_and_grad(cache.output(), targets[i], &mut d_out);
                mlp.backward(&cache, &d_out, &mut grad);
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            opt.step(mlp.params_mut(), &grad);
            epoch_loss += batch_loss;
        }
        let mean = epoch_loss / features.len() as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        report.epoch_losses.push(mean);
    }
    Ok((mlp, report))
}
