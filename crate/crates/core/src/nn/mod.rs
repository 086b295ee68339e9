//! A small dense network with inverted dropout.
//!
//! Parameters live in one flat vector, layer by layer: the `(out, in)`
//! row-major weight matrix followed by the bias. Optimizers and gradient
//! checking operate on that flat view; serialization goes through
//! [`WeightsRecord`], which spells out each layer's shape.

mod gradcheck;
mod loss;
mod optim;
mod train;

pub use gradcheck::{grad_check, loss_gradient};
pub use loss::{cross_entropy, pinball, pinball_loss, Loss};
pub use optim::{Optimizer, OptimizerState};
pub use train::{train, TrainConfig, TrainReport};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - z.tanh().powi(2),
        }
    }
}

/// What the output layer represents. The network itself always emits raw
/// (pre-softmax) values; the head decides how callers interpret them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Logits over classes.
    Softmax,
    /// One real output per quantile level.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input, hidden..., output.
    pub layer_widths: Vec<usize>,
    /// Dropout probability after each hidden layer, in `[0, 1)`.
    pub dropout_rate: f64,
    #[serde(default)]
    pub activation: Activation,
    pub head: Head,
}

impl MlpSpec {
    /// 128-64 hidden units, 50% dropout.
    pub fn classifier(input_dim: usize, num_classes: usize) -> Self {
        Self {
            layer_widths: vec![input_dim, 128, 64, num_classes],
            dropout_rate: 0.5,
            activation: Activation::Relu,
            head: Head::Softmax,
        }
    }

    /// 64-64 hidden units, 25% dropout, two quantile outputs.
    pub fn regressor(input_dim: usize) -> Self {
        Self {
            layer_widths: vec![input_dim, 64, 64, 2],
            dropout_rate: 0.25,
            activation: Activation::Relu,
            head: Head::Identity,
        }
    }

    pub fn with_hidden(mut self, hidden: &[usize]) -> Self {
        let input = self.input_dim();
        let output = self.output_dim();
        self.layer_widths = std::iter::once(input)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(output))
            .collect();
        self
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths.first().copied().unwrap_or(0)
    }

    pub fn output_dim(&self) -> usize {
        self.layer_widths.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::invalid("an MLP needs at least input and output widths"));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if self.head == Head::Softmax && self.output_dim() < 2 {
            return Err(Error::invalid("softmax head needs at least 2 classes"));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.layer_widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LayerLayout {
    rows: usize,
    cols: usize,
    w: usize,
    b: usize,
}

fn layout(spec: &MlpSpec) -> Vec<LayerLayout> {
    let mut off = 0;
    spec.layer_widths
        .windows(2)
        .map(|w| {
            let l = LayerLayout {
                rows: w[1],
                cols: w[0],
                w: off,
                b: off + w[0] * w[1],
            };
            off = l.b + l.rows;
            l
        })
        .collect()
}

/// Activations recorded by a forward pass, consumed by backprop.
#[derive(Debug, Default, Clone)]
pub struct ForwardCache {
    /// Input to each layer (post-activation, post-dropout of the previous one).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer; the last entry is the network output.
    pre: Vec<Vec<f64>>,
    /// Per hidden layer: dropout scale per unit (0 or `1/(1-p)`), empty when
    /// dropout was off.
    masks: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.pre.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Trained (or freshly initialized) network weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "WeightsRecord", try_from = "WeightsRecord")]
pub struct Mlp {
    spec: MlpSpec,
    params: Vec<f64>,
    layout: Vec<LayerLayout>,
}

impl Mlp {
    /// Fan-in scaled uniform initialization, biases zero.
    pub fn init(spec: &MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let layout = layout(spec);
        let mut params = vec![0.0; spec.num_params()];
        let mut rng = rng::stream(seed, &[rng::purpose::INIT]);
        let gain = match spec.activation {
            Activation::Relu => 6.0,
            Activation::Tanh => 3.0,
        };
        for l in &layout {
            let limit = (gain / l.cols as f64).sqrt();
            for p in &mut params[l.w..l.b] {
                *p = rng.random_range(-limit..limit);
            }
        }
        Ok(Self {
            spec: spec.clone(),
            params,
            layout,
        })
    }

    pub fn from_params(spec: &MlpSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.num_params() {
            return Err(Error::DimensionMismatch {
                expected: spec.num_params(),
                got: params.len(),
            });
        }
        Ok(Self {
            spec: spec.clone(),
            layout: layout(spec),
            params,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.spec.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Raw network output. `Some(rng)` turns dropout on and draws a fresh
    /// mask from `rng`; `None` is the deterministic pass.
    pub fn forward(&self, x: &[f64], rng: Option<&mut Rng>) -> Result<Vec<f64>> {
        let mut cache = ForwardCache::default();
        self.forward_cached(x, rng, &mut cache)?;
        Ok(cache.pre.pop().unwrap_or_default())
    }

    pub fn forward_cached(
        &self,
        x: &[f64],
        mut rng: Option<&mut Rng>,
        cache: &mut ForwardCache,
    ) -> Result<()> {
        self.check_input(x)?;
        let n_layers = self.layout.len();
        cache.inputs.clear();
        cache.pre.clear();
        cache.masks.clear();
        cache.inputs.push(x.to_vec());
        let p = self.spec.dropout_rate;
        let keep_scale = 1.0 / (1.0 - p);
        for (li, l) in self.layout.iter().enumerate() {
            let a = &cache.inputs[li];
            let w = &self.params[l.w..l.b];
            let b = &self.params[l.b..l.b + l.rows];
            let z: Vec<f64> = w
                .chunks_exact(l.cols)
                .zip(b)
                .map(|(row, bias)| row.iter().zip(a).map(|(w, a)| w * a).sum::<f64>() + bias)
                .collect();
            if li + 1 < n_layers {
                let mut h: Vec<f64> = z.iter().map(|&v| self.spec.activation.apply(v)).collect();
                let mask = match rng.as_deref_mut() {
                    Some(r) if p > 0.0 => {
                        let m: Vec<f64> = (0..h.len())
                            .map(|_| if r.random::<f64>() < p { 0.0 } else { keep_scale })
                            .collect();
                        h.iter_mut().zip(&m).for_each(|(h, m)| *h *= m);
                        m
                    }
                    _ => Vec::new(),
                };
                cache.masks.push(mask);
                cache.inputs.push(h);
            }
            cache.pre.push(z);
        }
        Ok(())
    }

    /// Accumulates `d(loss)/d(params)` into `grad`, given `d(loss)/d(output)`.
    pub fn backward(&self, cache: &ForwardCache, d_out: &[f64], grad: &mut [f64]) {
        let mut delta = d_out.to_vec();
        for (li, l) in self.layout.iter().enumerate().rev() {
            let a = &cache.inputs[li];
            {
                let (gw, gb) = grad[l.w..l.b + l.rows].split_at_mut(l.b - l.w);
                for ((g_row, gb), d) in gw.chunks_exact_mut(l.cols).zip(gb).zip(&delta) {
                    *gb += d;
                    if *d != 0.0 {
                        g_row.iter_mut().zip(a).for_each(|(g, a)| *g += d * a);
                    }
                }
            }
            if li == 0 {
                break;
            }
            let w = &self.params[l.w..l.b];
            let mut da = vec![0.0; l.cols];
            for (row, d) in w.chunks_exact(l.cols).zip(&delta) {
                if *d != 0.0 {
                    da.iter_mut().zip(row).for_each(|(da, w)| *da += d * w);
                }
            }
            let mask = &cache.masks[li - 1];
            let pre = &cache.pre[li - 1];
            for (j, da) in da.iter_mut().enumerate() {
                let m = if mask.is_empty() { 1.0 } else { mask[j] };
                *da *= m * self.spec.activation.derivative(pre[j]);
            }
            delta = da;
        }
    }
}

/// Serialized form of [`Mlp`]: the [`MlpSpec`] plus each layer's shape and
/// row-major values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightsRecord {
    pub spec: MlpSpec,
    pub layers: Vec<LayerRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerRecord {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl From<Mlp> for WeightsRecord {
    fn from(m: Mlp) -> Self {
        let layers = m
            .layout
            .iter()
            .map(|l| LayerRecord {
                rows: l.rows,
                cols: l.cols,
                weights: m.params[l.w..l.b].to_vec(),
                bias: m.params[l.b..l.b + l.rows].to_vec(),
            })
            .collect();
        WeightsRecord {
            spec: m.spec,
            layers,
        }
    }
}

impl TryFrom<WeightsRecord> for Mlp {
    type Error = Error;

    fn try_from(r: WeightsRecord) -> Result<Self> {
        r.spec.validate()?;
        let expected = layout(&r.spec);
        if expected.len() != r.layers.len() {
            return Err(Error::invalid("layer count does not match spec"));
        }
        let mut params = Vec::with_capacity(r.spec.num_params());
        for (l, rec) in expected.iter().zip(r.layers) {
            if rec.rows != l.rows
                || rec.cols != l.cols
                || rec.weights.len() != l.rows * l.cols
                || rec.bias.len() != l.rows
            {
                return Err(Error::invalid(format!(
                    "layer shape {}x{} does not match spec {}x{}",
                    rec.rows, rec.cols, l.rows, l.cols
                )));
            }
            params.extend(rec.weights);
            params.extend(rec.bias);
        }
        Mlp::from_params(&r.spec, params)
    }
}
