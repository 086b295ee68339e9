//! The stochastic-predictor contract wrapped by Monte Carlo dropout.

use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::rng::Rng;
use crate::types::softmax;

/// A model that can be sampled with dropout active or evaluated
/// deterministically.
///
/// Implementations must be pure given `(x, rng state)`: calls with
/// independent generators yield i.i.d. draws conditional on `x`.
pub trait StochasticPredictor {
    fn output_dim(&self) -> usize;

    /// One stochastic draw (dropout on).
    fn predict_once(&self, x: &[f64], rng: &mut Rng) -> Result<Vec<f64>>;

    /// Dropout off; never touches a generator.
    fn predict_deterministic(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl StochasticPredictor for Mlp {
    fn output_dim(&self) -> usize {
        self.spec().output_dim()
    }

    fn predict_once(&self, x: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        self.forward(x, Some(rng))
    }

    fn predict_deterministic(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x, None)
    }
}

impl<P: StochasticPredictor + ?Sized> StochasticPredictor for &P {
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }

    fn predict_once(&self, x: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        (**self).predict_once(x, rng)
    }

    fn predict_deterministic(&self, x: &[f64]) -> Result<Vec<f64>> {
        (**self).predict_deterministic(x)
    }
}

/// Always returns the same vector, whatever the input.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantPredictor(pub Vec<f64>);

impl StochasticPredictor for ConstantPredictor {
    fn output_dim(&self) -> usize {
        self.0.len()
    }

    fn predict_once(&self, _x: &[f64], _rng: &mut Rng) -> Result<Vec<f64>> {
        Ok(self.0.clone())
    }

    fn predict_deterministic(&self, _x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.0.clone())
    }
}

/// Turns a logit predictor into a probability predictor:
/// `softmax(logits / T)` on every draw.
#[derive(Debug, Clone)]
pub struct TemperatureScaled<P> {
    inner: P,
    temperature: f64,
}

impl<P: StochasticPredictor> TemperatureScaled<P> {
    pub fn new(inner: P, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature {temperature}")));
        }
        Ok(Self { inner, temperature })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }
}

impl<P: StochasticPredictor> StochasticPredictor for TemperatureScaled<P> {
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn predict_once(&self, x: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        Ok(softmax(&self.inner.predict_once(x, rng)?, self.temperature))
    }

    fn predict_deterministic(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.inner.predict_deterministic(x)?, self.temperature))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn temperature_scaled_outputs_probabilities() {
        let p = TemperatureScaled::new(ConstantPredictor(vec![2.0, 0.0, -1.0]), 2.0).unwrap();
        let out = p.predict_once(&[], &mut stream(0, &[])).unwrap();
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(out, p.predict_deterministic(&[]).unwrap());
        assert!(TemperatureScaled::new(ConstantPredictor(vec![0.0]), 0.0).is_err());
    }
}
