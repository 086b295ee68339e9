use super::{ForwardCache, Loss, Mlp};
use crate::error::{Error, Result};

const STEP: f64 = 1e-5;
/// Denominator floor, so parameters with vanishing gradient are compared
/// absolutely rather than relatively.
const FLOOR: f64 = 1e-6;

fn check_batch(mlp: &Mlp, xs: &[Vec<f64>], ys: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::Empty("batch"));
    }
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    xs.iter().try_for_each(|x| mlp.check_input(x))
}

fn batch_loss(mlp: &Mlp, xs: &[Vec<f64>], ys: &[f64], loss: &Loss) -> Result<f64> {
    let mut total = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        total += loss.value(&mlp.forward(x, None)?, *y);
    }
    Ok(total / xs.len() as f64)
}

/// Analytic gradient of the mean batch loss (dropout off).
pub fn loss_gradient(mlp: &Mlp, xs: &[Vec<f64>], ys: &[f64], loss: &Loss) -> Result<Vec<f64>> {
    check_batch(mlp, xs, ys)?;
    let mut grad = vec![0.0; mlp.params().len()];
    let mut d_out = vec![0.0; mlp.spec().output_dim()];
    let mut cache = ForwardCache::default();
    for (x, y) in xs.iter().zip(ys) {
        mlp.forward_cached(x, None, &mut cache)?;
        loss.value_and_grad(cache.output(), *y, &mut d_out);
        mlp.backward(&cache, &d_out, &mut grad);
    }
    let scale = 1.0 / xs.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok(grad)
}

/// Largest relative discrepancy between the backprop gradient and central
/// finite differences over every parameter.
///
/// For the pinball loss the batch must stay away from the kinks
/// (`|y - ŷ_τ|` well above the step).
pub fn grad_check(mlp: &Mlp, xs: &[Vec<f64>], ys: &[f64], loss: &Loss) -> Result<f64> {
    let analytic = loss_gradient(mlp, xs, ys, loss)?;
    let mut probe = mlp.clone();
    let mut worst: f64 = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let orig = probe.params[i];
        probe.params[i] = orig + STEP;
        let plus = batch_loss(&probe, xs, ys, loss)?;
        probe.params[i] = orig - STEP;
        let minus = batch_loss(&probe, xs, ys, loss)?;
        probe.params[i] = orig;
        let numeric = (plus - minus) / (2.0 * STEP);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Head, MlpSpec};
    use crate::rng::stream;
    use rand::Rng as _;

    fn batch(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut r = stream(seed, &[]);
        (0..n)
            .map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn cross_entropy_gradients() {
        let spec = MlpSpec::classifier(4, 3).with_hidden(&[6, 5]);
        let mlp = Mlp::init(&spec, 2).unwrap();
        let xs = batch(8, 4, 1);
        let ys: Vec<f64> = (0..8).map(|i| (i % 3) as f64).collect();
        let err = grad_check(&mlp, &xs, &ys, &Loss::CrossEntropy).unwrap();
        assert!(err <= 1e-4, "max rel error {err}");
    }

    #[test]
    fn tanh_network_gradients() {
        let mut spec = MlpSpec::classifier(3, 4).with_hidden(&[5]);
        spec.activation = Activation::Tanh;
        let mlp = Mlp::init(&spec, 8).unwrap();
        let xs = batch(5, 3, 4);
        let ys = [0.0, 1.0, 2.0, 3.0, 1.0];
        assert!(grad_check(&mlp, &xs, &ys, &Loss::CrossEntropy).unwrap() <= 1e-4);
    }

    #[test]
    fn pinball_gradients_away_from_kinks() {
        let spec = MlpSpec::regressor(3).with_hidden(&[7, 5]);
        let mlp = Mlp::init(&spec, 3).unwrap();
        let xs = batch(10, 3, 5);
        // Targets far from either quantile output.
        let ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let o = mlp.forward(x, None).unwrap();
                if i % 2 == 0 {
                    o[0].max(o[1]) + 1.0
                } else {
                    o[0].min(o[1]) - 1.0
                }
            })
            .collect();
        let loss = Loss::MultiQuantile {
            levels: vec![0.05, 0.95],
        };
        let err = grad_check(&mlp, &xs, &ys, &loss).unwrap();
        assert!(err <= 1e-4, "max rel error {err}");
    }

    #[test]
    fn zero_weights_give_zero_hidden_gradient() {
        let spec = MlpSpec {
            layer_widths: vec![2, 3, 2],
            dropout_rate: 0.0,
            activation: Activation::Relu,
            head: Head::Softmax,
        };
        let mlp = Mlp::from_params(&spec, vec![0.0; spec.num_params()]).unwrap();
        let xs = vec![vec![1.0, -1.0], vec![-1.0, 1.0]];
        let ys = [0.0, 1.0];
        let g = loss_gradient(&mlp, &xs, &ys, &Loss::CrossEntropy).unwrap();
        // first layer: weights and biases
        assert!(g[..9].iter().all(|v| *v == 0.0), "{g:?}");
        // symmetric labels cancel in the output bias
        assert!(g[15..].iter().all(|v| v.abs() < 1e-15));
    }
}
