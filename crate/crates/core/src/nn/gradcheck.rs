//! Central finite-difference check of model parameter gradients.

use rand::Rng;

use super::{layers, loss, Model, NnError, Tensor};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    /// Name index and entry of the worst parameter.
    pub worst: (usize, usize),
    pub checked: usize,
}

/// Floor for the relative-error denominator so that round-off on
/// near-zero gradients is not reported as a failure.
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compare backward-pass gradients of the training-mode loss
/// `Σ cᵢ·outputᵢ` (random fixed `c`) with central differences on
/// `per_tensor` randomly chosen entries of every parameter tensor.
pub fn check_model(
    model: &Model<f64>,
    images: &[f64],
    per_tensor: usize,
    eps: f64,
    seed_value: u64,
) -> Result<GradCheck, NnError> {
    let x = model.input_tensor(images)?;
    let (out, cache) = model.forward_train(&x)?;
    let mut rng = seed::rng(seed_value, 0);
    let creg: Vec<f64> = out.regression.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
    let clog: Vec<f64> = out.logits.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
    let grads = model.backward(&cache, &creg, &clog)?;
    let loss = |m: &Model<f64>| -> Result<f64, NnError> {
        let (o, _) = m.forward_train(&x)?;
        let a: f64 = o.regression.iter().zip(&creg).map(|(y, c)| y * c).sum();
        let b: f64 = o.logits.iter().zip(&clog).map(|(y, c)| y * c).sum();
        Ok(a + b)
    };

    let mut probe = model.clone();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    for (ti, g) in grads.iter().enumerate() {
        let len = g.len();
        let picks: Vec<usize> = if len <= per_tensor {
            (0..len).collect()
        } else {
            (0..per_tensor).map(|_| rng.random_range(0..len)).collect()
        };
        for i in picks {
            let orig = probe.params()[ti].data()[i];
            probe.params_mut()[ti].data_mut()[i] = orig + eps;
            let up = loss(&probe)?;
            probe.params_mut()[ti].data_mut()[i] = orig - eps;
            let down = loss(&probe)?;
            probe.params_mut()[ti].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let rel = relative_error(g[i], numeric);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (ti, i);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Central differences of `loss` on every entry of every input, compared
/// with `analytic` (same layout).
fn check_inputs(
    inputs: &[Vec<f64>],
    analytic: &[Vec<f64>],
    eps: f64,
    loss: impl Fn(&[Vec<f64>]) -> Result<f64, NnError>,
) -> Result<GradCheck, NnError> {
    let mut probe = inputs.to_vec();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    for (ti, g) in analytic.iter().enumerate() {
        for i in 0..g.len() {
            let orig = probe[ti][i];
            probe[ti][i] = orig + eps;
            let up = loss(&probe)?;
            probe[ti][i] = orig - eps;
            let down = loss(&probe)?;
            probe[ti][i] = orig;
            let rel = relative_error(g[i], (up - down) / (2.0 * eps));
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (ti, i);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Check every layer type and both losses on small random problems. All
/// entries of inputs, weights and biases are perturbed.
pub fn check_layers(seed_value: u64, eps: f64) -> Result<Vec<(&'static str, GradCheck)>, NnError> {
    let mut rng = seed::rng(seed_value, 1);
    let mut rand = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let t = |shape: &[usize], v: &[f64]| Tensor::new(shape, v.to_vec());
    let mut out = Vec::new();

    let (xs, ks) = ([2, 2, 6, 6], [3, 2, 3, 3]);
    let inputs = vec![rand(144), rand(54), rand(3)];
    let c = rand(216);
    let g = layers::conv2d_backward(&t(&xs, &inputs[0])?, &t(&ks, &inputs[1])?, &t(&[2, 3, 6, 6], &c)?, true)?;
    let analytic = vec![g.input.expect("requested").into_data(), g.kernels, g.bias];
    out.push((
        "conv2d",
        check_inputs(&inputs, &analytic, eps, |p| {
            let y = layers::conv2d_forward(&t(&xs, &p[0])?, &t(&ks, &p[1])?, &p[2])?;
            Ok(dot(y.data(), &c))
        })?,
    ));

    // Keep inputs away from the kink.
    let x: Vec<f64> = rand(96).into_iter().map(|v| if v.abs() < 0.05 { v + 0.1 } else { v }).collect();
    let c = rand(96);
    let mut y = t(&[2, 3, 4, 4], &x)?;
    layers::relu(&mut y);
    let mut gr = t(&[2, 3, 4, 4], &c)?;
    layers::relu_backward(&y, &mut gr);
    out.push((
        "relu",
        check_inputs(&[x], &[gr.into_data()], eps, |p| {
            let mut y = t(&[2, 3, 4, 4], &p[0])?;
            layers::relu(&mut y);
            Ok(dot(y.data(), &c))
        })?,
    ));

    for (name, shape) in [("batchnorm2d", vec![4, 3, 3, 3]), ("batchnorm1d", vec![5, 4])] {
        let ch = shape[1];
        let len: usize = shape.iter().product();
        let inputs = vec![rand(len), rand(ch).into_iter().map(|v| v + 1.5).collect(), rand(ch)];
        let c = rand(len);
        let (_, cache) = layers::batchnorm_train(&t(&shape, &inputs[0])?, &inputs[1], &inputs[2], 1e-7)?;
        let g = layers::batchnorm_backward(&cache, &inputs[1], &t(&shape, &c)?)?;
        let analytic = vec![g.input.into_data(), g.gamma, g.beta];
        out.push((
            name,
            check_inputs(&inputs, &analytic, eps, |p| {
                let (y, _) = layers::batchnorm_train(&t(&shape, &p[0])?, &p[1], &p[2], 1e-7)?;
                Ok(dot(y.data(), &c))
            })?,
        ));
    }

    let x = rand(64);
    let c = rand(16);
    let (_, argmax) = layers::maxpool_forward(&t(&[2, 2, 4, 4], &x)?)?;
    let g = layers::maxpool_backward(&[2, 2, 4, 4], &argmax, &t(&[2, 2, 2, 2], &c)?)?;
    out.push((
        "maxpool",
        check_inputs(&[x], &[g.into_data()], eps, |p| {
            let (y, _) = layers::maxpool_forward(&t(&[2, 2, 4, 4], &p[0])?)?;
            Ok(dot(y.data(), &c))
        })?,
    ));

    let inputs = vec![rand(15), rand(20), rand(4)];
    let c = rand(12);
    let g = layers::dense_backward(&t(&[3, 5], &inputs[0])?, &t(&[4, 5], &inputs[1])?, &t(&[3, 4], &c)?, true)?;
    let analytic = vec![g.input.expect("requested").into_data(), g.weight, g.bias];
    out.push((
        "dense",
        check_inputs(&inputs, &analytic, eps, |p| {
            let y = layers::dense_forward(&t(&[3, 5], &p[0])?, &t(&[4, 5], &p[1])?, &p[2])?;
            Ok(dot(y.data(), &c))
        })?,
    ));

    let (pred, target) = (rand(12), rand(12));
    let (_, g) = loss::mse(&pred, &target, 3);
    out.push(("mse", check_inputs(&[pred], &[g], eps, |p| Ok(loss::mse(&p[0], &target, 3).0))?));

    let logits: Vec<f64> = rand(12).into_iter().map(|v| 3.0 * v).collect();
    let labels = [0, 3, 1];
    let (_, g) = loss::cross_entropy(&logits, &labels, 4);
    out.push((
        "cross_entropy",
        check_inputs(&[logits], &[g], eps, |p| Ok(loss::cross_entropy(&p[0], &labels, 4).0))?,
    ));
    Ok(out)
}
