//! CNN decoder against a linear map from pixels to stimuli.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::experiments::{fit, mean3};
use super::report::evaluate_regression;
use super::EvalError;
use crate::dataset::{Dataset, ScalingBounds};
use crate::nn::{Descriptor, Target, TrainConfig, TrainData, TrainedModel};

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub model: String,
    pub params: usize,
    pub per_seed: Vec<[f64; 3]>,
    pub errors: [f64; 3],
}

impl CompareRow {
    pub fn mean_error(&self) -> f64 {
        self.errors.iter().sum::<f64>() / 3.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareTable {
    pub rows: Vec<CompareRow>,
    /// CRC-32 of the input tensor both models were trained on.
    pub input_crc: u32,
}

impl CompareTable {
    pub fn row(&self, model: &str) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.model == model)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,params,depth_pct,position_pct,temperature_pct,mean_pct\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:?},{:?},{:?},{:?}",
                r.model,
                r.params,
                r.errors[0],
                r.errors[1],
                r.errors[2],
                r.mean_error()
            );
        }
        out
    }
}

fn input_crc(data: &TrainData<f32>) -> u32 {
    let mut h = crc32fast::Hasher::new();
    for v in &data.images {
        h.update(&v.to_le_bytes());
    }
    h.finalize()
}

/// Train the CNN decoder and the linear baseline on identical data with
/// identical seeds and evaluate both on `test`. The trained CNN models are
/// returned for reuse.
pub fn compare_models(
    train_sets: &[(u64, Dataset)],
    test: &Dataset,
    training: &dyn Fn(u64) -> TrainConfig,
) -> Result<(CompareTable, Vec<TrainedModel<f32>>), EvalError> {
    let Some((_, first)) = train_sets.first() else {
        return Err(EvalError::Config("no training sets".into()));
    };
    let side = first.image_side;
    let cnn = Descriptor::decoder(&Target::ALL, 0).with_input_side(side);
    let linear = Descriptor::linear(&Target::ALL).with_input_side(side);
    let mut crc = None;
    let mut errors = [Vec::new(), Vec::new()];
    let mut models = Vec::with_capacity(train_sets.len());
    for (s, train_set) in train_sets {
        let bounds = train_set.bounds_for(&[0, 1, 2])?;
        let a = TrainData::<f32>::from_dataset(train_set, &cnn, &bounds, None)?;
        let b = TrainData::<f32>::from_dataset(train_set, &linear, &bounds, None)?;
        if input_crc(&a) != input_crc(&b) || a.targets != b.targets {
            return Err(EvalError::Mismatch("models would see different inputs".into()));
        }
        if s == &train_sets[0].0 {
            crc = Some(input_crc(&a));
        }
        for (k, d) in [&cnn, &linear].into_iter().enumerate() {
            let (model, _) = fit(train_set, d.clone(), &training(*s), *s, None)?;
            let (report, _) = evaluate_regression(&model, test, None, None)?;
            errors[k].push(Target::ALL.map(|t| report.relative(t).unwrap_or(f64::NAN)));
            if k == 0 {
                models.push(model);
            }
        }
    }
    let [cnn_err, lin_err] = errors;
    let rows = vec![
        CompareRow {
            model: "cnn".into(),
            params: cnn.param_count(),
            errors: mean3(&cnn_err),
            per_seed: cnn_err,
        },
        CompareRow {
            model: "linear".into(),
            params: linear.param_count(),
            errors: mean3(&lin_err),
            per_seed: lin_err,
        },
    ];
    Ok((
        CompareTable {
            rows,
            input_crc: crc.unwrap_or(0),
        },
        models,
    ))
}

/// Closed-form ridge regression `y ≈ W x + b`, solved in double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub dim: usize,
    pub width: usize,
    /// `[width, dim]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LeastSquares {
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        (0..self.width)
            .map(|o| {
                let w = &self.weights[o * self.dim..(o + 1) * self.dim];
                self.bias[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    /// Predict and inverse-scale with `bounds` for `targets`.
    pub fn predict_stimulus(&self, x: &[f64], targets: &[Target], bounds: &ScalingBounds) -> Vec<f64> {
        self.predict(x)
            .into_iter()
            .zip(targets)
            .map(|(v, t)| bounds.unscale_value(t.feature(), v))
            .collect()
    }
}

/// Ridge least squares on `x` (`[n, dim]`) and `y` (`[n, width]`). Uses the
/// primal or dual normal equations, whichever system is smaller.
pub fn least_squares(
    x: &[f64],
    n: usize,
    dim: usize,
    y: &[f64],
    width: usize,
    ridge: f64,
) -> Result<LeastSquares, EvalError> {
    if n == 0 || dim == 0 || width == 0 || x.len() != n * dim || y.len() != n * width {
        return Err(EvalError::Config("least squares: inconsistent sizes".into()));
    }
    let xs = DMatrix::from_row_slice(n, dim, x);
    let ys = DMatrix::from_row_slice(n, width, y);
    let xm = xs.row_mean();
    let ym = ys.row_mean();
    let xc = DMatrix::from_fn(n, dim, |i, j| xs[(i, j)] - xm[j]);
    let yc = DMatrix::from_fn(n, width, |i, j| ys[(i, j)] - ym[j]);
    let not_pd = || EvalError::Config("normal equations are not positive definite".into());
    // wt is [dim, width].
    let wt = if dim <= n {
        let g = xc.tr_mul(&xc) + DMatrix::identity(dim, dim) * ridge;
        g.cholesky().ok_or_else(not_pd)?.solve(&xc.tr_mul(&yc))
    } else {
        let k = &xc * xc.transpose() + DMatrix::identity(n, n) * ridge;
        let alpha = k.cholesky().ok_or_else(not_pd)?.solve(&yc);
        xc.tr_mul(&alpha)
    };
    let weights: Vec<f64> = (0..width * dim).map(|i| wt[(i % dim, i / dim)]).collect();
    let bias = (0..width)
        .map(|o| ym[o] - (0..dim).map(|j| weights[o * dim + j] * xm[j]).sum::<f64>())
        .collect();
    Ok(LeastSquares {
        dim,
        width,
        weights,
        bias,
    })
}
