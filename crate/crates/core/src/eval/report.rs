//! Error metrics, confusion matrices and prediction dumps.

use std::fmt::Write as _;

use super::EvalError;
use crate::dataset::{Dataset, ScalingBounds};
use crate::nn::{predict, Target, TrainedModel};
use crate::optics::StimulusVector;

/// Ground truth next to the model output for one test sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub truth: StimulusVector,
    pub estimate: [Option<f64>; 3],
    pub label: Option<usize>,
    pub predicted: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureError {
    pub target: Target,
    /// Mean absolute error in physical units.
    pub mae: f64,
    /// `mae / range × 100`.
    pub relative_pct: f64,
    /// Standard deviation of the signed residual.
    pub residual_std: f64,
    /// Normalizing range `x_max − x_min`.
    pub range: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Latency {
    pub mean_ms: f64,
    pub std_ms: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub count: usize,
    pub features: Vec<FeatureError>,
    /// `confusion[true][predicted]` counts.
    pub confusion: Option<Vec<Vec<usize>>>,
    pub latency: Option<Latency>,
}

impl EvalReport {
    pub fn feature(&self, t: Target) -> Option<&FeatureError> {
        self.features.iter().find(|f| f.target == t)
    }

    pub fn relative(&self, t: Target) -> Option<f64> {
        self.feature(t).map(|f| f.relative_pct)
    }

    /// Mean of the per-feature relative errors.
    pub fn mean_relative_pct(&self) -> f64 {
        if self.features.is_empty() {
            return 0.0;
        }
        self.features.iter().map(|f| f.relative_pct).sum::<f64>() / self.features.len() as f64
    }

    /// Confusion-matrix trace over total.
    pub fn accuracy(&self) -> Option<f64> {
        let m = self.confusion.as_ref()?;
        let total: usize = m.iter().flatten().sum();
        let trace: usize = (0..m.len()).map(|i| m[i][i]).sum();
        Some(trace as f64 / total.max(1) as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,mae,relative_pct,residual_std,range\n");
        for f in &self.features {
            let _ = writeln!(
                out,
                "{},{:?},{:?},{:?},{:?}",
                f.target, f.mae, f.relative_pct, f.residual_std, f.range
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("samples = {}\n", self.count);
        for f in &self.features {
            let _ = writeln!(
                out,
                "{}: mae = {:.4}, relative = {:.3} %, residual std = {:.4}",
                f.target, f.mae, f.relative_pct, f.residual_std
            );
        }
        if !self.features.is_empty() {
            let _ = writeln!(out, "mean relative = {:.3} %", self.mean_relative_pct());
        }
        if let (Some(m), Some(acc)) = (&self.confusion, self.accuracy()) {
            let _ = writeln!(out, "accuracy = {acc:.4}");
            out.push_str("confusion (rows = true, columns = predicted):\n");
            for row in m {
                let cells: Vec<String> = row.iter().map(|c| format!("{c:4}")).collect();
                let _ = writeln!(out, "{}", cells.join(" "));
            }
        }
        if let Some(l) = &self.latency {
            let _ = writeln!(
                out,
                "latency = {:.3} ± {:.3} ms over {} runs",
                l.mean_ms, l.std_ms, l.runs
            );
        }
        out
    }
}

/// Metrics from prediction rows. Relative errors divide by the ranges in
/// `ranges` (normally the training-set scaling bounds).
pub fn build_report(
    rows: &[PredictionRow],
    targets: &[Target],
    ranges: &ScalingBounds,
    classes: usize,
) -> Result<EvalReport, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::EmptyTest);
    }
    let n = rows.len() as f64;
    let mut features = Vec::with_capacity(targets.len());
    for &t in targets {
        let i = t.feature();
        let mut residuals = Vec::with_capacity(rows.len());
        for r in rows {
            let est = r.estimate[i].ok_or_else(|| {
                EvalError::Config(format!("prediction has no {t} estimate"))
            })?;
            residuals.push(est - r.truth.features()[i]);
        }
        let mae = residuals.iter().map(|e| e.abs()).sum::<f64>() / n;
        let mean = residuals.iter().sum::<f64>() / n;
        let var = residuals.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
        let range = ranges.range(i);
        features.push(FeatureError {
            target: t,
            mae,
            relative_pct: mae / range * 100.0,
            residual_std: var.sqrt(),
            range,
        });
    }
    let confusion = if classes > 0 {
        let mut m = vec![vec![0usize; classes]; classes];
        for r in rows {
            match (r.label, r.predicted) {
                (Some(l), Some(p)) if l < classes && p < classes => m[l][p] += 1,
                _ => return Err(EvalError::Config("classification row without labels".into())),
            }
        }
        Some(m)
    } else {
        None
    };
    Ok(EvalReport {
        count: rows.len(),
        features,
        confusion,
        latency: None,
    })
}

/// Run the model on every test image and collect prediction rows.
pub fn predict_rows(
    trained: &TrainedModel<f32>,
    test: &Dataset,
    labels: Option<&[usize]>,
) -> Result<Vec<PredictionRow>, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyTest);
    }
    let d = trained.model.descriptor();
    if test.image_side != d.input_side {
        return Err(EvalError::Config(format!(
            "test images are {0}×{0}, model expects {1}×{1}",
            test.image_side, d.input_side
        )));
    }
    let labels: Option<Vec<usize>> = match (d.classes, labels) {
        (0, _) => None,
        (_, Some(l)) => Some(l.to_vec()),
        (_, None) => Some(
            test.samples
                .iter()
                .map(|s| s.raw.shape.class_index())
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| EvalError::Config("test sample has no shape class".into()))?,
        ),
    };
    if labels.as_ref().is_some_and(|l| l.len() != test.len()) {
        return Err(EvalError::Config("one label per test sample required".into()));
    }
    let preds = predict(&trained.model, &test.image_matrix(), &trained.bounds)?;
    Ok(preds
        .into_iter()
        .zip(&test.samples)
        .enumerate()
        .map(|(i, (p, s))| PredictionRow {
            truth: s.raw,
            estimate: p.estimate,
            label: labels.as_ref().map(|l| l[i]),
            predicted: p.class(),
        })
        .collect())
}

/// Evaluate a trained model on a test set. Relative errors use the model's
/// training bounds unless `reference` overrides them.
pub fn evaluate_regression(
    trained: &TrainedModel<f32>,
    test: &Dataset,
    labels: Option<&[usize]>,
    reference: Option<&ScalingBounds>,
) -> Result<(EvalReport, Vec<PredictionRow>), EvalError> {
    let rows = predict_rows(trained, test, labels)?;
    let d = trained.model.descriptor();
    let report = build_report(
        &rows,
        &d.targets,
        reference.unwrap_or(&trained.bounds),
        d.classes,
    )?;
    Ok((report, rows))
}

/// CSV of ground truth against estimates, one line per sample.
pub fn predictions_csv(rows: &[PredictionRow]) -> String {
    let mut out = String::from(
        "index,depth_true,depth_pred,position_true,position_pred,temperature_true,temperature_pred,label,predicted\n",
    );
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:?}"));
    let lab = |v: Option<usize>| v.map_or(String::new(), |x| x.to_string());
    for (i, r) in rows.iter().enumerate() {
        let t = r.truth.features();
        let _ = writeln!(
            out,
            "{i},{:?},{},{:?},{},{:?},{},{},{}",
            t[0],
            opt(r.estimate[0]),
            t[1],
            opt(r.estimate[1]),
            t[2],
            opt(r.estimate[2]),
            lab(r.label),
            lab(r.predicted)
        );
    }
    out
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let v = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}
