//! Scripted train/evaluate experiments. Each cell trains a fresh model;
//! trend quantities are averaged over the preset's seeds.

use std::fmt::Write as _;

use rand::seq::SliceRandom;

use super::report::{build_report, evaluate_regression, predict_rows, EvalReport};
use super::{EvalError, Preset};
use crate::dataset::{
    generate_dataset, generate_from_stimuli, AxisSweep, Dataset, DriftConfig, Preprocess,
    ScalingBounds, SweepProtocol,
};
use crate::kv::{self, KvMap};
use crate::nn::{train, Descriptor, LossHistory, Model, Target, TrainConfig, TrainData, TrainedModel};
use crate::optics::calibrate::{measure_correlation, CalibrationOptions, StimulusAxis};
use crate::optics::{build_material, MaterialConfig, MaterialField, SensitivityMode, Shape, StimulusVector};
use crate::seed;

/// Train a fresh model; targets are scaled by the training set's own bounds.
pub fn fit(
    train_set: &Dataset,
    descriptor: Descriptor,
    config: &TrainConfig,
    init_seed: u64,
    labels: Option<Vec<usize>>,
) -> Result<(TrainedModel<f32>, LossHistory), EvalError> {
    let features: Vec<usize> = descriptor.targets.iter().map(|t| t.feature()).collect();
    let bounds = train_set.bounds_for(&features)?;
    let data = TrainData::<f32>::from_dataset(train_set, &descriptor, &bounds, labels)?;
    let mut model = Model::build(descriptor, init_seed)?;
    let history = train(&mut model, &data, config)?;
    Ok((TrainedModel { model, bounds }, history))
}

/// Commanded-grid ranges of a protocol, used as a fixed error normalization.
pub fn protocol_bounds(p: &SweepProtocol) -> Result<ScalingBounds, EvalError> {
    let axes = [p.depth, p.position, p.temperature];
    let min = axes.map(|a| a.start.min(a.last()));
    let max = axes.map(|a| a.start.max(a.last()));
    Ok(ScalingBounds::new(min, max)?)
}

/// Copy of `ds` whose metadata records which split it is.
pub fn with_split(mut ds: Dataset, split: &str) -> Dataset {
    let mut meta = KvMap::parse(&ds.metadata).unwrap_or_default();
    meta.set("split", split);
    ds.metadata = meta.to_text();
    ds
}

fn regression_descriptor(preset: &Preset) -> Descriptor {
    Descriptor::decoder(&Target::ALL, 0).with_input_side(preset.generate.preprocess.crop)
}

fn errors3(r: &EvalReport) -> [f64; 3] {
    Target::ALL.map(|t| r.relative(t).unwrap_or(f64::NAN))
}

/// Element-wise mean of per-seed error triples.
pub fn mean3(rows: &[[f64; 3]]) -> [f64; 3] {
    let n = rows.len().max(1) as f64;
    let mut out = [0.0; 3];
    for r in rows {
        for i in 0..3 {
            out[i] += r[i] / n;
        }
    }
    out
}

fn mean_of(e: &[f64; 3]) -> f64 {
    e.iter().sum::<f64>() / 3.0
}

fn fmt3(e: &[f64; 3]) -> String {
    format!("{:?},{:?},{:?}", e[0], e[1], e[2])
}

/// Training-grid spacing for one row of the interval experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSet {
    pub label: String,
    /// Depth (µm), position (µm) and temperature (°C) steps.
    pub steps: [f64; 3],
}

impl IntervalSet {
    pub fn new(label: &str, steps: [f64; 3]) -> Self {
        Self {
            label: label.into(),
            steps,
        }
    }

    /// The preset's own spacing.
    pub fn fine(preset: &Preset) -> Self {
        Self::new(
            "fine",
            [preset.train.depth.step, preset.train.position.step, preset.train.temperature.step],
        )
    }

    /// Spacing at which the calibrated material decorrelates to roughly 0.2–0.4.
    pub fn coarse() -> Self {
        Self::new("coarse", [52.0, 520.0, 0.8])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRow {
    pub set: IntervalSet,
    /// Measured speckle correlation at each step.
    pub correlation: [f64; 3],
    pub per_seed: Vec<[f64; 3]>,
    pub errors: [f64; 3],
}

impl IntervalRow {
    pub fn mean_error(&self) -> f64 {
        mean_of(&self.errors)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalTable {
    pub rows: Vec<IntervalRow>,
}

impl IntervalTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "label,depth_step,position_step,temperature_step,c_depth,c_position,c_temperature,depth_pct,position_pct,temperature_pct,mean_pct\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:?}",
                r.set.label,
                fmt3(&r.set.steps),
                fmt3(&r.correlation),
                fmt3(&r.errors),
                r.mean_error()
            );
        }
        out
    }
}

/// Train at each spacing (same counts and starts as the preset grid) and
/// evaluate on the preset's fixed half-interval test set. Errors are
/// normalized by the preset grid's commanded ranges so rows compare.
pub fn experiment_intervals(
    field: &MaterialField,
    preset: &Preset,
    sets: &[IntervalSet],
) -> Result<IntervalTable, EvalError> {
    let test = with_split(generate_dataset(field, &preset.test, &preset.test_options())?, "test");
    let reference = protocol_bounds(&preset.train)?;
    let probe = CalibrationOptions {
        noise: preset.generate.noise,
        ..CalibrationOptions::default()
    };
    let mut rows = Vec::with_capacity(sets.len());
    for set in sets {
        let axes = [StimulusAxis::Depth, StimulusAxis::Position, StimulusAxis::Temperature];
        let mut correlation = [0.0; 3];
        for (i, axis) in axes.into_iter().enumerate() {
            correlation[i] = measure_correlation(field, axis, set.steps[i], &probe)?;
        }
        let protocol = SweepProtocol {
            depth: AxisSweep { step: set.steps[0], ..preset.train.depth },
            position: AxisSweep { step: set.steps[1], ..preset.train.position },
            temperature: AxisSweep { step: set.steps[2], ..preset.train.temperature },
            ..preset.train.clone()
        };
        let mut per_seed = Vec::with_capacity(preset.seeds.len());
        for &s in &preset.seeds {
            let train_set = generate_dataset(field, &protocol, &preset.train_options(s))?;
            let (model, _) = fit(&train_set, regression_descriptor(preset), &preset.training_for(s), s, None)?;
            let (report, _) = evaluate_regression(&model, &test, None, Some(&reference))?;
            per_seed.push(errors3(&report));
        }
        rows.push(IntervalRow {
            set: set.clone(),
            correlation,
            errors: mean3(&per_seed),
            per_seed,
        });
    }
    Ok(IntervalTable { rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSizeRow {
    pub n: usize,
    pub per_seed: Vec<[f64; 3]>,
    pub errors: [f64; 3],
}

impl SampleSizeRow {
    pub fn mean_error(&self) -> f64 {
        mean_of(&self.errors)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSizeTable {
    /// Samples in one sweep of the grid.
    pub n_d: usize,
    /// Optimizer steps given to every cell.
    pub steps: u64,
    pub rows: Vec<SampleSizeRow>,
}

impl SampleSizeTable {
    pub fn row(&self, n: usize) -> Option<&SampleSizeRow> {
        self.rows.iter().find(|r| r.n == n)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,is_n_d,depth_pct,position_pct,temperature_pct,mean_pct\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:?}",
                r.n,
                r.n == self.n_d,
                fmt3(&r.errors),
                r.mean_error()
            );
        }
        out
    }
}

/// Indices of `n` training samples drawn from the first `⌈n / n_d⌉` sweeps.
pub fn sample_indices(n: usize, n_d: usize, seed_value: u64) -> Vec<usize> {
    let sweeps = n.div_ceil(n_d.max(1));
    let mut pool: Vec<usize> = (0..sweeps * n_d).collect();
    if pool.len() > n {
        pool.shuffle(&mut seed::rng(seed_value, n as u64));
        pool.truncate(n);
        pool.sort_unstable();
    }
    pool
}

/// Train on `n` samples for each entry of `sizes`. Every cell gets the same
/// number of optimizer steps so that only the data differ.
pub fn experiment_sample_size(
    field: &MaterialField,
    preset: &Preset,
    sizes: &[usize],
    steps: u64,
) -> Result<SampleSizeTable, EvalError> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(EvalError::Config("sample sizes must be positive".into()));
    }
    let n_d = preset.train.states();
    let max_n = sizes.iter().copied().max().unwrap_or(0);
    let pool_protocol = SweepProtocol {
        repeats: max_n.div_ceil(n_d),
        ..preset.train.clone()
    };
    let test = with_split(generate_dataset(field, &preset.test, &preset.test_options())?, "test");
    let reference = protocol_bounds(&preset.train)?;
    let mut per_size: Vec<Vec<[f64; 3]>> = vec![Vec::new(); sizes.len()];
    for &s in &preset.seeds {
        let pool = generate_dataset(field, &pool_protocol, &preset.train_options(s))?;
        for (k, &n) in sizes.iter().enumerate() {
            let subset = pool.subset(&sample_indices(n, n_d, s));
            let config = TrainConfig {
                epochs: steps.max(1) as usize,
                max_steps: Some(steps),
                ..preset.training_for(s)
            };
            let (model, _) = fit(&subset, regression_descriptor(preset), &config, s, None)?;
            let (report, _) = evaluate_regression(&model, &test, None, Some(&reference))?;
            per_size[k].push(errors3(&report));
        }
    }
    let rows = sizes
        .iter()
        .zip(per_size)
        .map(|(&n, per_seed)| SampleSizeRow {
            n,
            errors: mean3(&per_seed),
            per_seed,
        })
        .collect();
    Ok(SampleSizeTable { n_d, steps, rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftRow {
    pub day: f64,
    pub per_model: Vec<[f64; 3]>,
    pub errors: [f64; 3],
}

impl DriftRow {
    pub fn mean_error(&self) -> f64 {
        mean_of(&self.errors)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftTable {
    pub rows: Vec<DriftRow>,
}

impl DriftTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("day,depth_pct,position_pct,temperature_pct,mean_pct\n");
        for r in &self.rows {
            let _ = writeln!(out, "{:?},{},{:?}", r.day, fmt3(&r.errors), r.mean_error());
        }
        out
    }
}

/// Evaluate already-trained models, without retraining, on the preset test
/// grid rendered after `day` days of material drift.
pub fn experiment_drift(
    field: &MaterialField,
    models: &[TrainedModel<f32>],
    preset: &Preset,
    days: &[f64],
) -> Result<DriftTable, EvalError> {
    if models.is_empty() {
        return Err(EvalError::Config("drift experiment needs at least one model".into()));
    }
    let mut rows = Vec::with_capacity(days.len());
    for &day in days {
        let mut options = preset.test_options();
        options.drift = DriftConfig {
            days: day,
            ..preset.generate.drift
        };
        let test = with_split(generate_dataset(field, &preset.test, &options)?, "test");
        let mut per_model = Vec::with_capacity(models.len());
        for m in models {
            let (report, _) = evaluate_regression(m, &test, None, None)?;
            per_model.push(errors3(&report));
        }
        rows.push(DriftRow {
            day,
            errors: mean3(&per_model),
            per_model,
        });
    }
    Ok(DriftTable { rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSetup {
    pub protocol: SweepProtocol,
    pub test_fraction: f64,
}

impl ShapeSetup {
    /// 15 depths × 3 shapes × 10 repeats = 450 samples at one position.
    pub fn desk(material: &MaterialConfig) -> Self {
        Self {
            protocol: SweepProtocol {
                depth: AxisSweep::new(100.0, 8.0, 15),
                position: AxisSweep::new(0.0, 0.0, 1),
                temperature: AxisSweep::new(material.thermal_ref, 0.0, 1),
                repeats: 10,
                shapes: vec![Shape::Circle, Shape::Square, Shape::Triangle],
            },
            test_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeResult {
    pub report: EvalReport,
    pub train_count: usize,
    pub test_count: usize,
    pub train_accuracy: f64,
}

/// Shuffle `0..n` and put the first `round(n·fraction)` indices in the test split.
pub fn split_indices(n: usize, test_fraction: f64, seed_value: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed_value, 0x5711));
    let n_test = ((n as f64) * test_fraction).round() as usize;
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

/// Joint depth regression and shape classification on a random split.
pub fn experiment_shapes(
    field: &MaterialField,
    preset: &Preset,
    setup: &ShapeSetup,
    seed_value: u64,
) -> Result<ShapeResult, EvalError> {
    let all = generate_dataset(field, &setup.protocol, &preset.train_options(seed_value))?;
    let (train_idx, test_idx) = split_indices(all.len(), setup.test_fraction, seed_value);
    let train_set = with_split(all.subset(&train_idx), "train");
    let test_set = with_split(all.subset(&test_idx), "test");
    let descriptor = Descriptor::decoder(&[Target::Depth], setup.protocol.shapes.len())
        .with_input_side(preset.generate.preprocess.crop);
    let (model, _) = fit(&train_set, descriptor, &preset.training_for(seed_value), seed_value, None)?;
    let (report, _) = evaluate_regression(&model, &test_set, None, None)?;
    let (train_report, _) = evaluate_regression(&model, &train_set, None, None)?;
    Ok(ShapeResult {
        report,
        train_count: train_set.len(),
        test_count: test_set.len(),
        train_accuracy: train_report.accuracy().unwrap_or(0.0),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceSetup {
    /// Press centers along the position axis, one class each.
    pub centers_um: Vec<f64>,
    pub depth_um: f64,
    pub radius_mm: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
}

impl Default for InterfaceSetup {
    /// Four presses 2 mm apart inside the illuminated spot: 320 training
    /// and 80 test samples.
    fn default() -> Self {
        Self {
            centers_um: vec![-3000.0, -1000.0, 1000.0, 3000.0],
            depth_um: 30.0,
            radius_mm: 3.0,
            train_per_class: 80,
            test_per_class: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceResult {
    pub report: EvalReport,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

fn interface_set(
    field: &MaterialField,
    setup: &InterfaceSetup,
    per_class: usize,
    options: &crate::dataset::GenerateOptions,
) -> Result<(Dataset, Vec<usize>), EvalError> {
    let t = field.config().thermal_ref;
    let mut stimuli = Vec::with_capacity(per_class * setup.centers_um.len());
    let mut labels = Vec::with_capacity(stimuli.capacity());
    for _ in 0..per_class {
        for (c, &center) in setup.centers_um.iter().enumerate() {
            stimuli.push(StimulusVector::new(setup.depth_um, center, t));
            labels.push(c);
        }
    }
    let mut meta = KvMap::new();
    meta.set("task", "interface");
    meta.set("depth_um", kv::float(setup.depth_um));
    Ok((generate_from_stimuli(field, &stimuli, options, meta)?, labels))
}

/// Coarse touch classification in the reduced-sensitivity material mode
/// with a classifier-only decoder.
pub fn experiment_interface(
    material: &MaterialConfig,
    preset: &Preset,
    setup: &InterfaceSetup,
    seed_value: u64,
) -> Result<InterfaceResult, EvalError> {
    if setup.centers_um.len() < 2 {
        return Err(EvalError::Config("interface task needs at least two centers".into()));
    }
    let config = MaterialConfig {
        sensitivity_mode: SensitivityMode::Interface,
        indenter_radius_mm: setup.radius_mm,
        ..material.clone()
    };
    let field = build_material(&config)?;
    let (train_set, train_labels) =
        interface_set(&field, setup, setup.train_per_class, &preset.train_options(seed_value))?;
    let (test_set, test_labels) =
        interface_set(&field, setup, setup.test_per_class, &preset.test_options())?;
    let descriptor = Descriptor::decoder(&[], setup.centers_um.len())
        .with_input_side(preset.generate.preprocess.crop);
    let (model, _) = fit(
        &with_split(train_set.clone(), "train"),
        descriptor,
        &preset.training_for(seed_value),
        seed_value,
        Some(train_labels.clone()),
    )?;
    let classes = setup.centers_um.len();
    let score = |ds: &Dataset, labels: &[usize]| -> Result<EvalReport, EvalError> {
        let rows = predict_rows(&model, ds, Some(labels))?;
        build_report(&rows, &[], &model.bounds, classes)
    };
    let report = score(&with_split(test_set, "test"), &test_labels)?;
    let train_report = score(&train_set, &train_labels)?;
    Ok(InterfaceResult {
        test_accuracy: report.accuracy().unwrap_or(0.0),
        train_accuracy: train_report.accuracy().unwrap_or(0.0),
        report,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResizeRow {
    pub fraction: f64,
    pub crop: usize,
    /// Crop actually used after clamping to the downsampled size.
    pub used_crop: usize,
    pub per_seed: Vec<[f64; 3]>,
    pub errors: [f64; 3],
}

impl ResizeRow {
    pub fn mean_error(&self) -> f64 {
        mean_of(&self.errors)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResizeTable {
    pub rows: Vec<ResizeRow>,
}

impl ResizeTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fraction,crop,used_crop,depth_pct,position_pct,temperature_pct,mean_pct\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:?},{},{},{},{:?}",
                r.fraction,
                r.crop,
                r.used_crop,
                fmt3(&r.errors),
                r.mean_error()
            );
        }
        out
    }
}

/// Largest multiple of 4 not above `crop` or the downsampled image side.
pub fn usable_crop(grid: usize, fraction: f64, crop: usize) -> Result<usize, EvalError> {
    let pre = Preprocess { fraction, crop };
    let side = pre.pooled_side(grid).min(crop) / 4 * 4;
    if side == 0 {
        return Err(EvalError::Config(format!(
            "fraction {fraction} leaves no room for a crop divisible by 4"
        )));
    }
    Ok(side)
}

/// Repeat training and evaluation for every (fraction, crop) pair.
pub fn experiment_resize(
    field: &MaterialField,
    preset: &Preset,
    fractions: &[f64],
    crops: &[usize],
) -> Result<ResizeTable, EvalError> {
    let reference = protocol_bounds(&preset.train)?;
    let mut rows = Vec::new();
    for &fraction in fractions {
        for &crop in crops {
            let used_crop = usable_crop(field.config().grid_size, fraction, crop)?;
            let mut p = preset.clone();
            p.generate.preprocess = Preprocess {
                fraction,
                crop: used_crop,
            };
            let test = with_split(generate_dataset(field, &p.test, &p.test_options())?, "test");
            let mut per_seed = Vec::with_capacity(p.seeds.len());
            for &s in &p.seeds {
                let train_set = generate_dataset(field, &p.train, &p.train_options(s))?;
                let (model, _) = fit(&train_set, regression_descriptor(&p), &p.training_for(s), s, None)?;
                let (report, _) = evaluate_regression(&model, &test, None, Some(&reference))?;
                per_seed.push(errors3(&report));
            }
            rows.push(ResizeRow {
                fraction,
                crop,
                used_crop,
                errors: mean3(&per_seed),
                per_seed,
            });
        }
    }
    Ok(ResizeTable { rows })
}
