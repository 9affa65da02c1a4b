//! Mini-batch training loop and batch-independent prediction.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::adam::{Adam, AdamConfig};
use super::loss::{cross_entropy, mse, softmax};
use super::model::{Architecture, Descriptor, Model, Target};
use super::{NnError, Real};
use crate::dataset::{Dataset, ScalingBounds};
use crate::kv::{self, KvMap};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub epochs: usize,
    /// Stop after this many optimizer steps, even mid-epoch.
    pub max_steps: Option<u64>,
    pub mse_weight: f64,
    pub ce_weight: f64,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 50,
            adam: AdamConfig::default(),
            epochs: 60,
            max_steps: None,
            mse_weight: 1.0,
            ce_weight: 1.0,
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.batch_size == 0 {
            return Err(NnError::Config("batch size must be at least 1".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(NnError::Config(format!("learning rate {} must be positive", self.adam.lr)));
        }
        if !(self.adam.weight_decay >= 0.0) || !self.adam.weight_decay.is_finite() {
            return Err(NnError::Config(format!(
                "weight decay {} must be non-negative",
                self.adam.weight_decay
            )));
        }
        if self.epochs == 0 {
            return Err(NnError::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.set("batch_size", self.batch_size);
        kv.set("lr", kv::float(self.adam.lr));
        kv.set("beta1", kv::float(self.adam.beta1));
        kv.set("beta2", kv::float(self.adam.beta2));
        kv.set("adam_eps", kv::float(self.adam.eps));
        kv.set("weight_decay", kv::float(self.adam.weight_decay));
        kv.set("epochs", self.epochs);
        kv.set("max_steps", self.max_steps.map_or("none".to_string(), |s| s.to_string()));
        kv.set("mse_weight", kv::float(self.mse_weight));
        kv.set("ce_weight", kv::float(self.ce_weight));
        kv.set("shuffle_seed", self.shuffle_seed);
        kv
    }

    pub fn update_from_kv(&mut self, kv: &KvMap) -> Result<(), NnError> {
        kv.update("batch_size", &mut self.batch_size)?;
        kv.update("lr", &mut self.adam.lr)?;
        kv.update("beta1", &mut self.adam.beta1)?;
        kv.update("beta2", &mut self.adam.beta2)?;
        kv.update("adam_eps", &mut self.adam.eps)?;
        kv.update("weight_decay", &mut self.adam.weight_decay)?;
        kv.update("epochs", &mut self.epochs)?;
        if let Some(s) = kv.get_str("max_steps") {
            self.max_steps = match s {
                "none" => None,
                v => Some(v.parse().map_err(|_| NnError::Config(format!("bad max_steps {v:?}")))?),
            };
        }
        kv.update("mse_weight", &mut self.mse_weight)?;
        kv.update("ce_weight", &mut self.ce_weight)?;
        kv.update("shuffle_seed", &mut self.shuffle_seed)?;
        self.validate()
    }
}

/// Images with scaled regression targets and class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData<T> {
    pub side: usize,
    /// `[n, side*side]`.
    pub images: Vec<T>,
    /// `[n, width]` scaled targets.
    pub targets: Vec<T>,
    pub width: usize,
    /// One label per sample, empty when there is no classifier.
    pub labels: Vec<usize>,
}

impl<T: Real> TrainData<T> {
    pub fn new(
        side: usize,
        images: Vec<T>,
        targets: Vec<T>,
        width: usize,
        labels: Vec<usize>,
    ) -> Result<Self, NnError> {
        let px = side * side;
        if px == 0 || images.len() % px != 0 {
            return Err(NnError::Shape(format!("{} values for {side}×{side} images", images.len())));
        }
        let n = images.len() / px;
        if targets.len() != n * width {
            return Err(NnError::Shape(format!("{} targets for {n} samples × {width}", targets.len())));
        }
        if !labels.is_empty() && labels.len() != n {
            return Err(NnError::Shape(format!("{} labels for {n} samples", labels.len())));
        }
        Ok(Self {
            side,
            images,
            targets,
            width,
            labels,
        })
    }

    /// Targets are scaled with `bounds`; labels default to the shape class
    /// when the descriptor has a classifier and none are given.
    pub fn from_dataset(
        ds: &Dataset,
        descriptor: &Descriptor,
        bounds: &ScalingBounds,
        labels: Option<Vec<usize>>,
    ) -> Result<Self, NnError> {
        if ds.is_empty() {
            return Err(NnError::EmptyDataset);
        }
        if ds.image_side != descriptor.input_side {
            return Err(NnError::Shape(format!(
                "dataset images are {0}×{0}, model expects {1}×{1}",
                ds.image_side, descriptor.input_side
            )));
        }
        let images = ds.image_matrix().into_iter().map(|v| T::lit(v as f64)).collect();
        let mut targets = Vec::with_capacity(ds.len() * descriptor.targets.len());
        for s in &ds.samples {
            let f = s.raw.features();
            for t in &descriptor.targets {
                targets.push(T::lit(bounds.scale_value(t.feature(), f[t.feature()])));
            }
        }
        let labels = if descriptor.classes == 0 {
            Vec::new()
        } else if let Some(l) = labels {
            l
        } else {
            ds.samples
                .iter()
                .map(|s| {
                    s.raw
                        .shape
                        .class_index()
                        .ok_or_else(|| NnError::Config("sample has no shape class".into()))
                })
                .collect::<Result<_, _>>()?
        };
        if let Some(&bad) = labels.iter().find(|&&l| l >= descriptor.classes) {
            return Err(NnError::Config(format!(
                "label {bad} out of range for {} classes",
                descriptor.classes
            )));
        }
        Self::new(ds.image_side, images, targets, descriptor.targets.len(), labels)
    }

    pub fn len(&self) -> usize {
        self.images.len() / (self.side * self.side)
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub mse: f64,
    pub ce: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossHistory {
    pub epochs: Vec<EpochLoss>,
    pub steps: u64,
}

impl LossHistory {
    pub fn last(&self) -> Option<&EpochLoss> {
        self.epochs.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mse,cross_entropy,total\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{},{:?},{:?},{:?}", e.epoch, e.mse, e.ce, e.total);
        }
        out
    }
}

/// Shuffled batches; a trailing batch of one is merged into its predecessor
/// when batchnorm needs at least two samples.
fn batches(n: usize, size: usize, min: usize, shuffle_seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(shuffle_seed, epoch as u64));
    let mut out: Vec<Vec<usize>> = order.chunks(size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < min) {
        let tail = out.pop().unwrap_or_default();
        if let Some(prev) = out.last_mut() {
            prev.extend(tail);
        }
    }
    out
}

/// Loss and gradients for the samples at `idx`.
pub fn batch_gradients<T: Real>(
    model: &Model<T>,
    data: &TrainData<T>,
    idx: &[usize],
    config: &TrainConfig,
) -> Result<(f64, f64, Vec<Vec<T>>, super::model::Cache<T>), NnError> {
    let d = model.descriptor();
    let px = data.side * data.side;
    let mut images = Vec::with_capacity(idx.len() * px);
    let mut targets = Vec::with_capacity(idx.len() * data.width);
    let mut labels = Vec::with_capacity(idx.len());
    for &i in idx {
        images.extend_from_slice(&data.images[i * px..(i + 1) * px]);
        targets.extend_from_slice(&data.targets[i * data.width..(i + 1) * data.width]);
        if d.classes > 0 {
            labels.push(data.labels[i]);
        }
    }
    let x = model.input_tensor(&images)?;
    let (out, cache) = model.forward_train(&x)?;
    let (mut l_mse, mut dreg) = (0.0, Vec::new());
    if !d.targets.is_empty() {
        let (l, g) = mse(&out.regression, &targets, d.targets.len());
        let w = T::lit(config.mse_weight);
        l_mse = l;
        dreg = g.into_iter().map(|v| v * w).collect();
    }
    let (mut l_ce, mut dlog) = (0.0, Vec::new());
    if d.classes > 0 {
        let (l, g) = cross_entropy(&out.logits, &labels, d.classes);
        let w = T::lit(config.ce_weight);
        l_ce = l;
        dlog = g.into_iter().map(|v| v * w).collect();
    }
    let grads = model.backward(&cache, &dreg, &dlog)?;
    Ok((l_mse, l_ce, grads, cache))
}

pub fn train<T: Real>(
    model: &mut Model<T>,
    data: &TrainData<T>,
    config: &TrainConfig,
) -> Result<LossHistory, NnError> {
    train_with(model, data, config, |_| {})
}

/// Like [`train`], calling `on_epoch` after every epoch.
pub fn train_with<T: Real>(
    model: &mut Model<T>,
    data: &TrainData<T>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLoss),
) -> Result<LossHistory, NnError> {
    config.validate()?;
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let d = model.descriptor().clone();
    if data.side != d.input_side || data.width != d.targets.len() {
        return Err(NnError::Shape("training data does not match the model outputs".into()));
    }
    if d.classes > 0 && data.labels.len() != data.len() {
        return Err(NnError::Config("classifier training needs one label per sample".into()));
    }
    let min_batch = if d.architecture == Architecture::Decoder { 2 } else { 1 };
    if data.len() < min_batch {
        return Err(NnError::BatchTooSmall(data.len()));
    }

    let mut adam = Adam::new(config.adam, model.params());
    let mut history = LossHistory::default();
    'epochs: for epoch in 0..config.epochs {
        let (mut sum_mse, mut sum_ce, mut seen) = (0.0, 0.0, 0usize);
        for idx in batches(data.len(), config.batch_size, min_batch, config.shuffle_seed, epoch) {
            if config.max_steps.is_some_and(|m| adam.steps() >= m) {
                break;
            }
            let (l_mse, l_ce, grads, cache) = batch_gradients(model, data, &idx, config)?;
            let total = config.mse_weight * l_mse + config.ce_weight * l_ce;
            if !total.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(NnError::Divergence { epoch, loss: total });
            }
            model.update_running_stats(&cache);
            adam.step(model.params_mut(), &grads);
            sum_mse += l_mse * idx.len() as f64;
            sum_ce += l_ce * idx.len() as f64;
            seen += idx.len();
        }
        if seen > 0 {
            let (mse, ce) = (sum_mse / seen as f64, sum_ce / seen as f64);
            let e = EpochLoss {
                epoch,
                mse,
                ce,
                total: config.mse_weight * mse + config.ce_weight * ce,
            };
            on_epoch(&e);
            history.epochs.push(e);
        }
        if config.max_steps.is_some_and(|m| adam.steps() >= m) {
            break 'epochs;
        }
    }
    history.steps = adam.steps();
    Ok(history)
}

/// Physical-unit estimate for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Depth, position, temperature; `None` where the model has no branch.
    pub estimate: [Option<f64>; 3],
    /// Softmax class probabilities, empty without a classifier.
    pub probabilities: Vec<f64>,
}

impl Prediction {
    pub fn get(&self, t: Target) -> Option<f64> {
        self.estimate[t.feature()]
    }

    /// Most probable class (lowest index on ties).
    pub fn class(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &p) in self.probabilities.iter().enumerate() {
            if best.is_none_or(|b| p > self.probabilities[b]) {
                best = Some(i);
            }
        }
        best
    }
}

/// Inference-mode predictions for `[n, side*side]` images. Each image is run
/// on its own, so results do not depend on how images are grouped.
pub fn predict<T: Real>(
    model: &Model<T>,
    images: &[T],
    bounds: &ScalingBounds,
) -> Result<Vec<Prediction>, NnError> {
    let d = model.descriptor();
    let px = d.input_side * d.input_side;
    if images.len() % px != 0 {
        return Err(NnError::Shape(format!("{} values for {px}-pixel images", images.len())));
    }
    images
        .par_chunks(px)
        .map(|img| {
            let out = model.forward_infer(&model.input_tensor(img)?)?;
            let mut estimate = [None; 3];
            for (t, v) in d.targets.iter().zip(&out.regression) {
                estimate[t.feature()] = Some(bounds.unscale_value(t.feature(), v.f64()));
            }
            let probabilities = if d.classes > 0 {
                softmax(&out.logits, d.classes)
            } else {
                Vec::new()
            };
            Ok(Prediction {
                estimate,
                probabilities,
            })
        })
        .collect()
}
