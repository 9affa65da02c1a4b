//! Decoder architecture (shared convolutional extractor with branched heads)
//! and the linear baseline, over a flat parameter list.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::layers::{self, BnCache};
use super::{NnError, Real, Tensor};
use crate::kv::{self, KvMap};
use crate::seed;

/// A regression output of the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    Depth,
    Position,
    Temperature,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::Depth, Target::Position, Target::Temperature];

    /// Index into [`crate::optics::StimulusVector::features`].
    pub fn feature(self) -> usize {
        match self {
            Target::Depth => 0,
            Target::Position => 1,
            Target::Temperature => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Target::Depth => "depth",
            Target::Position => "position",
            Target::Temperature => "temperature",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Target {
    type Err = NnError;
    fn from_str(s: &str) -> Result<Self, NnError> {
        Target::ALL
            .into_iter()
            .find(|t| t.name() == s.trim())
            .ok_or_else(|| NnError::Config(format!("unknown target {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    Decoder,
    Linear,
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::Decoder => "decoder",
            Architecture::Linear => "linear",
        })
    }
}

impl FromStr for Architecture {
    type Err = NnError;
    fn from_str(s: &str) -> Result<Self, NnError> {
        match s.trim() {
            "decoder" => Ok(Architecture::Decoder),
            "linear" => Ok(Architecture::Linear),
            other => Err(NnError::Config(format!("unknown architecture {other:?}"))),
        }
    }
}

/// Everything needed to lay out the parameters of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub architecture: Architecture,
    pub input_side: usize,
    pub channels: [usize; 2],
    pub kernel: usize,
    /// Width of the shared fully connected feature layer.
    pub feature: usize,
    /// Widths of the two hidden layers in every branch.
    pub hidden: [usize; 2],
    pub targets: Vec<Target>,
    /// Number of classifier outputs, 0 for no classifier.
    pub classes: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

const EXTRACTOR_PARAMS: usize = 10;
const HEAD_PARAMS: usize = 6;

impl Descriptor {
    /// 64×64 input, 32/64 channels of 5×5 kernels, 500 features, 200/100 branches.
    pub fn decoder(targets: &[Target], classes: usize) -> Self {
        Self {
            architecture: Architecture::Decoder,
            input_side: 64,
            channels: [32, 64],
            kernel: 5,
            feature: 500,
            hidden: [200, 100],
            targets: targets.to_vec(),
            classes,
            bn_momentum: 0.9,
            bn_eps: 1e-7,
        }
    }

    pub fn linear(targets: &[Target]) -> Self {
        Self {
            architecture: Architecture::Linear,
            ..Self::decoder(targets, 0)
        }
    }

    pub fn with_input_side(mut self, side: usize) -> Self {
        self.input_side = side;
        self
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::Config(m));
        for (i, t) in self.targets.iter().enumerate() {
            if self.targets[..i].contains(t) {
                return bad(format!("target {t} listed twice"));
            }
        }
        if self.input_side == 0 {
            return bad("input side must be positive".into());
        }
        if self.classes == 1 {
            return bad("a classifier needs at least 2 classes".into());
        }
        match self.architecture {
            Architecture::Linear => {
                if self.classes != 0 {
                    return bad("the linear model has no classifier".into());
                }
                if self.targets.is_empty() {
                    return bad("the linear model needs at least one target".into());
                }
            }
            Architecture::Decoder => {
                if self.input_side % 4 != 0 {
                    return bad(format!(
                        "input side {} must be divisible by 4 for two 2×2 poolings",
                        self.input_side
                    ));
                }
                if self.kernel % 2 == 0 {
                    return bad(format!("kernel {} must be odd", self.kernel));
                }
                if self.channels.contains(&0) || self.feature == 0 || self.hidden.contains(&0) {
                    return bad("layer widths must be positive".into());
                }
                if self.targets.is_empty() && self.classes == 0 {
                    return bad("model has neither regression targets nor classifier".into());
                }
                if !(self.bn_momentum >= 0.0 && self.bn_momentum < 1.0) || !(self.bn_eps > 0.0) {
                    return bad("batchnorm momentum must be in [0, 1) and eps positive".into());
                }
            }
        }
        Ok(())
    }

    /// Length of the flattened extractor output.
    pub fn flat_len(&self) -> usize {
        let s = self.input_side / 4;
        self.channels[1] * s * s
    }

    pub fn layout(&self) -> Vec<ParamSpec> {
        let p = |name: &str, shape: &[usize]| ParamSpec {
            name: name.to_string(),
            shape: shape.to_vec(),
        };
        let s = self.input_side;
        match self.architecture {
            Architecture::Linear => {
                let r = self.targets.len();
                vec![p("linear.weight", &[r, s * s]), p("linear.bias", &[r])]
            }
            Architecture::Decoder => {
                let [c1, c2] = self.channels;
                let k = self.kernel;
                let [h1, h2] = self.hidden;
                let mut v = vec![
                    p("conv1.weight", &[c1, 1, k, k]),
                    p("conv1.bias", &[c1]),
                    p("bn1.gamma", &[c1]),
                    p("bn1.beta", &[c1]),
                    p("conv2.weight", &[c2, c1, k, k]),
                    p("conv2.bias", &[c2]),
                    p("bn2.gamma", &[c2]),
                    p("bn2.beta", &[c2]),
                    p("fc.weight", &[self.feature, self.flat_len()]),
                    p("fc.bias", &[self.feature]),
                ];
                let heads = self
                    .targets
                    .iter()
                    .map(|t| (t.name().to_string(), 1))
                    .chain((self.classes > 0).then(|| ("class".to_string(), self.classes)));
                for (name, out) in heads {
                    v.push(p(&format!("{name}.fc1.weight"), &[h1, self.feature]));
                    v.push(p(&format!("{name}.fc1.bias"), &[h1]));
                    v.push(p(&format!("{name}.fc2.weight"), &[h2, h1]));
                    v.push(p(&format!("{name}.fc2.bias"), &[h2]));
                    v.push(p(&format!("{name}.fc3.weight"), &[out, h2]));
                    v.push(p(&format!("{name}.fc3.bias"), &[out]));
                }
                v
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().iter().map(ParamSpec::len).sum()
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.set("architecture", self.architecture);
        kv.set("input_side", self.input_side);
        kv.set("channels1", self.channels[0]);
        kv.set("channels2", self.channels[1]);
        kv.set("kernel", self.kernel);
        kv.set("feature", self.feature);
        kv.set("hidden1", self.hidden[0]);
        kv.set("hidden2", self.hidden[1]);
        let targets: Vec<&str> = self.targets.iter().map(|t| t.name()).collect();
        kv.set("targets", targets.join(","));
        kv.set("classes", self.classes);
        kv.set("bn_momentum", kv::float(self.bn_momentum));
        kv.set("bn_eps", kv::float(self.bn_eps));
        kv
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self, NnError> {
        let targets = kv
            .get_str("targets")
            .unwrap_or("")
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Target>, _>>()?;
        let d = Self {
            architecture: kv.require::<String>("architecture")?.parse()?,
            input_side: kv.require("input_side")?,
            channels: [kv.require("channels1")?, kv.require("channels2")?],
            kernel: kv.require("kernel")?,
            feature: kv.require("feature")?,
            hidden: [kv.require("hidden1")?, kv.require("hidden2")?],
            targets,
            classes: kv.require("classes")?,
            bn_momentum: kv.require("bn_momentum")?,
            bn_eps: kv.require("bn_eps")?,
        };
        d.validate()?;
        Ok(d)
    }
}

/// Running batchnorm statistics used in inference mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BnState<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    /// Training batches folded into the running statistics so far.
    pub batches: u64,
}

impl<T: Real> BnState<T> {
    fn new(c: usize) -> Self {
        Self {
            mean: vec![T::zero(); c],
            var: vec![T::one(); c],
            batches: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    descriptor: Descriptor,
    params: Vec<Tensor<T>>,
    bn: Vec<BnState<T>>,
}

/// Network outputs for a batch of `n` images.
#[derive(Debug, Clone, PartialEq)]
pub struct Output<T> {
    /// `[n, targets]`, in scaled units.
    pub regression: Vec<T>,
    /// `[n, classes]`.
    pub logits: Vec<T>,
}

struct HeadCache<T> {
    h1: Tensor<T>,
    h2: Tensor<T>,
}

struct DecoderCache<T> {
    x: Tensor<T>,
    a1: Tensor<T>,
    bn1: BnCache<T>,
    arg1: Vec<u32>,
    p1: Tensor<T>,
    a2: Tensor<T>,
    bn2: BnCache<T>,
    arg2: Vec<u32>,
    f: Tensor<T>,
    h: Tensor<T>,
    heads: Vec<HeadCache<T>>,
}

/// Activations from a training-mode forward pass.
pub struct Cache<T>(CacheInner<T>);

enum CacheInner<T> {
    Decoder(Box<DecoderCache<T>>),
    Linear(Tensor<T>),
}

impl<T: Real> Model<T> {
    /// He-uniform (fan-in) weights, zero biases, unit batchnorm scale.
    pub fn build(descriptor: Descriptor, init_seed: u64) -> Result<Self, NnError> {
        descriptor.validate()?;
        let layout = descriptor.layout();
        let params = layout
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                if spec.name.ends_with("gamma") {
                    return vec![T::one(); spec.len()];
                }
                if spec.shape.len() < 2 {
                    return vec![T::zero(); spec.len()];
                }
                let fan_in: usize = spec.shape[1..].iter().product();
                let limit = (6.0 / fan_in as f64).sqrt();
                let mut rng = seed::rng(init_seed, i as u64);
                (0..spec.len())
                    .map(|_| T::lit(limit * (2.0 * rng.random::<f64>() - 1.0)))
                    .collect()
            })
            .collect();
        let params = Self::shaped(&layout, params);
        Ok(Self::from_parts_unchecked(descriptor, params))
    }

    /// A model with every parameter zero (batchnorm scale included).
    pub fn zeros(descriptor: Descriptor) -> Result<Self, NnError> {
        descriptor.validate()?;
        let params = descriptor.layout().iter().map(|s| Tensor::zeros(&s.shape)).collect();
        Ok(Self::from_parts_unchecked(descriptor, params))
    }

    fn shaped(layout: &[ParamSpec], params: Vec<Vec<T>>) -> Vec<Tensor<T>> {
        layout
            .iter()
            .zip(params)
            .map(|(s, p)| Tensor::new(&s.shape, p).expect("layout sizes"))
            .collect()
    }

    fn from_parts_unchecked(descriptor: Descriptor, params: Vec<Tensor<T>>) -> Self {
        let bn = match descriptor.architecture {
            Architecture::Decoder => descriptor.channels.iter().map(|&c| BnState::new(c)).collect(),
            Architecture::Linear => Vec::new(),
        };
        Self {
            descriptor,
            params,
            bn,
        }
    }

    pub fn from_parts(
        descriptor: Descriptor,
        params: Vec<Vec<T>>,
        bn: Vec<BnState<T>>,
    ) -> Result<Self, NnError> {
        descriptor.validate()?;
        let layout = descriptor.layout();
        if layout.len() != params.len()
            || layout.iter().zip(&params).any(|(s, p)| s.len() != p.len())
        {
            return Err(NnError::Config("parameters do not match the descriptor".into()));
        }
        let params = Self::shaped(&layout, params);
        let template = Self::from_parts_unchecked(descriptor, params);
        if template.bn.len() != bn.len()
            || template.bn.iter().zip(&bn).any(|(a, b)| {
                a.mean.len() != b.mean.len() || a.var.len() != b.var.len()
            })
        {
            return Err(NnError::Config("batchnorm state does not match the descriptor".into()));
        }
        Ok(Self { bn, ..template })
    }

    pub fn descriptor(&self) -> &Descriptor {
        &self.descriptor
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn bn_states(&self) -> &[BnState<T>] {
        &self.bn
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        let c = |v: &Vec<T>| v.iter().map(|&x| U::lit(x.f64())).collect::<Vec<U>>();
        Model {
            descriptor: self.descriptor.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
            bn: self
                .bn
                .iter()
                .map(|b| BnState {
                    mean: c(&b.mean),
                    var: c(&b.var),
                    batches: b.batches,
                })
                .collect(),
        }
    }

    fn tensor(&self, i: usize) -> &Tensor<T> {
        &self.params[i]
    }

    fn vals(&self, i: usize) -> &[T] {
        self.params[i].data()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<usize, NnError> {
        let [n, c, h, w] = x.dims4()?;
        let s = self.descriptor.input_side;
        if c != 1 || h != s || w != s {
            return Err(NnError::Shape(format!(
                "input {:?} does not match model input 1×{s}×{s}",
                x.shape()
            )));
        }
        Ok(n)
    }

    /// Images `[n, side*side]` as an `[n, 1, side, side]` tensor.
    pub fn input_tensor(&self, images: &[T]) -> Result<Tensor<T>, NnError> {
        let s = self.descriptor.input_side;
        if images.len() % (s * s) != 0 {
            return Err(NnError::Shape(format!(
                "{} values is not a whole number of {s}×{s} images",
                images.len()
            )));
        }
        Tensor::new(&[images.len() / (s * s), 1, s, s], images.to_vec())
    }

    /// Training-mode forward pass: batchnorm uses batch statistics.
    pub fn forward_train(&self, x: &Tensor<T>) -> Result<(Output<T>, Cache<T>), NnError> {
        self.forward(x, true)
    }

    /// Inference-mode forward pass using running batchnorm statistics.
    pub fn forward_infer(&self, x: &Tensor<T>) -> Result<Output<T>, NnError> {
        if self.bn.iter().any(|b| b.batches == 0) {
            return Err(NnError::Untrained);
        }
        Ok(self.forward(x, false)?.0)
    }

    fn forward(&self, x: &Tensor<T>, train: bool) -> Result<(Output<T>, Cache<T>), NnError> {
        let n = self.check_input(x)?;
        let d = &self.descriptor;
        if d.architecture == Architecture::Linear {
            let flat = x.clone().reshape(&[n, d.input_side * d.input_side])?;
            let y = layers::dense_forward(&flat, self.tensor(0), self.vals(1))?;
            let out = Output {
                regression: y.into_data(),
                logits: Vec::new(),
            };
            return Ok((out, Cache(CacheInner::Linear(flat))));
        }

        let p = |i: usize| self.vals(i);
        let bn_block = |a: &Tensor<T>, gi: usize, state: &BnState<T>| {
            if train {
                layers::batchnorm_train(a, p(gi), p(gi + 1), d.bn_eps)
            } else {
                let y = layers::batchnorm_infer(a, p(gi), p(gi + 1), &state.mean, &state.var, d.bn_eps)?;
                let c = BnCache {
                    mean: Vec::new(),
                    var: Vec::new(),
                    xhat: Tensor::zeros(&[1]),
                    inv_std: Vec::new(),
                };
                Ok((y, c))
            }
        };

        let mut a1 = layers::conv2d_forward(x, self.tensor(0), p(1))?;
        layers::relu(&mut a1);
        let (n1, bn1) = bn_block(&a1, 2, &self.bn[0])?;
        let (p1, arg1) = layers::maxpool_forward(&n1)?;
        drop(n1);
        let mut a2 = layers::conv2d_forward(&p1, self.tensor(4), p(5))?;
        layers::relu(&mut a2);
        let (n2, bn2) = bn_block(&a2, 6, &self.bn[1])?;
        let (p2, arg2) = layers::maxpool_forward(&n2)?;
        drop(n2);
        let f = p2.reshape(&[n, d.flat_len()])?;
        let mut h = layers::dense_forward(&f, self.tensor(8), p(9))?;
        layers::relu(&mut h);

        let heads = d.targets.len() + usize::from(d.classes > 0);
        let mut regression = vec![T::zero(); n * d.targets.len()];
        let mut logits = Vec::new();
        let mut head_caches = Vec::with_capacity(heads);
        for hi in 0..heads {
            let base = EXTRACTOR_PARAMS + hi * HEAD_PARAMS;
            let mut h1 = layers::dense_forward(&h, self.tensor(base), p(base + 1))?;
            layers::relu(&mut h1);
            let mut h2 = layers::dense_forward(&h1, self.tensor(base + 2), p(base + 3))?;
            layers::relu(&mut h2);
            let y = layers::dense_forward(&h2, self.tensor(base + 4), p(base + 5))?;
            if hi < d.targets.len() {
                let r = d.targets.len();
                for (i, &v) in y.data().iter().enumerate() {
                    regression[i * r + hi] = v;
                }
            } else {
                logits = y.into_data();
            }
            head_caches.push(HeadCache { h1, h2 });
        }
        let cache = DecoderCache {
            x: x.clone(),
            a1,
            bn1,
            arg1,
            p1,
            a2,
            bn2,
            arg2,
            f,
            h,
            heads: head_caches,
        };
        Ok((
            Output { regression, logits },
            Cache(CacheInner::Decoder(Box::new(cache))),
        ))
    }

    /// Parameter gradients given loss gradients w.r.t. both outputs. Pass an
    /// empty `dlogits` when the model has no classifier.
    pub fn backward(
        &self,
        cache: &Cache<T>,
        dregression: &[T],
        dlogits: &[T],
    ) -> Result<Vec<Vec<T>>, NnError> {
        let d = &self.descriptor;
        let mut grads: Vec<Vec<T>> = Vec::with_capacity(self.params.len());
        let c = match &cache.0 {
            CacheInner::Linear(flat) => {
                let n = flat.dims2()?[0];
                let dy = Tensor::new(&[n, d.targets.len()], dregression.to_vec())?;
                let g = layers::dense_backward(flat, self.tensor(0), &dy, false)?;
                grads.push(g.weight);
                grads.push(g.bias);
                return Ok(grads);
            }
            CacheInner::Decoder(c) => c,
        };
        let n = c.x.dims4()?[0];
        let r = d.targets.len();
        if dregression.len() != n * r || dlogits.len() != n * d.classes {
            return Err(NnError::Shape("output gradient sizes do not match the batch".into()));
        }

        let mut head_grads = Vec::new();
        let mut dh = Tensor::zeros(&[n, d.feature]);
        for (hi, hc) in c.heads.iter().enumerate() {
            let base = EXTRACTOR_PARAMS + hi * HEAD_PARAMS;
            let dy = if hi < r {
                let col: Vec<T> = (0..n).map(|i| dregression[i * r + hi]).collect();
                Tensor::new(&[n, 1], col)?
            } else {
                Tensor::new(&[n, d.classes], dlogits.to_vec())?
            };
            let g3 = layers::dense_backward(&hc.h2, self.tensor(base + 4), &dy, true)?;
            let mut dh2 = g3.input.expect("requested");
            layers::relu_backward(&hc.h2, &mut dh2);
            let g2 = layers::dense_backward(&hc.h1, self.tensor(base + 2), &dh2, true)?;
            let mut dh1 = g2.input.expect("requested");
            layers::relu_backward(&hc.h1, &mut dh1);
            let g1 = layers::dense_backward(&c.h, self.tensor(base), &dh1, true)?;
            for (a, b) in dh.data_mut().iter_mut().zip(g1.input.expect("requested").data()) {
                *a = *a + *b;
            }
            head_grads.extend([g1.weight, g1.bias, g2.weight, g2.bias, g3.weight, g3.bias]);
        }

        layers::relu_backward(&c.h, &mut dh);
        let gfc = layers::dense_backward(&c.f, self.tensor(8), &dh, true)?;
        let s4 = d.input_side / 4;
        let dp2 = gfc.input.expect("requested").reshape(&[n, d.channels[1], s4, s4])?;
        let dn2 = layers::maxpool_backward(c.a2.shape(), &c.arg2, &dp2)?;
        let gbn2 = layers::batchnorm_backward(&c.bn2, self.vals(6), &dn2)?;
        let mut da2 = gbn2.input;
        layers::relu_backward(&c.a2, &mut da2);
        let gc2 = layers::conv2d_backward(&c.p1, self.tensor(4), &da2, true)?;
        let dn1 = layers::maxpool_backward(c.a1.shape(), &c.arg1, &gc2.input.expect("requested"))?;
        let gbn1 = layers::batchnorm_backward(&c.bn1, self.vals(2), &dn1)?;
        let mut da1 = gbn1.input;
        layers::relu_backward(&c.a1, &mut da1);
        let gc1 = layers::conv2d_backward(&c.x, self.tensor(0), &da1, false)?;

        grads.extend([
            gc1.kernels,
            gc1.bias,
            gbn1.gamma,
            gbn1.beta,
            gc2.kernels,
            gc2.bias,
            gbn2.gamma,
            gbn2.beta,
            gfc.weight,
            gfc.bias,
        ]);
        grads.extend(head_grads);
        Ok(grads)
    }

    /// Fold the batch statistics of a training forward pass into the running
    /// statistics: `running = m·running + (1 − m)·batch`.
    pub fn update_running_stats(&mut self, cache: &Cache<T>) {
        let CacheInner::Decoder(c) = &cache.0 else {
            return;
        };
        let m = T::lit(self.descriptor.bn_momentum);
        let om = T::one() - m;
        for (state, bc) in self.bn.iter_mut().zip([&c.bn1, &c.bn2]) {
            for (r, &b) in state.mean.iter_mut().zip(&bc.mean) {
                *r = m * *r + om * b;
            }
            for (r, &b) in state.var.iter_mut().zip(&bc.var) {
                *r = m * *r + om * b;
            }
            state.batches += 1;
        }
    }
}
