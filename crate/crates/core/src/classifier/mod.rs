//! Small convolutional victim classifiers with exact input gradients.
//!
//! A [`Model`] maps an `N x N` RGB image (intensities in `[0, 255]`, scaled
//! to `[0, 1]` internally) to `k` logits. Backpropagation is written out per
//! layer; there is no tape.

mod dataset;
mod hexfloat;
mod io;
mod layers;
mod train;

pub use dataset::{separable_two_class, synthetic_textures, Dataset, Sample, TEXTURE_CLASSES};
pub use io::{load_model, model_from_str, model_to_string, save_model, MODEL_FORMAT, MODEL_VERSION};
pub use layers::{Activation, ParamGrads};
pub use train::{accuracy, train_toy, Augment, EpochStats, Optimizer, TrainConfig, TrainReport};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::imagecore::{RgbField, MAX_INTENSITY};
use crate::{Error, Result};

/// One layer of a [`ClassifierSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Square cross-correlation with zero padding `kernel / 2`.
    Conv { out_channels: usize, kernel: usize, stride: usize },
    Relu,
    /// 2x2 average pooling, stride 2.
    AvgPool,
    /// Fully connected layer over the flattened (C, H, W) input.
    Dense { out: usize },
}

/// Activation shape as (channels, height, width).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub input_size: usize,
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
    pub seed: u64,
}

impl ClassifierSpec {
    /// Two 3x3 conv blocks (8 and 16 channels) with average pooling and one
    /// dense layer.
    pub fn default_victim(input_size: usize, classes: usize, seed: u64) -> Self {
        Self {
            input_size,
            classes,
            layers: vec![
                LayerSpec::Conv { out_channels: 8, kernel: 3, stride: 1 },
                LayerSpec::Relu,
                LayerSpec::AvgPool,
                LayerSpec::Conv { out_channels: 16, kernel: 3, stride: 1 },
                LayerSpec::Relu,
                LayerSpec::AvgPool,
                LayerSpec::Dense { out: classes },
            ],
            seed,
        }
    }

    /// Architecture family used for transfer experiments; `variant` picks
    /// the depth/width.
    pub fn victim_variant(variant: usize, input_size: usize, classes: usize, seed: u64) -> Self {
        let layers = match variant % 3 {
            0 => return Self::default_victim(input_size, classes, seed),
            1 => vec![
                LayerSpec::Conv { out_channels: 12, kernel: 5, stride: 1 },
                LayerSpec::Relu,
                LayerSpec::AvgPool,
                LayerSpec::AvgPool,
                LayerSpec::Dense { out: 32 },
                LayerSpec::Relu,
                LayerSpec::Dense { out: classes },
            ],
            _ => vec![
                LayerSpec::Conv { out_channels: 6, kernel: 3, stride: 1 },
                LayerSpec::Relu,
                LayerSpec::Conv { out_channels: 12, kernel: 3, stride: 2 },
                LayerSpec::Relu,
                LayerSpec::Conv { out_channels: 16, kernel: 3, stride: 1 },
                LayerSpec::Relu,
                LayerSpec::AvgPool,
                LayerSpec::Dense { out: classes },
            ],
        };
        Self {
            input_size,
            classes,
            layers,
            seed,
        }
    }

    pub fn input_shape(&self) -> Shape {
        Shape {
            channels: 3,
            height: self.input_size,
            width: self.input_size,
        }
    }

    /// Output shape of every layer, after checking they chain.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        if self.input_size < 2 {
            return Err(Error::invalid("input size must be at least 2"));
        }
        if self.classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        let mut cur = self.input_shape();
        let mut out = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            cur = match *layer {
                LayerSpec::Conv { out_channels, kernel, stride } => {
                    if kernel % 2 == 0 || stride == 0 || out_channels == 0 {
                        return Err(Error::invalid(format!("layer {k}: bad conv parameters")));
                    }
                    let pad = kernel / 2;
                    Shape {
                        channels: out_channels,
                        height: (cur.height + 2 * pad - kernel) / stride + 1,
                        width: (cur.width + 2 * pad - kernel) / stride + 1,
                    }
                }
                LayerSpec::Relu => cur,
                LayerSpec::AvgPool => {
                    if !cur.height.is_multiple_of(2) || !cur.width.is_multiple_of(2) {
                        return Err(Error::invalid(format!(
                            "layer {k}: average pooling needs even dims, got {}x{}",
                            cur.height, cur.width
                        )));
                    }
                    Shape {
                        channels: cur.channels,
                        height: cur.height / 2,
                        width: cur.width / 2,
                    }
                }
                LayerSpec::Dense { out } => {
                    if out == 0 {
                        return Err(Error::invalid(format!("layer {k}: dense width must be positive")));
                    }
                    Shape {
                        channels: out,
                        height: 1,
                        width: 1,
                    }
                }
            };
            out.push(cur);
        }
        match (self.layers.last(), out.last()) {
            (Some(LayerSpec::Dense { .. }), Some(s)) if s.channels == self.classes => Ok(out),
            _ => Err(Error::invalid(format!(
                "final layer must be dense with width {}",
                self.classes
            ))),
        }
    }
}

/// Weights of one parameterized layer, row-major.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    /// `weights[o][i][a][b]`, `bias[o]`.
    Conv { weights: Vec<f64>, bias: Vec<f64> },
    /// `weights[o][i]`, `bias[o]`.
    Dense { weights: Vec<f64>, bias: Vec<f64> },
    None,
}

impl LayerParams {
    pub fn weights(&self) -> &[f64] {
        match self {
            LayerParams::Conv { weights, .. } | LayerParams::Dense { weights, .. } => weights,
            LayerParams::None => &[],
        }
    }

    pub fn bias(&self) -> &[f64] {
        match self {
            LayerParams::Conv { bias, .. } | LayerParams::Dense { bias, .. } => bias,
            LayerParams::None => &[],
        }
    }
}

/// Expected `(weights, bias)` lengths of every layer.
pub(crate) fn param_sizes(spec: &ClassifierSpec, shapes: &[Shape]) -> Vec<Option<(usize, usize)>> {
    let mut prev = spec.input_shape();
    spec.layers
        .iter()
        .zip(shapes)
        .map(|(layer, &shape)| {
            let sizes = match *layer {
                LayerSpec::Conv { out_channels, kernel, .. } => {
                    Some((out_channels * prev.channels * kernel * kernel, out_channels))
                }
                LayerSpec::Dense { out } => Some((out * prev.len(), out)),
                _ => None,
            };
            prev = shape;
            sizes
        })
        .collect()
}

/// A classifier: its architecture plus weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ClassifierSpec,
    shapes: Vec<Shape>,
    params: Vec<LayerParams>,
}

impl Model {
    /// He-uniform weights drawn from `spec.seed`, zero biases.
    pub fn init(spec: ClassifierSpec) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut prev = spec.input_shape();
        let mut params = Vec::with_capacity(spec.layers.len());
        for (layer, &shape) in spec.layers.iter().zip(&shapes) {
            let p = match *layer {
                LayerSpec::Conv { out_channels, kernel, .. } => {
                    let fan_in = prev.channels * kernel * kernel;
                    let bound = (6.0 / fan_in as f64).sqrt();
                    LayerParams::Conv {
                        weights: (0..out_channels * fan_in).map(|_| rng.gen_range(-bound..bound)).collect(),
                        bias: vec![0.0; out_channels],
                    }
                }
                LayerSpec::Dense { out } => {
                    let fan_in = prev.len();
                    let bound = (6.0 / fan_in as f64).sqrt();
                    LayerParams::Dense {
                        weights: (0..out * fan_in).map(|_| rng.gen_range(-bound..bound)).collect(),
                        bias: vec![0.0; out],
                    }
                }
                _ => LayerParams::None,
            };
            params.push(p);
            prev = shape;
        }
        Ok(Self { spec, shapes, params })
    }

    /// Builds a model from explicit parameters, checking every length.
    pub fn from_params(spec: ClassifierSpec, params: Vec<LayerParams>) -> Result<Self> {
        let shapes = spec.shapes()?;
        if params.len() != spec.layers.len() {
            return Err(Error::invalid(format!(
                "expected {} parameter entries, got {}",
                spec.layers.len(),
                params.len()
            )));
        }
        for (k, (want, got)) in param_sizes(&spec, &shapes).iter().zip(&params).enumerate() {
            let ok = match (want, got) {
                (None, LayerParams::None) => true,
                (Some((nw, nb)), LayerParams::Conv { weights, bias }) => {
                    matches!(spec.layers[k], LayerSpec::Conv { .. }) && weights.len() == *nw && bias.len() == *nb
                }
                (Some((nw, nb)), LayerParams::Dense { weights, bias }) => {
                    matches!(spec.layers[k], LayerSpec::Dense { .. }) && weights.len() == *nw && bias.len() == *nb
                }
                _ => false,
            };
            if !ok {
                return Err(Error::invalid(format!("layer {k}: parameters do not match the layer shape")));
            }
            if got.weights().iter().chain(got.bias()).any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("layer {k}: non-finite parameter")));
            }
        }
        Ok(Self { spec, shapes, params })
    }

    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    pub fn params(&self) -> &[LayerParams] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [LayerParams] {
        &mut self.params
    }

    pub fn input_size(&self) -> usize {
        self.spec.input_size
    }

    pub fn classes(&self) -> usize {
        self.spec.classes
    }

    /// Same architecture with every weight and bias set to zero.
    pub fn zeroed(&self) -> Self {
        let mut m = self.clone();
        for p in &mut m.params {
            match p {
                LayerParams::Conv { weights, bias } | LayerParams::Dense { weights, bias } => {
                    weights.iter_mut().for_each(|w| *w = 0.0);
                    bias.iter_mut().for_each(|b| *b = 0.0);
                }
                LayerParams::None => {}
            }
        }
        m
    }

    fn to_input(&self, img: &RgbField) -> Result<Activation> {
        let n = self.spec.input_size;
        if img.dims() != (n, n) {
            return Err(Error::invalid(format!(
                "classifier expects {n}x{n} input, got {}x{}",
                img.height(),
                img.width()
            )));
        }
        let mut data = vec![0.0; 3 * n * n];
        for i in 0..n {
            for j in 0..n {
                for c in 0..3 {
                    data[(c * n + i) * n + j] = img.get(i, j, c) / MAX_INTENSITY;
                }
            }
        }
        Ok(Activation::new(self.spec.input_shape(), data))
    }

    /// Logits for one image.
    pub fn forward(&self, img: &RgbField) -> Result<Vec<f64>> {
        let mut act = self.to_input(img)?;
        for (k, layer) in self.spec.layers.iter().enumerate() {
            act = layers::forward(layer, &self.params[k], &act, self.shapes[k]);
        }
        Ok(act.into_data())
    }

    pub fn probabilities(&self, img: &RgbField) -> Result<Vec<f64>> {
        Ok(softmax(&self.forward(img)?))
    }

    /// Top-1 class. Ties go to the lowest index.
    pub fn predict(&self, img: &RgbField) -> Result<usize> {
        Ok(argmax(&self.forward(img)?))
    }

    /// Runs the network keeping every intermediate activation.
    fn forward_trace(&self, img: &RgbField) -> Result<Vec<Activation>> {
        let mut acts = vec![self.to_input(img)?];
        for (k, layer) in self.spec.layers.iter().enumerate() {
            let next = layers::forward(layer, &self.params[k], &acts[k], self.shapes[k]);
            acts.push(next);
        }
        Ok(acts)
    }

    /// Backpropagates `grad_logits` through the trace. Returns the gradient
    /// with respect to the scaled `[0, 1]` input and, if asked, the parameter
    /// gradients.
    fn backward(&self, acts: &[Activation], grad_logits: Vec<f64>, with_params: bool) -> (Activation, Option<ParamGrads>) {
        let last = *self.shapes.last().expect("validated spec has layers");
        let mut grad = Activation::new(last, grad_logits);
        let mut pgrads = with_params.then(|| ParamGrads::zeros_like(&self.params));
        for k in (0..self.spec.layers.len()).rev() {
            let slot = pgrads.as_mut().map(|g| &mut g.layers[k]);
            grad = layers::backward(&self.spec.layers[k], &self.params[k], &acts[k], &grad, slot);
        }
        (grad, pgrads)
    }

    /// Loss of `img` under `loss` and its exact derivative with respect to
    /// every input intensity (on the `[0, 255]` scale).
    pub fn loss_and_input_gradient(&self, img: &RgbField, loss: &LossSpec) -> Result<(f64, RgbField)> {
        let e = self.evaluate(img, loss)?;
        Ok((e.loss, e.input_gradient))
    }

    /// Logits, loss and input gradient from a single forward/backward pass.
    pub fn evaluate(&self, img: &RgbField, loss: &LossSpec) -> Result<Evaluation> {
        loss.validate(self.spec.classes)?;
        let acts = self.forward_trace(img)?;
        let logits = acts.last().expect("trace is non-empty").data().to_vec();
        let (value, grad_logits) = loss.evaluate(&logits);
        let (g, _) = self.backward(&acts, grad_logits, false);
        let n = self.spec.input_size;
        let gd = g.data();
        let input_gradient = RgbField::from_fn(n, n, |i, j| {
            let at = |c: usize| gd[(c * n + i) * n + j] / MAX_INTENSITY;
            [at(0), at(1), at(2)]
        });
        Ok(Evaluation {
            loss: value,
            logits,
            input_gradient,
        })
    }

    /// Cross-entropy `-log p_label` and its parameter gradients.
    pub fn training_gradient(&self, img: &RgbField, label: usize) -> Result<(f64, usize, ParamGrads)> {
        let spec = LossSpec::targeted(label);
        spec.validate(self.spec.classes)?;
        let acts = self.forward_trace(img)?;
        let logits = acts.last().expect("trace is non-empty").data();
        let pred = argmax(logits);
        let (value, grad_logits) = spec.evaluate(logits);
        let (_, pg) = self.backward(&acts, grad_logits, true);
        Ok((value, pred, pg.expect("requested")))
    }
}

/// Result of [`Model::evaluate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub logits: Vec<f64>,
    /// d loss / d intensity, same layout as the input image.
    pub input_gradient: RgbField,
}

/// Whether the attacker wants any wrong label or one specific label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    Untargeted,
    Targeted,
}

/// Adversarial loss to be minimized.
///
/// * untargeted, label = true class: `log p_label`
/// * targeted, label = adversarial class: `-log p_label`
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossSpec {
    pub mode: AttackMode,
    pub label: usize,
}

impl LossSpec {
    pub fn untargeted(true_label: usize) -> Self {
        Self {
            mode: AttackMode::Untargeted,
            label: true_label,
        }
    }

    pub fn targeted(adv_label: usize) -> Self {
        Self {
            mode: AttackMode::Targeted,
            label: adv_label,
        }
    }

    pub fn validate(&self, classes: usize) -> Result<()> {
        if self.label >= classes {
            return Err(Error::invalid(format!("label {} out of range for {classes} classes", self.label)));
        }
        Ok(())
    }

    /// Loss value and its gradient with respect to the logits.
    pub fn evaluate(&self, logits: &[f64]) -> (f64, Vec<f64>) {
        let lse = log_sum_exp(logits);
        let log_p = logits[self.label] - lse;
        let mut grad: Vec<f64> = logits.iter().map(|z| (z - lse).exp()).collect();
        grad[self.label] -= 1.0;
        match self.mode {
            // d(-log p_y)/dz = p - e_y
            AttackMode::Targeted => (-log_p, grad),
            AttackMode::Untargeted => (log_p, grad.into_iter().map(|g| -g).collect()),
        }
    }

    /// Whether `prediction` counts as a successful attack.
    pub fn is_success(&self, prediction: usize) -> bool {
        match self.mode {
            AttackMode::Untargeted => prediction != self.label,
            AttackMode::Targeted => prediction == self.label,
        }
    }
}

pub fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(z);
    z.iter().map(|v| (v - lse).exp()).collect()
}

pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = k;
        }
    }
    best
}
