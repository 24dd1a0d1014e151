//! Sign-gradient attacks: raw-domain sensor noise optimized through the
//! capture simulator, and the pixel-space baselines it is compared against.

mod gradcheck;
mod moire;
mod pixel;

pub use gradcheck::{end_to_end_gradcheck, GradcheckConfig, GradcheckReport};
pub use moire::{capture_without_noise, moire_attack, moire_plus_bim, CapturePipeline};
pub use pixel::{pixel_space_attack, PixelAttack};

use serde::{Deserialize, Serialize};

use crate::classifier::{argmax, softmax, LossSpec, Model};
use crate::imagecore::{resize_bilinear, ImageRgb, RgbField};
use crate::lcdsim::CaptureParams;
use crate::sensor::NoiseTensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub loss: LossSpec,
    /// L-infinity budget on the `[0, 255]` scale.
    pub epsilon: f64,
    pub iterations: usize,
    pub capture: CaptureParams,
    /// MI-FGSM momentum decay.
    pub momentum: f64,
    /// Seeds the PGD random start.
    pub seed: u64,
}

impl AttackConfig {
    pub fn new(loss: LossSpec, epsilon: f64, iterations: usize) -> Self {
        Self {
            loss,
            epsilon,
            iterations,
            capture: CaptureParams::default(),
            momentum: 1.0,
            seed: 0,
        }
    }

    pub fn with_capture(mut self, capture: CaptureParams) -> Self {
        self.capture = capture;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Per-iteration step `epsilon / iterations` (0 when there are none).
    pub fn step(&self) -> f64 {
        if self.iterations == 0 {
            0.0
        } else {
            self.epsilon / self.iterations as f64
        }
    }

    pub fn validate(&self, model: &Model) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon <= 255.0) {
            return Err(Error::invalid(format!("epsilon {} outside [0, 255]", self.epsilon)));
        }
        if !self.momentum.is_finite() || self.momentum < 0.0 {
            return Err(Error::invalid("momentum must be finite and non-negative"));
        }
        self.capture.validate()?;
        self.loss.validate(model.classes())
    }
}

/// State of one iterate, recorded before it is updated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub loss: f64,
    pub top1: usize,
    /// Probability of the loss label (true class or target).
    pub probability: f64,
    /// L-infinity norm of the perturbation at this iterate.
    pub linf: f64,
}

/// Distances between the adversarial image and its unperturbed reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationMetrics {
    pub linf: f64,
    pub l2: f64,
    pub mean_abs: f64,
}

impl PerturbationMetrics {
    pub fn between(a: &RgbField, b: &RgbField) -> Self {
        let diffs: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
        Self {
            linf: diffs.iter().fold(0.0, |m, d| m.max(d.abs())),
            l2: diffs.iter().map(|d| d * d).sum::<f64>().sqrt(),
            mean_abs: diffs.iter().map(|d| d.abs()).sum::<f64>() / diffs.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    /// Headline adversarial image (after the export denoiser for the raw-domain
    /// attack; identical to `adversarial_pre_denoise` for pixel attacks).
    pub adversarial: ImageRgb,
    pub adversarial_pre_denoise: ImageRgb,
    /// The same pipeline run without any perturbation.
    pub reference: ImageRgb,
    /// Raw-domain noise, for attacks that have one.
    pub delta: Option<NoiseTensor>,
    /// Rotation used by the capture, for attacks that simulate one.
    pub gamma: Option<f64>,
    pub trace: Vec<TraceEntry>,
    pub prediction: usize,
    pub prediction_pre_denoise: usize,
    pub success: bool,
    pub success_pre_denoise: bool,
    pub metrics: PerturbationMetrics,
}

/// Resizes to the model input and returns the top-1 class.
pub fn classify(model: &Model, img: &RgbField) -> Result<usize> {
    let n = model.input_size();
    model.predict(&resize_bilinear(img, n, n)?)
}

/// Loss, top-1, label probability and the gradient pulled back onto `img`.
pub(crate) fn loss_on_image(model: &Model, img: &RgbField, loss: &LossSpec) -> Result<(f64, usize, f64, RgbField)> {
    let n = model.input_size();
    let small = resize_bilinear(img, n, n)?;
    let e = model.evaluate(&small, loss)?;
    let p = softmax(&e.logits)[loss.label];
    let grad = crate::imagecore::resize_adjoint(&e.input_gradient, img.height(), img.width())?;
    Ok((e.loss, argmax(&e.logits), p, grad))
}
