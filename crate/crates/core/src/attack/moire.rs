//! Raw-domain sensor-noise attack through the simulated capture.

use super::{classify, AttackConfig, AttackResult, PerturbationMetrics, TraceEntry};
use crate::attack::pixel::{pixel_space_attack, PixelAttack};
use crate::classifier::{argmax, softmax, LossSpec, Model};
use crate::imagecore::{resize_adjoint, resize_bilinear, ImageRgb, Plane, RgbField};
use crate::lcdsim::{display_capture, CaptureParams};
use crate::sensor::{add_noise_clamped, bayer_cfa, demosaic_adjoint, demosaic_bilinear, demosaic_field, denoise_export, NoiseTensor, RawBayer};
use crate::Result;

/// The capture up to the noise injection point, evaluated once. Everything
/// before the noise is independent of it, so the raw reading is a constant
/// base that the noise is added to.
#[derive(Debug, Clone)]
pub struct CapturePipeline {
    pub base_raw: RawBayer,
    pub gamma: f64,
}

impl CapturePipeline {
    pub fn new(x: &ImageRgb, params: &CaptureParams) -> Result<Self> {
        let captured = display_capture(x, params)?;
        Ok(Self {
            base_raw: bayer_cfa(&captured),
            gamma: params.gamma(),
        })
    }

    /// Demosaiced RGB for a given noise, plus the clamp mask.
    pub fn render(&self, delta: &NoiseTensor) -> Result<(RgbField, Vec<bool>)> {
        let clamped = add_noise_clamped(&self.base_raw, delta)?;
        Ok((demosaic_field(&clamped.raw)?, clamped.mask))
    }

    /// Loss at `delta` and its gradient with respect to every raw site
    /// (zero where the clamp saturates).
    pub fn loss_and_noise_gradient(&self, model: &Model, delta: &NoiseTensor, loss: &LossSpec) -> Result<(f64, Vec<f64>, Plane)> {
        let clamped = add_noise_clamped(&self.base_raw, delta)?;
        let rgb = demosaic_field(&clamped.raw)?;
        let n = model.input_size();
        let e = model.evaluate(&resize_bilinear(&rgb, n, n)?, loss)?;
        let g_rgb = resize_adjoint(&e.input_gradient, rgb.height(), rgb.width())?;
        let mut g = demosaic_adjoint(&g_rgb)?;
        clamped.apply_mask(&mut g);
        Ok((e.loss, e.logits, g))
    }

    /// Loss for an unconstrained raw-domain offset (no budget check); used by
    /// finite differences.
    pub(crate) fn loss_at(&self, model: &Model, delta: &Plane, loss: &LossSpec) -> Result<f64> {
        let raw = Plane::new(
            delta.height(),
            delta.width(),
            self.base_raw
                .data()
                .iter()
                .zip(delta.data())
                .map(|(r, d)| (r + d).clamp(0.0, 255.0))
                .collect(),
        )?;
        let rgb = demosaic_field(&raw)?;
        let n = model.input_size();
        Ok(model.evaluate(&resize_bilinear(&rgb, n, n)?, loss)?.loss)
    }
}

/// Capture of `x` with zero sensor noise, through demosaicing but before the
/// export denoiser.
pub fn capture_without_noise(x: &ImageRgb, params: &CaptureParams) -> Result<ImageRgb> {
    let captured = display_capture(x, params)?;
    demosaic_bilinear(&bayer_cfa(&captured))
}

/// Optimizes raw-domain noise `delta` with `|delta|_inf <= epsilon` so that
/// the captured image fools `model`:
///
/// ```text
/// delta <- clip(delta - (eps / K) * sign(grad_delta L), -eps, eps)   K times
/// x*     = denoise(demosaic(clamp(base_raw + delta, 0, 255)))
/// ```
pub fn moire_attack(x: &ImageRgb, model: &Model, cfg: &AttackConfig) -> Result<AttackResult> {
    cfg.validate(model)?;
    let pipeline = CapturePipeline::new(x, &cfg.capture)?;
    let (h, w) = pipeline.base_raw.dims();
    let mut delta = NoiseTensor::zeros(h, w, cfg.epsilon)?;
    let step = cfg.step();
    let mut trace = Vec::with_capacity(cfg.iterations + 1);

    for k in 0..cfg.iterations {
        let (loss, logits, grad) = pipeline.loss_and_noise_gradient(model, &delta, &cfg.loss)?;
        trace.push(TraceEntry {
            iteration: k,
            loss,
            top1: argmax(&logits),
            probability: softmax(&logits)[cfg.loss.label],
            linf: delta.linf(),
        });
        delta.sign_step(&grad, step);
        debug_assert!(delta.linf() <= cfg.epsilon);
    }

    let (final_loss, logits, _) = pipeline.loss_and_noise_gradient(model, &delta, &cfg.loss)?;
    trace.push(TraceEntry {
        iteration: cfg.iterations,
        loss: final_loss,
        top1: argmax(&logits),
        probability: softmax(&logits)[cfg.loss.label],
        linf: delta.linf(),
    });

    let (rgb, _) = pipeline.render(&delta)?;
    let pre = ImageRgb::saturating(rgb)?;
    let adversarial = denoise_export(&pre)?;
    let (clean_rgb, _) = pipeline.render(&NoiseTensor::zeros(h, w, 0.0)?)?;
    let reference = denoise_export(&ImageRgb::saturating(clean_rgb)?)?;

    let prediction = classify(model, &adversarial)?;
    let prediction_pre_denoise = classify(model, &pre)?;
    Ok(AttackResult {
        metrics: PerturbationMetrics::between(&adversarial, &reference),
        success: cfg.loss.is_success(prediction),
        success_pre_denoise: cfg.loss.is_success(prediction_pre_denoise),
        prediction,
        prediction_pre_denoise,
        adversarial,
        adversarial_pre_denoise: pre,
        reference,
        delta: Some(delta),
        gamma: Some(pipeline.gamma),
        trace,
    })
}

/// Noise added after demosaicing instead of at the sensor: capture with zero
/// noise, then run BIM on the captured RGB image.
pub fn moire_plus_bim(x: &ImageRgb, model: &Model, cfg: &AttackConfig) -> Result<AttackResult> {
    cfg.validate(model)?;
    let captured = capture_without_noise(x, &cfg.capture)?;
    let mut result = pixel_space_attack(&captured, model, cfg, PixelAttack::Bim)?;
    result.gamma = Some(cfg.capture.gamma());
    Ok(result)
}
