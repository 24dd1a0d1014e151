//! Iterative L-infinity attacks directly on image pixels.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{classify, loss_on_image, AttackConfig, AttackResult, PerturbationMetrics, TraceEntry};
use crate::classifier::Model;
use crate::imagecore::{ImageRgb, RgbField};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PixelAttack {
    /// Iterative sign steps from the clean image.
    Bim,
    /// BIM from a uniform random start inside the budget ball.
    Pgd,
    /// BIM on an L1-normalized gradient momentum.
    MiFgsm,
}

impl PixelAttack {
    pub fn name(&self) -> &'static str {
        match self {
            PixelAttack::Bim => "bim",
            PixelAttack::Pgd => "pgd",
            PixelAttack::MiFgsm => "mi-fgsm",
        }
    }
}

impl FromStr for PixelAttack {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bim" => Ok(PixelAttack::Bim),
            "pgd" => Ok(PixelAttack::Pgd),
            "mi-fgsm" | "mifgsm" => Ok(PixelAttack::MiFgsm),
            other => Err(Error::invalid(format!("unknown pixel attack `{other}`"))),
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Nearest value to `v` in `[0, 255]` with `|result - clean| <= eps` as
/// evaluated in floating point.
fn project(clean: f64, v: f64, eps: f64) -> f64 {
    let mut p = v.clamp(clean - eps, clean + eps).clamp(0.0, 255.0);
    // clean +- eps is rounded, so the difference can land one ulp outside
    while (p - clean).abs() > eps {
        p = if p > clean { p.next_down() } else { p.next_up() };
    }
    p
}

/// Runs `variant` on `x` (any size; the classifier sees it resized to its
/// input). Each step moves by `epsilon / K`, then projects onto the budget
/// ball around `x` and onto `[0, 255]`.
pub fn pixel_space_attack(x: &ImageRgb, model: &Model, cfg: &AttackConfig, variant: PixelAttack) -> Result<AttackResult> {
    cfg.validate(model)?;
    let eps = cfg.epsilon;
    let step = cfg.step();
    let project = |clean: f64, v: f64| project(clean, v, eps);
    let linf = |cur: &RgbField| PerturbationMetrics::between(cur, x).linf;

    let mut cur: RgbField = x.as_field().clone();
    if variant == PixelAttack::Pgd && eps > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for (v, &c) in cur.data_mut().iter_mut().zip(x.data()) {
            *v = project(c, c + rng.gen_range(-eps..=eps));
        }
    }
    let mut momentum = RgbField::zeros(x.height(), x.width());
    let mut trace = Vec::with_capacity(cfg.iterations + 1);

    for k in 0..cfg.iterations {
        let (loss, top1, probability, grad) = loss_on_image(model, &cur, &cfg.loss)?;
        trace.push(TraceEntry {
            iteration: k,
            loss,
            top1,
            probability,
            linf: linf(&cur),
        });
        let direction = match variant {
            PixelAttack::MiFgsm => {
                let l1: f64 = grad.data().iter().map(|g| g.abs()).sum();
                let norm = if l1 > 0.0 { l1 } else { 1.0 };
                for (m, g) in momentum.data_mut().iter_mut().zip(grad.data()) {
                    *m = cfg.momentum * *m + g / norm;
                }
                &momentum
            }
            _ => &grad,
        };
        let dir: Vec<f64> = direction.data().iter().map(|&g| sign(g)).collect();
        for ((v, &c), d) in cur.data_mut().iter_mut().zip(x.data()).zip(dir) {
            *v = project(c, *v - step * d);
        }
    }
    let (loss, top1, probability, _) = loss_on_image(model, &cur, &cfg.loss)?;
    trace.push(TraceEntry {
        iteration: cfg.iterations,
        loss,
        top1,
        probability,
        linf: linf(&cur),
    });

    let adversarial = ImageRgb::from_field(cur)?;
    let prediction = classify(model, &adversarial)?;
    let success = cfg.loss.is_success(prediction);
    Ok(AttackResult {
        metrics: PerturbationMetrics::between(&adversarial, x),
        adversarial_pre_denoise: adversarial.clone(),
        adversarial,
        reference: x.clone(),
        delta: None,
        gamma: None,
        trace,
        prediction,
        prediction_pre_denoise: prediction,
        success,
        success_pre_denoise: success,
    })
}
