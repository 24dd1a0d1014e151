//! Finite-difference check of the full noise -> loss gradient chain.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::moire::CapturePipeline;
use super::AttackConfig;
use crate::classifier::Model;
use crate::imagecore::{ImageRgb, Plane, MAX_INTENSITY};
use crate::sensor::NoiseTensor;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    /// Number of raw sites to probe.
    pub coordinates: usize,
    /// Central-difference step on the `[0, 255]` scale.
    pub step: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            coordinates: 50,
            // 1e-4 on the classifier's [0, 1] input scale
            step: 1e-4 * MAX_INTENSITY,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbedSite {
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub max_relative_error: f64,
    pub sites: Vec<ProbedSite>,
}

/// Compares the analytic gradient of the attack loss with respect to the raw
/// noise against central differences, at a random point inside the budget
/// ball. Probed sites keep `base + delta` at least two steps away from the
/// clamp limits so no difference straddles a kink of the clamp.
pub fn end_to_end_gradcheck(x: &ImageRgb, model: &Model, cfg: &AttackConfig, gc: &GradcheckConfig) -> Result<GradcheckReport> {
    cfg.validate(model)?;
    let pipeline = CapturePipeline::new(x, &cfg.capture)?;
    let (h, w) = pipeline.base_raw.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(gc.seed);
    let eps = cfg.epsilon;
    let point = Plane::from_fn(h, w, |_, _| if eps > 0.0 { rng.gen_range(-eps..=eps) } else { 0.0 });
    let delta = NoiseTensor::new(point.clone(), eps)?;
    let (loss, _, analytic) = pipeline.loss_and_noise_gradient(model, &delta, &cfg.loss)?;

    let margin = 2.0 * gc.step;
    let mut candidates: Vec<usize> = (0..h * w)
        .filter(|&k| {
            let v = pipeline.base_raw.data()[k] + point.data()[k];
            v >= margin && v <= MAX_INTENSITY - margin
        })
        .collect();
    candidates.shuffle(&mut rng);
    candidates.truncate(gc.coordinates);

    // differences below the rounding noise of the quotient are not resolvable
    let noise_floor = 64.0 * f64::EPSILON * loss.abs().max(1.0) / gc.step;
    let mut sites = Vec::with_capacity(candidates.len());
    let mut worst: f64 = 0.0;
    for k in candidates {
        let mut plus = point.clone();
        plus.data_mut()[k] += gc.step;
        let mut minus = point.clone();
        minus.data_mut()[k] -= gc.step;
        let numeric = (pipeline.loss_at(model, &plus, &cfg.loss)? - pipeline.loss_at(model, &minus, &cfg.loss)?) / (2.0 * gc.step);
        let a = analytic.data()[k];
        let relative_error = (a - numeric).abs() / a.abs().max(numeric.abs()).max(noise_floor);
        worst = worst.max(relative_error);
        sites.push(ProbedSite {
            row: k / w,
            col: k % w,
            analytic: a,
            numeric,
            relative_error,
        });
    }
    Ok(GradcheckReport {
        max_relative_error: worst,
        sites,
    })
}
