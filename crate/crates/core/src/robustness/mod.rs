//! Input-transformation defenses and the harness that scores adversarial
//! images against several models and defenses at once.

mod jpeg;
mod squeeze;

pub use jpeg::{dct8x8, idct8x8, jpeg_roundtrip, quality_scale, quant_table, CHROMA_QUANT, LUMA_QUANT};
pub use squeeze::{bit_depth_squeeze, median_smooth, rotate_dim_baseline};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::classify;
use crate::classifier::{LossSpec, Model, Sample};
use crate::imagecore::ImageRgb;
use crate::lcdsim::sample_gamma;
use crate::sensor::normalize_mean;
use crate::{Error, Result};

/// Dim factor used by the rotate-and-dim baseline when none is given.
pub const DEFAULT_DIM: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub enum DefenseSpec {
    None,
    Jpeg(u8),
    BitDepth(u8),
    MedianSmooth(usize),
    /// Shift to the mean of this image, or of the item's own reference when
    /// `None`.
    MeanNormalize(Option<ImageRgb>),
    Rotate(f64),
    RotateDim(f64, f64),
}

impl DefenseSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DefenseSpec::Jpeg(q) if !(1..=100).contains(&q) => Err(Error::invalid(format!("JPEG quality {q} outside 1..=100"))),
            DefenseSpec::BitDepth(b) if !(1..=8).contains(&b) => Err(Error::invalid(format!("bit depth {b} outside 1..=8"))),
            DefenseSpec::MedianSmooth(k) if k != 2 && k != 3 => Err(Error::invalid(format!("median window {k} is not 2 or 3"))),
            DefenseSpec::Rotate(g) if !g.is_finite() => Err(Error::invalid("rotation angle must be finite")),
            DefenseSpec::RotateDim(g, d) if !g.is_finite() || !(d > 0.0 && d <= 1.0) => {
                Err(Error::invalid(format!("rotate-dim parameters ({g}, {d}) out of range")))
            }
            _ => Ok(()),
        }
    }

    /// Short column name, e.g. `jpeg-20` or `median-2`.
    pub fn label(&self) -> String {
        match self {
            DefenseSpec::None => "none".into(),
            DefenseSpec::Jpeg(q) => format!("jpeg-{q}"),
            DefenseSpec::BitDepth(b) => format!("bits-{b}"),
            DefenseSpec::MedianSmooth(k) => format!("median-{k}"),
            DefenseSpec::MeanNormalize(_) => "mean-normalize".into(),
            DefenseSpec::Rotate(g) => format!("rotate-{g}"),
            DefenseSpec::RotateDim(g, d) => format!("rotate-{g}-dim-{d}"),
        }
    }

    /// Applies the defense. `reference` is only consulted by
    /// `MeanNormalize(None)`, which fails without one.
    pub fn apply(&self, img: &ImageRgb, reference: Option<&ImageRgb>) -> Result<ImageRgb> {
        self.validate()?;
        match self {
            DefenseSpec::None => Ok(img.clone()),
            DefenseSpec::Jpeg(q) => jpeg_roundtrip(img, *q),
            DefenseSpec::BitDepth(b) => bit_depth_squeeze(img, *b),
            DefenseSpec::MedianSmooth(k) => median_smooth(img, *k),
            DefenseSpec::MeanNormalize(fixed) => {
                let r = fixed.as_ref().or(reference).ok_or_else(|| Error::invalid("mean normalization needs a reference image"))?;
                Ok(normalize_mean(img, r))
            }
            DefenseSpec::Rotate(g) => rotate_dim_baseline(img, *g, 1.0),
            DefenseSpec::RotateDim(g, d) => rotate_dim_baseline(img, *g, *d),
        }
    }
}

/// One adversarial image together with what it was supposed to achieve.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem {
    pub image: ImageRgb,
    pub clean_label: usize,
    pub loss: LossSpec,
    /// Brightness reference for mean normalization (normally the clean input).
    pub reference: Option<ImageRgb>,
}

impl EvalItem {
    pub fn new(image: ImageRgb, clean_label: usize, loss: LossSpec) -> Self {
        Self {
            image,
            clean_label,
            loss,
            reference: None,
        }
    }

    pub fn with_reference(mut self, reference: ImageRgb) -> Self {
        self.reference = Some(reference);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub index: usize,
    pub clean_label: usize,
    pub prediction_before: usize,
    pub prediction_after: usize,
    pub success_before: bool,
    pub success_after: bool,
}

/// Results for one (model, defense) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub model: usize,
    pub defense: String,
    pub records: Vec<EvalRecord>,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Model-major: all defenses for model 0, then model 1, ...
    pub cells: Vec<EvalCell>,
}

impl EvalReport {
    pub fn cell(&self, model: usize, defense: &str) -> Option<&EvalCell> {
        self.cells.iter().find(|c| c.model == model && c.defense == defense)
    }

    pub fn success_rate(&self, model: usize, defense: &str) -> Option<f64> {
        self.cell(model, defense).map(|c| c.success_rate)
    }
}

/// Applies every defense to every item and classifies the result with every
/// model. Items are expected to have been crafted against `models[0]`.
pub fn evaluate(items: &[EvalItem], models: &[&Model], defenses: &[DefenseSpec]) -> Result<EvalReport> {
    if items.is_empty() || models.is_empty() || defenses.is_empty() {
        return Err(Error::invalid("evaluation needs at least one item, model and defense"));
    }
    for d in defenses {
        d.validate()?;
    }
    // defended images do not depend on the model, so build them once
    let defended: Vec<Vec<ImageRgb>> = defenses
        .iter()
        .map(|d| items.par_iter().map(|it| d.apply(&it.image, it.reference.as_ref())).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let mut cells = Vec::with_capacity(models.len() * defenses.len());
    for (m, model) in models.iter().enumerate() {
        let before: Vec<usize> = items.par_iter().map(|it| classify(model, &it.image)).collect::<Result<_>>()?;
        for (d, defense) in defenses.iter().enumerate() {
            let records: Vec<EvalRecord> = items
                .par_iter()
                .zip(&defended[d])
                .zip(&before)
                .enumerate()
                .map(|(index, ((it, img), &pred0))| {
                    let pred = classify(model, img)?;
                    Ok(EvalRecord {
                        index,
                        clean_label: it.clean_label,
                        prediction_before: pred0,
                        prediction_after: pred,
                        success_before: it.loss.is_success(pred0),
                        success_after: it.loss.is_success(pred),
                    })
                })
                .collect::<Result<_>>()?;
            let hits = records.iter().filter(|r| r.success_after).count();
            cells.push(EvalCell {
                model: m,
                defense: defense.label(),
                success_rate: hits as f64 / records.len() as f64,
                records,
            });
        }
    }
    Ok(EvalReport { cells })
}

/// Fraction of samples whose prediction flips after rotating (and dimming)
/// the clean image. Sample `k` uses the rotation the capture simulator would
/// draw for seed `seed + k`.
pub fn rotate_dim_misprediction_rate(model: &Model, samples: &[Sample], dim: f64, seed: u64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    let flips = samples
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            let gamma = sample_gamma(seed.wrapping_add(k as u64));
            let img = rotate_dim_baseline(&s.image, gamma, dim)?;
            Ok(usize::from(classify(model, &img)? != s.label))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(flips.iter().sum::<usize>() as f64 / samples.len() as f64)
}

#[cfg(test)]
mod tests;
