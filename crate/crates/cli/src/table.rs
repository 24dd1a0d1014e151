//! CSV tables: attack success rates across defenses, models or budgets.

use std::fmt::Write as _;

use anyhow::{bail, Result};
use clap::ValueEnum;
use moire_core::attack::{moire_attack, moire_plus_bim, pixel_space_attack, AttackConfig, AttackResult, PixelAttack};
use moire_core::classifier::{LossSpec, Model, Sample};
use moire_core::lcdsim::CaptureParams;
use moire_core::robustness::{evaluate, rotate_dim_misprediction_rate, DefenseSpec, EvalItem, DEFAULT_DIM};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableKind {
    /// Untargeted/targeted success and rotate baselines per budget.
    Success,
    /// Success with and without mean-value normalization per budget.
    Normalize,
    /// Success after JPEG at each quality.
    Jpeg,
    /// Success after bit-depth reduction and median smoothing.
    Squeeze,
    /// Success on each model for images crafted against the first.
    Transfer,
    /// Moire attack versus BIM applied to the δ=0 capture, after JPEG.
    NoisePosition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attack {
    Moire,
    Pixel(PixelAttack),
    MoirePlusBim,
}

impl Attack {
    pub fn name(self) -> &'static str {
        match self {
            Attack::Moire => "moire",
            Attack::Pixel(p) => p.name(),
            Attack::MoirePlusBim => "moire+bim",
        }
    }
}

pub struct TableSettings {
    pub epsilons: Vec<f64>,
    pub iterations: usize,
    pub alpha: u32,
    pub seed: u64,
    pub qualities: Vec<u8>,
}

impl TableSettings {
    pub fn config(&self, loss: LossSpec, eps: f64, k: usize) -> AttackConfig {
        let capture = CaptureParams {
            scale: self.alpha,
            ..CaptureParams::with_seed(self.seed.wrapping_add(k as u64))
        };
        AttackConfig::new(loss, eps, self.iterations).with_capture(capture).with_seed(self.seed.wrapping_add(k as u64))
    }
}

pub struct Table {
    pub header: Vec<String>,
    /// Row label and one success rate per data column.
    pub rows: Vec<(String, Vec<f64>)>,
    pub images: usize,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push_str(",images\n");
        for (label, cells) in &self.rows {
            out.push_str(label);
            for c in cells {
                let _ = write!(out, ",{c:.4}");
            }
            let _ = writeln!(out, ",{}", self.images);
        }
        out
    }
}

pub fn run_attack(attack: Attack, sample: &Sample, model: &Model, cfg: &AttackConfig) -> moire_core::Result<AttackResult> {
    match attack {
        Attack::Moire => moire_attack(&sample.image, model, cfg),
        Attack::Pixel(p) => pixel_space_attack(&sample.image, model, cfg, p),
        Attack::MoirePlusBim => moire_plus_bim(&sample.image, model, cfg),
    }
}

/// Attacks every sample (image `k` uses capture/PGD seed `seed + k`) and
/// packages the headline images for evaluation.
fn craft(attack: Attack, samples: &[Sample], model: &Model, s: &TableSettings, eps: f64, targeted: bool) -> Result<Vec<EvalItem>> {
    let classes = model.classes();
    let items = samples
        .par_iter()
        .enumerate()
        .map(|(k, sample)| {
            let loss = if targeted {
                LossSpec::targeted((sample.label + 1) % classes)
            } else {
                LossSpec::untargeted(sample.label)
            };
            let r = run_attack(attack, sample, model, &s.config(loss, eps, k))?;
            Ok(EvalItem::new(r.adversarial, sample.label, loss).with_reference(sample.image.clone()))
        })
        .collect::<moire_core::Result<Vec<_>>>()?;
    Ok(items)
}

const ATTACKS: [Attack; 4] = [
    Attack::Moire,
    Attack::Pixel(PixelAttack::Bim),
    Attack::Pixel(PixelAttack::Pgd),
    Attack::Pixel(PixelAttack::MiFgsm),
];

fn defense_rows(attacks: &[Attack], samples: &[Sample], models: &[&Model], s: &TableSettings, defenses: &[DefenseSpec]) -> Result<Vec<(String, Vec<f64>)>> {
    let eps = s.epsilons[0];
    attacks
        .iter()
        .map(|&a| {
            let items = craft(a, samples, models[0], s, eps, false)?;
            let report = evaluate(&items, &models[..1], defenses)?;
            Ok((a.name().to_string(), report.cells.iter().map(|c| c.success_rate).collect()))
        })
        .collect()
}

pub fn build(kind: TableKind, samples: &[Sample], models: &[&Model], s: &TableSettings) -> Result<Table> {
    if samples.is_empty() {
        bail!("dataset is empty");
    }
    if models.is_empty() {
        bail!("at least one model is required");
    }
    if s.epsilons.is_empty() {
        bail!("at least one budget is required");
    }
    let source = models[0];
    let jpeg: Vec<DefenseSpec> = std::iter::once(DefenseSpec::None).chain(s.qualities.iter().map(|&q| DefenseSpec::Jpeg(q))).collect();
    let labels = |d: &[DefenseSpec]| std::iter::once("attack".to_string()).chain(d.iter().map(DefenseSpec::label)).collect();
    let (header, rows) = match kind {
        TableKind::Success => {
            let rotate = rotate_dim_misprediction_rate(source, samples, 1.0, s.seed)?;
            let rotate_dim = rotate_dim_misprediction_rate(source, samples, DEFAULT_DIM, s.seed)?;
            let mut rows = Vec::new();
            for &eps in &s.epsilons {
                let rate = |targeted| -> Result<f64> {
                    let items = craft(Attack::Moire, samples, source, s, eps, targeted)?;
                    Ok(evaluate(&items, &[source], &[DefenseSpec::None])?.cells[0].success_rate)
                };
                rows.push((format!("{eps}"), vec![rate(false)?, rate(true)?, rotate, rotate_dim]));
            }
            let header = ["eps", "untargeted", "targeted", "rotate", "rotate_dim"].map(String::from).to_vec();
            (header, rows)
        }
        TableKind::Normalize => {
            let mut rows = Vec::new();
            for &eps in &s.epsilons {
                let items = craft(Attack::Moire, samples, source, s, eps, false)?;
                let report = evaluate(&items, &[source], &[DefenseSpec::None, DefenseSpec::MeanNormalize(None)])?;
                rows.push((format!("{eps}"), report.cells.iter().map(|c| c.success_rate).collect()));
            }
            (["eps", "unnormalized", "normalized"].map(String::from).to_vec(), rows)
        }
        TableKind::Jpeg => (labels(&jpeg), defense_rows(&ATTACKS, samples, &[source], s, &jpeg)?),
        TableKind::Squeeze => {
            let d = [
                DefenseSpec::None,
                DefenseSpec::BitDepth(4),
                DefenseSpec::BitDepth(5),
                DefenseSpec::MedianSmooth(2),
                DefenseSpec::MedianSmooth(3),
            ];
            (labels(&d), defense_rows(&ATTACKS, samples, &[source], s, &d)?)
        }
        TableKind::Transfer => {
            let eps = s.epsilons[0];
            let mut rows = Vec::new();
            for a in ATTACKS {
                let items = craft(a, samples, source, s, eps, false)?;
                let report = evaluate(&items, models, &[DefenseSpec::None])?;
                rows.push((a.name().to_string(), report.cells.iter().map(|c| c.success_rate).collect()));
            }
            let header = std::iter::once("attack".to_string()).chain((0..models.len()).map(|m| format!("model-{m}"))).collect();
            (header, rows)
        }
        TableKind::NoisePosition => (labels(&jpeg), defense_rows(&[Attack::Moire, Attack::MoirePlusBim], samples, &[source], s, &jpeg)?),
    };
    Ok(Table {
        header,
        rows,
        images: samples.len(),
    })
}
