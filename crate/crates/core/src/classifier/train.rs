//! Mini-batch gradient descent (momentum SGD or Adam) on mean cross-entropy.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ClassifierSpec, Dataset, LayerParams, Model, ParamGrads};
use crate::imagecore::{warp_projective, ImageRgb, RgbField, WarpSpec};
use crate::{Error, Result};

/// Random rotate-and-dim augmentation applied to training images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Augment {
    /// Rotation drawn uniformly from `[-max, max]` degrees.
    pub max_rotation_deg: f64,
    /// Intensities are multiplied by a factor drawn from `[min_dim, 1]`.
    pub min_dim: f64,
    /// Probability that a given sample is augmented at all.
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    /// `momentum` is used as the first-moment decay; the second uses 0.999.
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub augment: Option<Augment>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            optimizer: Optimizer::Adam,
            learning_rate: 0.002,
            momentum: 0.9,
            batch_size: 16,
            seed: 0,
            augment: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
}

/// Fraction of `data` whose top-1 prediction matches the label.
pub fn accuracy(model: &Model, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("empty dataset"));
    }
    let hits = data
        .samples
        .par_iter()
        .map(|s| model.predict(&s.image).map(|p| usize::from(p == s.label)))
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / data.len() as f64)
}

fn augment_image(img: &ImageRgb, aug: &Augment, rng: &mut ChaCha8Rng) -> RgbField {
    if rng.gen::<f64>() >= aug.probability {
        return img.as_field().clone();
    }
    let gamma = rng.gen_range(-aug.max_rotation_deg..=aug.max_rotation_deg);
    let dim = rng.gen_range(aug.min_dim..=1.0);
    let rotated = warp_projective(img, &WarpSpec::rotation(gamma)).expect("finite spec");
    rotated.map(|v| (v * dim).clamp(0.0, 255.0))
}

fn flat_mut(p: &mut LayerParams) -> Option<(&mut Vec<f64>, &mut Vec<f64>)> {
    match p {
        LayerParams::Conv { weights, bias } | LayerParams::Dense { weights, bias } => Some((weights, bias)),
        LayerParams::None => None,
    }
}

fn flat(p: &LayerParams) -> Option<(&Vec<f64>, &Vec<f64>)> {
    match p {
        LayerParams::Conv { weights, bias } | LayerParams::Dense { weights, bias } => Some((weights, bias)),
        LayerParams::None => None,
    }
}

struct OptState {
    first: ParamGrads,
    second: ParamGrads,
    steps: i32,
}

impl OptState {
    fn new(params: &[LayerParams]) -> Self {
        Self {
            first: ParamGrads::zeros_like(params),
            second: ParamGrads::zeros_like(params),
            steps: 0,
        }
    }

    fn step(&mut self, params: &mut [LayerParams], grads: &ParamGrads, cfg: &TrainConfig, scale: f64) {
        const BETA2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.steps += 1;
        let c1 = 1.0 - cfg.momentum.powi(self.steps);
        let c2 = 1.0 - BETA2.powi(self.steps);
        let layers = params.iter_mut().zip(&mut self.first.layers).zip(&mut self.second.layers).zip(&grads.layers);
        for (((p, m), v), g) in layers {
            let (Some((pw, pb)), Some((mw, mb)), Some((vw, vb)), Some((gw, gb))) = (flat_mut(p), flat_mut(m), flat_mut(v), flat(g)) else {
                continue;
            };
            let it = pw.iter_mut().chain(pb.iter_mut()).zip(mw.iter_mut().chain(mb.iter_mut())).zip(vw.iter_mut().chain(vb.iter_mut())).zip(gw.iter().chain(gb));
            for (((w, m), v), g) in it {
                let g = g * scale;
                match cfg.optimizer {
                    Optimizer::Sgd => {
                        *m = cfg.momentum * *m - cfg.learning_rate * g;
                        *w += *m;
                    }
                    Optimizer::Adam => {
                        *m = cfg.momentum * *m + (1.0 - cfg.momentum) * g;
                        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                        *w -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + EPS);
                    }
                }
            }
        }
    }
}

/// Trains a fresh model of `spec` (initialized from `spec.seed`) on `train`.
/// Sample order and augmentation draws come from `cfg.seed`, so the result is
/// fully deterministic.
pub fn train_toy(spec: ClassifierSpec, train: &Dataset, validation: Option<&Dataset>, cfg: &TrainConfig) -> Result<(Model, TrainReport)> {
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if cfg.batch_size == 0 || cfg.learning_rate.is_nan() || cfg.learning_rate <= 0.0 || !(0.0..1.0).contains(&cfg.momentum) {
        return Err(Error::invalid("batch size, learning rate or momentum out of range"));
    }
    if train.classes > spec.classes {
        return Err(Error::invalid(format!(
            "dataset has {} classes but the model only {}",
            train.classes, spec.classes
        )));
    }
    let n = spec.input_size;
    if let Some(s) = train.samples.iter().find(|s| s.image.dims() != (n, n)) {
        return Err(Error::invalid(format!(
            "training image is {}x{}, model expects {n}x{n}",
            s.image.height(),
            s.image.width()
        )));
    }

    let mut model = Model::init(spec)?;
    let mut opt = OptState::new(model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let seeds: Vec<u64> = batch.iter().map(|_| rng.gen()).collect();
            let results = batch
                .par_iter()
                .zip(&seeds)
                .map(|(&k, &s)| {
                    let sample = &train.samples[k];
                    match &cfg.augment {
                        Some(aug) => {
                            let mut local = ChaCha8Rng::seed_from_u64(s);
                            let img = augment_image(&sample.image, aug, &mut local);
                            model.training_gradient(&img, sample.label)
                        }
                        None => model.training_gradient(&sample.image, sample.label),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            // reduce in batch order so the sum is reproducible
            let mut total = ParamGrads::zeros_like(model.params());
            for ((loss, pred, g), &k) in results.iter().zip(batch) {
                loss_sum += loss;
                hits += usize::from(*pred == train.samples[k].label);
                total.accumulate(g);
            }
            opt.step(model.params_mut(), &total, cfg, 1.0 / batch.len() as f64);
        }
        history.push(EpochStats {
            epoch,
            mean_loss: loss_sum / train.len() as f64,
            train_accuracy: hits as f64 / train.len() as f64,
        });
    }

    let report = TrainReport {
        epochs: history,
        train_accuracy: accuracy(&model, train)?,
        validation_accuracy: validation.map(|v| accuracy(&model, v)).transpose()?,
    };
    Ok((model, report))
}
