//! JSON report for a single attack run.

use moire_core::attack::{AttackResult, TraceEntry};
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct Units {
    pub eps: &'static str,
    pub gamma: &'static str,
    pub alpha: &'static str,
    pub loss: &'static str,
    pub probability: &'static str,
    pub linf: &'static str,
    pub l2: &'static str,
    pub mad: &'static str,
}

pub const UNITS: Units = Units {
    eps: "L-infinity budget, intensity levels on the [0, 255] scale",
    gamma: "capture rotation, degrees",
    alpha: "monitor scale factor, dimensionless integer",
    loss: "natural-log units; untargeted log p(label), targeted -log p(target)",
    probability: "softmax probability of the loss label, [0, 1]",
    linf: "max absolute difference to the unperturbed reference, [0, 255] scale",
    l2: "Euclidean norm of the difference to the reference, [0, 255] scale",
    mad: "mean absolute difference to the reference, [0, 255] scale",
};

#[derive(Debug, Serialize)]
pub struct Metrics {
    pub linf: f64,
    pub l2: f64,
    pub mad: f64,
}

#[derive(Debug, Serialize)]
pub struct AttackReport {
    pub schema: u32,
    pub units: Units,
    pub method: String,
    pub mode: String,
    pub label: usize,
    pub eps: f64,
    pub iters: usize,
    pub gamma: Option<f64>,
    pub alpha: u32,
    pub seed: u64,
    pub success: bool,
    pub success_pre_denoise: bool,
    pub prediction: usize,
    pub prediction_pre_denoise: usize,
    pub trace: Vec<TraceEntry>,
    pub metrics: Metrics,
}

impl AttackReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(method: &str, mode: &str, label: usize, eps: f64, iters: usize, alpha: u32, seed: u64, r: &AttackResult) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            units: UNITS,
            method: method.to_string(),
            mode: mode.to_string(),
            label,
            eps,
            iters,
            gamma: r.gamma,
            alpha,
            seed,
            success: r.success,
            success_pre_denoise: r.success_pre_denoise,
            prediction: r.prediction,
            prediction_pre_denoise: r.prediction_pre_denoise,
            trace: r.trace.clone(),
            metrics: Metrics {
                linf: r.metrics.linf,
                l2: r.metrics.l2,
                mad: r.metrics.mean_abs,
            },
        }
    }
}
