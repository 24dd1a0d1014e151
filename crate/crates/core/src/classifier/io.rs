//! Model files.
//!
//! A model is stored as a JSON document:
//!
//! ```text
//! {
//!   "format": "moire-classifier",
//!   "version": 1,
//!   "spec": { "input_size": 32, "classes": 3, "seed": 7,
//!             "layers": [ {"type": "conv", "out_channels": 8, "kernel": 3, "stride": 1},
//!                         {"type": "relu"}, {"type": "avg_pool"}, {"type": "dense", "out": 3}, ... ] },
//!   "params": [
//!     { "layer": 0, "shape": [8, 3, 3, 3], "weights": ["0x1.2p-3", ...], "bias": [...] },
//!     { "layer": 3, "shape": [3, 1024], ... }
//!   ]
//! }
//! ```
//!
//! Only parameterized layers appear in `params`. Weights are row-major
//! (`[out][in][ky][kx]` for conv, `[out][in]` for dense) and written as
//! hexadecimal floats so a save/load cycle is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::hexfloat;
use super::{param_sizes, ClassifierSpec, LayerParams, LayerSpec, Model};
use crate::{Error, Result};

pub const MODEL_FORMAT: &str = "moire-classifier";
pub const MODEL_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    layer: usize,
    shape: Vec<usize>,
    weights: Vec<String>,
    bias: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u64,
    spec: ClassifierSpec,
    params: Vec<ParamEntry>,
}

#[derive(Deserialize)]
struct Header {
    format: Option<String>,
    version: Option<u64>,
}

pub fn model_to_string(model: &Model) -> String {
    let mut prev = model.spec.input_shape();
    let mut params = Vec::new();
    for (k, (layer, p)) in model.spec.layers.iter().zip(&model.params).enumerate() {
        let shape = match *layer {
            LayerSpec::Conv { out_channels, kernel, .. } => Some(vec![out_channels, prev.channels, kernel, kernel]),
            LayerSpec::Dense { out } => Some(vec![out, prev.len()]),
            _ => None,
        };
        if let Some(shape) = shape {
            params.push(ParamEntry {
                layer: k,
                shape,
                weights: p.weights().iter().map(|&v| hexfloat::format(v)).collect(),
                bias: p.bias().iter().map(|&v| hexfloat::format(v)).collect(),
            });
        }
        prev = model.shapes[k];
    }
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        spec: model.spec.clone(),
        params,
    };
    let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
    s.push('\n');
    s
}

fn decode(values: &[String], field: &str) -> Result<Vec<f64>> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| hexfloat::parse(v).map_err(|m| Error::parse(format!("{field}[{i}]"), m)))
        .collect()
}

pub fn model_from_str(text: &str) -> Result<Model> {
    let header: Header = serde_json::from_str(text).map_err(|e| Error::parse("document", e.to_string()))?;
    match header.format.as_deref() {
        Some(MODEL_FORMAT) => {}
        Some(other) => return Err(Error::parse("format", format!("expected `{MODEL_FORMAT}`, found `{other}`"))),
        None => return Err(Error::parse("format", "missing")),
    }
    match header.version {
        Some(MODEL_VERSION) => {}
        Some(found) => {
            return Err(Error::UnsupportedVersion {
                found,
                expected: MODEL_VERSION,
            })
        }
        None => return Err(Error::parse("version", "missing")),
    }
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::parse("document", e.to_string()))?;
    let shapes = file.spec.shapes().map_err(|e| Error::parse("spec", e.to_string()))?;
    let sizes = param_sizes(&file.spec, &shapes);

    let mut params: Vec<LayerParams> = vec![LayerParams::None; file.spec.layers.len()];
    let mut seen = vec![false; file.spec.layers.len()];
    for (n, entry) in file.params.iter().enumerate() {
        let k = entry.layer;
        let field = format!("params[{n}]");
        let Some(Some((nw, nb))) = sizes.get(k) else {
            return Err(Error::parse(format!("{field}.layer"), format!("layer {k} has no parameters")));
        };
        if std::mem::replace(&mut seen[k], true) {
            return Err(Error::parse(format!("{field}.layer"), format!("layer {k} listed twice")));
        }
        if entry.shape.iter().product::<usize>() != *nw || entry.weights.len() != *nw {
            return Err(Error::parse(format!("{field}.weights"), format!("expected {nw} weights")));
        }
        if entry.bias.len() != *nb {
            return Err(Error::parse(format!("{field}.bias"), format!("expected {nb} biases")));
        }
        let weights = decode(&entry.weights, &format!("{field}.weights"))?;
        let bias = decode(&entry.bias, &format!("{field}.bias"))?;
        params[k] = match file.spec.layers[k] {
            LayerSpec::Conv { .. } => LayerParams::Conv { weights, bias },
            _ => LayerParams::Dense { weights, bias },
        };
    }
    if let Some(k) = sizes.iter().enumerate().position(|(k, s)| s.is_some() && !seen[k]) {
        return Err(Error::parse("params", format!("missing parameters for layer {k}")));
    }
    Model::from_params(file.spec, params).map_err(|e| Error::parse("params", e.to_string()))
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_string(model)).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    model_from_str(&text)
}
