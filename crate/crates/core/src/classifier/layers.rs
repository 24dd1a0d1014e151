//! Per-layer forward and backward passes on CHW activations.

use super::{LayerParams, LayerSpec, Shape};

/// CHW activation tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    shape: Shape,
    data: Vec<f64>,
}

impl Activation {
    pub fn new(shape: Shape, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.len(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::new(shape, vec![0.0; shape.len()])
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn idx(&self, c: usize, i: usize, j: usize) -> usize {
        (c * self.shape.height + i) * self.shape.width + j
    }
}

/// Parameter gradients laid out like [`LayerParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub layers: Vec<LayerParams>,
}

impl ParamGrads {
    pub fn zeros_like(params: &[LayerParams]) -> Self {
        let layers = params
            .iter()
            .map(|p| match p {
                LayerParams::Conv { weights, bias } => LayerParams::Conv {
                    weights: vec![0.0; weights.len()],
                    bias: vec![0.0; bias.len()],
                },
                LayerParams::Dense { weights, bias } => LayerParams::Dense {
                    weights: vec![0.0; weights.len()],
                    bias: vec![0.0; bias.len()],
                },
                LayerParams::None => LayerParams::None,
            })
            .collect();
        Self { layers }
    }

    /// `self += other`.
    pub fn accumulate(&mut self, other: &ParamGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            match (a, b) {
                (LayerParams::Conv { weights: wa, bias: ba }, LayerParams::Conv { weights: wb, bias: bb })
                | (LayerParams::Dense { weights: wa, bias: ba }, LayerParams::Dense { weights: wb, bias: bb }) => {
                    wa.iter_mut().zip(wb).for_each(|(x, y)| *x += y);
                    ba.iter_mut().zip(bb).for_each(|(x, y)| *x += y);
                }
                _ => {}
            }
        }
    }
}

pub(crate) fn forward(layer: &LayerSpec, params: &LayerParams, input: &Activation, out_shape: Shape) -> Activation {
    match (layer, params) {
        (&LayerSpec::Conv { kernel, stride, .. }, LayerParams::Conv { weights, bias }) => {
            conv_forward(input, weights, bias, kernel, stride, out_shape)
        }
        (LayerSpec::Dense { .. }, LayerParams::Dense { weights, bias }) => {
            let n = input.data.len();
            let data = bias
                .iter()
                .enumerate()
                .map(|(o, b)| b + weights[o * n..(o + 1) * n].iter().zip(&input.data).map(|(w, x)| w * x).sum::<f64>())
                .collect();
            Activation::new(out_shape, data)
        }
        (LayerSpec::Relu, _) => Activation::new(out_shape, input.data.iter().map(|&v| v.max(0.0)).collect()),
        (LayerSpec::AvgPool, _) => {
            let mut out = Activation::zeros(out_shape);
            for c in 0..out_shape.channels {
                for i in 0..out_shape.height {
                    for j in 0..out_shape.width {
                        let s = input.data[input.idx(c, 2 * i, 2 * j)]
                            + input.data[input.idx(c, 2 * i, 2 * j + 1)]
                            + input.data[input.idx(c, 2 * i + 1, 2 * j)]
                            + input.data[input.idx(c, 2 * i + 1, 2 * j + 1)];
                        let k = out.idx(c, i, j);
                        out.data[k] = 0.25 * s;
                    }
                }
            }
            out
        }
        _ => unreachable!("parameters validated against the architecture"),
    }
}

/// Output columns `j` whose tap `j * stride + b - pad` lands inside `0..width`.
#[inline]
fn valid_cols(out_w: usize, in_w: usize, b: usize, pad: usize, stride: usize) -> (usize, usize) {
    // need j * stride + b >= pad and j * stride + b - pad < in_w
    let lo = if b >= pad { 0 } else { (pad - b).div_ceil(stride) };
    let hi = if in_w + pad > b { ((in_w + pad - b - 1) / stride + 1).min(out_w) } else { 0 };
    (lo, hi.max(lo))
}

fn conv_forward(input: &Activation, weights: &[f64], bias: &[f64], kernel: usize, stride: usize, out_shape: Shape) -> Activation {
    let ins = input.shape;
    let pad = kernel / 2;
    let (oh, ow) = (out_shape.height, out_shape.width);
    let mut out = Activation::zeros(out_shape);
    for (o, &b) in bias.iter().enumerate().take(out_shape.channels) {
        let plane = &mut out.data[o * oh * ow..(o + 1) * oh * ow];
        plane.iter_mut().for_each(|v| *v = b);
        for ci in 0..ins.channels {
            let src = &input.data[ci * ins.height * ins.width..(ci + 1) * ins.height * ins.width];
            let wbase = (o * ins.channels + ci) * kernel * kernel;
            for a in 0..kernel {
                for i in 0..oh {
                    let si = i * stride + a;
                    if si < pad || si - pad >= ins.height {
                        continue;
                    }
                    let srow = &src[(si - pad) * ins.width..(si - pad + 1) * ins.width];
                    let orow = &mut plane[i * ow..(i + 1) * ow];
                    for b in 0..kernel {
                        let w = weights[wbase + a * kernel + b];
                        let (lo, hi) = valid_cols(ow, ins.width, b, pad, stride);
                        if stride == 1 {
                            let off = lo + b - pad;
                            for (dst, s) in orow[lo..hi].iter_mut().zip(&srow[off..off + hi - lo]) {
                                *dst += w * s;
                            }
                        } else {
                            for j in lo..hi {
                                orow[j] += w * srow[j * stride + b - pad];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradient with respect to the layer input; parameter gradients are added
/// into `pgrad` when given.
pub(crate) fn backward(
    layer: &LayerSpec,
    params: &LayerParams,
    input: &Activation,
    grad_out: &Activation,
    pgrad: Option<&mut LayerParams>,
) -> Activation {
    let ins = input.shape;
    let mut gin = Activation::zeros(ins);
    match (layer, params) {
        (&LayerSpec::Conv { kernel, stride, .. }, LayerParams::Conv { weights, .. }) => {
            let pad = kernel / 2;
            let outs = grad_out.shape;
            let (oh, ow) = (outs.height, outs.width);
            let (ih, iw) = (ins.height, ins.width);
            let mut pg = pgrad.and_then(|p| match p {
                LayerParams::Conv { weights, bias } => Some((weights, bias)),
                _ => None,
            });
            for o in 0..outs.channels {
                let gplane = &grad_out.data[o * oh * ow..(o + 1) * oh * ow];
                if let Some((_, gb)) = pg.as_mut() {
                    gb[o] += gplane.iter().sum::<f64>();
                }
                for ci in 0..ins.channels {
                    let src = &input.data[ci * ih * iw..(ci + 1) * ih * iw];
                    let dst = &mut gin.data[ci * ih * iw..(ci + 1) * ih * iw];
                    let wbase = (o * ins.channels + ci) * kernel * kernel;
                    for a in 0..kernel {
                        for i in 0..oh {
                            let si = i * stride + a;
                            if si < pad || si - pad >= ih {
                                continue;
                            }
                            let row = (si - pad) * iw;
                            let grow = &gplane[i * ow..(i + 1) * ow];
                            for b in 0..kernel {
                                let widx = wbase + a * kernel + b;
                                let w = weights[widx];
                                let (lo, hi) = valid_cols(ow, iw, b, pad, stride);
                                let mut dw = 0.0;
                                if stride == 1 {
                                    let off = row + lo + b - pad;
                                    let g = &grow[lo..hi];
                                    for (d, gv) in dst[off..off + hi - lo].iter_mut().zip(g) {
                                        *d += w * gv;
                                    }
                                    if pg.is_some() {
                                        dw = src[off..off + hi - lo].iter().zip(g).map(|(x, gv)| x * gv).sum();
                                    }
                                } else {
                                    for (j, &gv) in grow.iter().enumerate().take(hi).skip(lo) {
                                        let k = row + j * stride + b - pad;
                                        dst[k] += w * gv;
                                        dw += src[k] * gv;
                                    }
                                }
                                if let Some((gw, _)) = pg.as_mut() {
                                    gw[widx] += dw;
                                }
                            }
                        }
                    }
                }
            }
        }
        (LayerSpec::Dense { .. }, LayerParams::Dense { weights, .. }) => {
            let n = input.data.len();
            let mut pg = pgrad.and_then(|p| match p {
                LayerParams::Dense { weights, bias } => Some((weights, bias)),
                _ => None,
            });
            for (o, &g) in grad_out.data.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &weights[o * n..(o + 1) * n];
                gin.data.iter_mut().zip(row).for_each(|(d, w)| *d += w * g);
                if let Some((gw, gb)) = pg.as_mut() {
                    gb[o] += g;
                    gw[o * n..(o + 1) * n].iter_mut().zip(&input.data).for_each(|(d, x)| *d += x * g);
                }
            }
        }
        (LayerSpec::Relu, _) => {
            // subgradient 0 at the kink
            for ((d, &x), &g) in gin.data.iter_mut().zip(&input.data).zip(&grad_out.data) {
                *d = if x > 0.0 { g } else { 0.0 };
            }
        }
        (LayerSpec::AvgPool, _) => {
            let outs = grad_out.shape;
            for c in 0..outs.channels {
                for i in 0..outs.height {
                    for j in 0..outs.width {
                        let g = 0.25 * grad_out.data[grad_out.idx(c, i, j)];
                        for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                            let k = gin.idx(c, 2 * i + di, 2 * j + dj);
                            gin.data[k] += g;
                        }
                    }
                }
            }
        }
        _ => unreachable!("parameters validated against the architecture"),
    }
    gin
}
