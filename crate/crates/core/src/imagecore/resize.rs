//! Separable bilinear resampling with half-pixel-centered coordinates and its
//! exact transpose.

use super::{ImageRgb, Plane, RgbField};
use crate::{Error, Result};

/// Two-tap interpolation weights along one axis.
#[derive(Debug, Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    w_lo: f64,
    w_hi: f64,
}

fn axis_taps(src: usize, dst: usize) -> Vec<Tap> {
    let scale = src as f64 / dst as f64;
    let last = (src - 1) as f64;
    (0..dst)
        .map(|o| {
            let x = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let lo = x.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            let t = x - lo as f64;
            Tap {
                lo,
                hi,
                w_lo: 1.0 - t,
                w_hi: t,
            }
        })
        .collect()
}

fn check_dims(what: &str, h: usize, w: usize) -> Result<()> {
    if h < 2 || w < 2 {
        return Err(Error::invalid(format!("{what} dims must be at least 2x2, got {h}x{w}")));
    }
    Ok(())
}

/// Resamples every channel of `src` to `out_h x out_w`.
///
/// Output sample `o` reads source coordinate `(o + 0.5) * in / out - 0.5`,
/// clamped to the valid range (edge replication).
pub fn resize_bilinear(src: &RgbField, out_h: usize, out_w: usize) -> Result<RgbField> {
    check_dims("resize input", src.height(), src.width())?;
    check_dims("resize output", out_h, out_w)?;
    if src.dims() == (out_h, out_w) {
        return Ok(src.clone());
    }
    let ty = axis_taps(src.height(), out_h);
    let tx = axis_taps(src.width(), out_w);
    let mut out = RgbField::zeros(out_h, out_w);
    for (i, yt) in ty.iter().enumerate() {
        for (j, xt) in tx.iter().enumerate() {
            for c in 0..3 {
                let top = xt.w_lo * src.get(yt.lo, xt.lo, c) + xt.w_hi * src.get(yt.lo, xt.hi, c);
                let bot = xt.w_lo * src.get(yt.hi, xt.lo, c) + xt.w_hi * src.get(yt.hi, xt.hi, c);
                out.set(i, j, c, yt.w_lo * top + yt.w_hi * bot);
            }
        }
    }
    Ok(out)
}

/// Transpose of [`resize_bilinear`]: maps a gradient on the resized image back
/// onto an `in_h x in_w` source.
pub fn resize_adjoint(grad: &RgbField, in_h: usize, in_w: usize) -> Result<RgbField> {
    check_dims("resize gradient", grad.height(), grad.width())?;
    check_dims("resize source", in_h, in_w)?;
    if grad.dims() == (in_h, in_w) {
        return Ok(grad.clone());
    }
    let ty = axis_taps(in_h, grad.height());
    let tx = axis_taps(in_w, grad.width());
    let mut out = RgbField::zeros(in_h, in_w);
    let data = out.data_mut();
    let mut add = |i: usize, j: usize, c: usize, v: f64| data[(i * in_w + j) * 3 + c] += v;
    for (i, yt) in ty.iter().enumerate() {
        for (j, xt) in tx.iter().enumerate() {
            for c in 0..3 {
                let g = grad.get(i, j, c);
                add(yt.lo, xt.lo, c, yt.w_lo * xt.w_lo * g);
                add(yt.lo, xt.hi, c, yt.w_lo * xt.w_hi * g);
                add(yt.hi, xt.lo, c, yt.w_hi * xt.w_lo * g);
                add(yt.hi, xt.hi, c, yt.w_hi * xt.w_hi * g);
            }
        }
    }
    Ok(out)
}

/// [`resize_bilinear`] on a range-checked image. Interpolation is a convex
/// combination, so the result stays in `[0, 255]` up to rounding, which is
/// clamped away.
pub fn resize_image(img: &ImageRgb, out_h: usize, out_w: usize) -> Result<ImageRgb> {
    ImageRgb::saturating(resize_bilinear(img, out_h, out_w)?)
}

/// Single-plane variant of [`resize_bilinear`].
pub fn resize_plane(src: &Plane, out_h: usize, out_w: usize) -> Result<Plane> {
    check_dims("resize input", src.height(), src.width())?;
    check_dims("resize output", out_h, out_w)?;
    if src.dims() == (out_h, out_w) {
        return Ok(src.clone());
    }
    let ty = axis_taps(src.height(), out_h);
    let tx = axis_taps(src.width(), out_w);
    Ok(Plane::from_fn(out_h, out_w, |i, j| {
        let (yt, xt) = (ty[i], tx[j]);
        let top = xt.w_lo * src.get(yt.lo, xt.lo) + xt.w_hi * src.get(yt.lo, xt.hi);
        let bot = xt.w_lo * src.get(yt.hi, xt.lo) + xt.w_hi * src.get(yt.hi, xt.hi);
        yt.w_lo * top + yt.w_hi * bot
    }))
}

/// Transpose of [`resize_plane`].
pub fn resize_plane_adjoint(grad: &Plane, in_h: usize, in_w: usize) -> Result<Plane> {
    check_dims("resize gradient", grad.height(), grad.width())?;
    check_dims("resize source", in_h, in_w)?;
    if grad.dims() == (in_h, in_w) {
        return Ok(grad.clone());
    }
    let ty = axis_taps(in_h, grad.height());
    let tx = axis_taps(in_w, grad.width());
    let mut out = Plane::zeros(in_h, in_w);
    for (i, yt) in ty.iter().enumerate() {
        for (j, xt) in tx.iter().enumerate() {
            let g = grad.get(i, j);
            let d = out.data_mut();
            d[yt.lo * in_w + xt.lo] += yt.w_lo * xt.w_lo * g;
            d[yt.lo * in_w + xt.hi] += yt.w_lo * xt.w_hi * g;
            d[yt.hi * in_w + xt.lo] += yt.w_hi * xt.w_lo * g;
            d[yt.hi * in_w + xt.hi] += yt.w_hi * xt.w_hi * g;
        }
    }
    Ok(out)
}
