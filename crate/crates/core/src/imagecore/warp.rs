//! Inverse-mapped rotation plus radial lens distortion.

use serde::{Deserialize, Serialize};

use super::{ImageRgb, RgbField, MAX_INTENSITY};
use crate::{Error, Result};

/// Geometric transform applied when the camera photographs the screen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpSpec {
    /// Counter-clockwise rotation of the content, degrees.
    pub rotation_deg: f64,
    /// Radial coefficients on `r / half_diagonal`.
    pub k1: f64,
    pub k2: f64,
    /// Intensity read for samples that fall outside the source.
    pub fill: f64,
}

impl WarpSpec {
    pub fn identity() -> Self {
        Self {
            rotation_deg: 0.0,
            k1: 0.0,
            k2: 0.0,
            fill: 0.0,
        }
    }

    pub fn rotation(rotation_deg: f64) -> Self {
        Self {
            rotation_deg,
            ..Self::identity()
        }
    }

    fn validate(&self) -> Result<()> {
        if ![self.rotation_deg, self.k1, self.k2, self.fill].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("warp parameters must be finite"));
        }
        Ok(())
    }
}

/// For each output pixel, rotate its centered coordinate by `-rotation`, scale
/// the radius by `1 + k1 r^2 + k2 r^4` (r normalized by the half diagonal) and
/// bilinearly sample the source there. Taps outside the source read `fill`.
pub fn warp_projective(src: &RgbField, spec: &WarpSpec) -> Result<RgbField> {
    spec.validate()?;
    let (h, w) = src.dims();
    let (cy, cx) = (h as f64 / 2.0, w as f64 / 2.0);
    let half_diag = (cx * cx + cy * cy).sqrt();
    let theta = -spec.rotation_deg.to_radians();
    let (sin, cos) = theta.sin_cos();

    let tap = |i: isize, j: isize, c: usize| -> f64 {
        if i < 0 || j < 0 || i >= h as isize || j >= w as isize {
            spec.fill
        } else {
            src.get(i as usize, j as usize, c)
        }
    };

    let mut out = RgbField::zeros(h, w);
    for i in 0..h {
        for j in 0..w {
            let x = j as f64 + 0.5 - cx;
            let y = i as f64 + 0.5 - cy;
            let xr = x * cos - y * sin;
            let yr = x * sin + y * cos;
            let r2 = (xr * xr + yr * yr) / (half_diag * half_diag);
            let factor = 1.0 + spec.k1 * r2 + spec.k2 * r2 * r2;
            // back to index space of the source
            let u = xr * factor + cx - 0.5;
            let v = yr * factor + cy - 0.5;
            let (u0, v0) = (u.floor(), v.floor());
            let (fu, fv) = (u - u0, v - v0);
            let (u0, v0) = (u0 as isize, v0 as isize);
            for c in 0..3 {
                let top = (1.0 - fu) * tap(v0, u0, c) + fu * tap(v0, u0 + 1, c);
                let bot = (1.0 - fu) * tap(v0 + 1, u0, c) + fu * tap(v0 + 1, u0 + 1, c);
                out.set(i, j, c, (1.0 - fv) * top + fv * bot);
            }
        }
    }
    Ok(out)
}

/// [`warp_projective`] on a range-checked image; `fill` must itself be a valid
/// intensity.
pub fn warp_image(img: &ImageRgb, spec: &WarpSpec) -> Result<ImageRgb> {
    if !(0.0..=MAX_INTENSITY).contains(&spec.fill) {
        return Err(Error::invalid(format!("warp fill {} outside [0, 255]", spec.fill)));
    }
    ImageRgb::saturating(warp_projective(img, spec)?)
}
