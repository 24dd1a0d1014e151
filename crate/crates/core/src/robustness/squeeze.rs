//! Feature-squeezing defenses and the rotate/dim capture baselines.

use crate::imagecore::{warp_projective, ImageRgb, RgbField, WarpSpec};
use crate::{Error, Result};

/// Rounds every value to the nearest of `2^bits` evenly spaced levels.
pub fn bit_depth_squeeze(img: &ImageRgb, bits: u8) -> Result<ImageRgb> {
    if !(1..=8).contains(&bits) {
        return Err(Error::invalid(format!("bit depth {bits} outside 1..=8")));
    }
    let levels = f64::from((1u32 << bits) - 1);
    ImageRgb::saturating(img.map(|v| (v / 255.0 * levels).round() * 255.0 / levels))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Per-channel `window` x `window` median with replicated borders. The 3x3
/// window is centered; the 2x2 window covers the pixel and its right, lower
/// and lower-right neighbors, and its median is the mean of the middle two.
pub fn median_smooth(img: &ImageRgb, window: usize) -> Result<ImageRgb> {
    let back = match window {
        2 => 0,
        3 => 1,
        _ => return Err(Error::invalid(format!("median window {window} is not 2 or 3"))),
    };
    let (h, w) = img.dims();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut buf = Vec::with_capacity(window * window);
    let out = RgbField::from_fn(h, w, |i, j| {
        std::array::from_fn(|c| {
            buf.clear();
            for a in 0..window {
                for b in 0..window {
                    let si = clamp(i as isize + a as isize - back, h);
                    let sj = clamp(j as isize + b as isize - back, w);
                    buf.push(img.get(si, sj, c));
                }
            }
            median(&mut buf)
        })
    });
    ImageRgb::from_field(out)
}

/// Rotation by `gamma` degrees (black fill, no lens distortion) followed by
/// scaling every intensity by `dim`.
pub fn rotate_dim_baseline(img: &ImageRgb, gamma: f64, dim: f64) -> Result<ImageRgb> {
    if !(dim > 0.0 && dim <= 1.0) {
        return Err(Error::invalid(format!("dim factor {dim} outside (0, 1]")));
    }
    if !gamma.is_finite() {
        return Err(Error::invalid("rotation angle must be finite"));
    }
    let rotated = warp_projective(img, &WarpSpec::rotation(gamma))?;
    ImageRgb::saturating(rotated.map(|v| v * dim))
}
