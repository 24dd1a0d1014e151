//! What the camera optically sees when pointed at an LCD: the image resized
//! to the panel, expanded into RGB subpixel stripes, then rotated and lens
//! distorted.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::imagecore::{resize_bilinear, warp_projective, ImageRgb, RgbField, WarpSpec};
use crate::{Error, Result};

/// Largest camera roll, in degrees, drawn by [`sample_gamma`].
pub const MAX_ROTATION_DEG: f64 = 45.0;

/// Non-optimized capture parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaptureParams {
    /// Panel scale factor: the image is shown at `scale * H x scale * W` pixels.
    pub scale: u32,
    /// Fixed camera roll in degrees. `None` draws it from `seed`.
    pub rotation_deg: Option<f64>,
    pub k1: f64,
    pub k2: f64,
    pub seed: u64,
}

impl Default for CaptureParams {
    fn default() -> Self {
        Self {
            scale: 1,
            rotation_deg: None,
            k1: 0.05,
            k2: 0.0,
            seed: 0,
        }
    }
}

impl CaptureParams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale == 0 {
            return Err(Error::invalid("capture scale must be a positive integer"));
        }
        if !self.k1.is_finite() || !self.k2.is_finite() {
            return Err(Error::invalid("radial coefficients must be finite"));
        }
        if let Some(g) = self.rotation_deg {
            if !g.is_finite() {
                return Err(Error::invalid("rotation must be finite"));
            }
        }
        Ok(())
    }

    /// The rotation to use: the fixed one if given, otherwise a seeded draw.
    pub fn gamma(&self) -> f64 {
        self.rotation_deg.unwrap_or_else(|| sample_gamma(self.seed))
    }

    pub fn warp_spec(&self) -> WarpSpec {
        WarpSpec {
            rotation_deg: self.gamma(),
            k1: self.k1,
            k2: self.k2,
            fill: 0.0,
        }
    }
}

/// Uniform draw in `[-45, 45]` degrees, fixed by `seed`.
pub fn sample_gamma(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.gen_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG)
}

/// Expands each pixel into a 3x3 block whose columns carry only the red,
/// green and blue component respectively.
pub fn subpixel_mosaic(src: &RgbField) -> RgbField {
    RgbField::from_fn(src.height() * 3, src.width() * 3, |i, j| {
        let p = src.pixel(i / 3, j / 3);
        let mut out = [0.0; 3];
        out[j % 3] = p[j % 3];
        out
    })
}

/// Unclamped linear core of [`display_capture`].
pub fn display_capture_field(src: &RgbField, params: &CaptureParams) -> Result<RgbField> {
    params.validate()?;
    let s = params.scale as usize;
    let resized = resize_bilinear(src, src.height() * s, src.width() * s)?;
    let mosaic = subpixel_mosaic(&resized);
    warp_projective(&mosaic, &params.warp_spec())
}

/// Resize to the panel, subpixel mosaic, then rotate and distort. Output is
/// `3 * scale * H x 3 * scale * W`.
pub fn display_capture(img: &ImageRgb, params: &CaptureParams) -> Result<ImageRgb> {
    ImageRgb::saturating(display_capture_field(img, params)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_is_deterministic_and_bounded() {
        assert_eq!(sample_gamma(42), sample_gamma(42));
        let draws: Vec<f64> = (0..10_000).map(sample_gamma).collect();
        let lo = draws.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = draws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo >= -45.0 && hi <= 45.0);
        // uniform on [-45, 45]: sd of the mean is 45/sqrt(3)/100 ~ 0.26
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!(mean.abs() < 2.0, "mean {mean}");
    }

    #[test]
    fn white_pixel_block() {
        let src = RgbField::from_fn(1, 1, |_, _| [255.0; 3]);
        let m = subpixel_mosaic(&src);
        for i in 0..3 {
            assert_eq!(m.pixel(i, 0), [255.0, 0.0, 0.0]);
            assert_eq!(m.pixel(i, 1), [0.0, 255.0, 0.0]);
            assert_eq!(m.pixel(i, 2), [0.0, 0.0, 255.0]);
        }
    }

    #[test]
    fn mosaic_darkens_by_a_third() {
        let src = RgbField::from_fn(4, 5, |i, j| [(i * 17 + j) as f64, (j * 31) as f64, 3.0 * i as f64]);
        let m = subpixel_mosaic(&src);
        assert!((m.mean() - src.mean() / 3.0).abs() < 1e-12);
        assert!(subpixel_mosaic(&RgbField::zeros(3, 3)).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_dims_follow_scale() {
        let img = ImageRgb::filled(6, 5, [10.0, 20.0, 30.0]).unwrap();
        for s in 1..=3u32 {
            let p = CaptureParams {
                scale: s,
                ..CaptureParams::default()
            };
            let out = display_capture(&img, &p).unwrap();
            assert_eq!(out.dims(), (18 * s as usize, 15 * s as usize));
        }
    }

    #[test]
    fn flat_capture_without_geometry_is_plain_mosaic() {
        let img = ImageRgb::filled(4, 4, [90.0; 3]).unwrap();
        let p = CaptureParams {
            scale: 1,
            rotation_deg: Some(0.0),
            k1: 0.0,
            k2: 0.0,
            seed: 0,
        };
        let out = display_capture(&img, &p).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let mut want = [0.0; 3];
                want[j % 3] = 90.0;
                let got = out.pixel(i, j);
                assert!((0..3).all(|c| (got[c] - want[c]).abs() < 1e-9));
            }
        }
    }

    #[test]
    fn zero_scale_rejected() {
        let img = ImageRgb::filled(4, 4, [0.0; 3]).unwrap();
        let p = CaptureParams {
            scale: 0,
            ..CaptureParams::default()
        };
        assert!(display_capture(&img, &p).is_err());
    }
}
