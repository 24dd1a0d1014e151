//! Cosine stripe patterns, their multiplicative overlap, and DFT-based beat
//! detection.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::imagecore::{GrayImage, Plane};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GratingSpec {
    /// Cycles per pixel, in `(0, 0.5]`.
    pub frequency: f64,
    pub orientation_deg: f64,
    /// Radians.
    pub phase: f64,
    /// In `[0, 1]`.
    pub contrast: f64,
}

impl GratingSpec {
    /// Full-contrast, zero-phase stripes varying along x.
    pub fn aligned(frequency: f64) -> Self {
        Self {
            frequency,
            orientation_deg: 0.0,
            phase: 0.0,
            contrast: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frequency > 0.0 && self.frequency <= 0.5) {
            return Err(Error::invalid(format!("grating frequency {} outside (0, 0.5]", self.frequency)));
        }
        if !(0.0..=1.0).contains(&self.contrast) {
            return Err(Error::invalid(format!("contrast {} outside [0, 1]", self.contrast)));
        }
        if !self.orientation_deg.is_finite() || !self.phase.is_finite() {
            return Err(Error::invalid("orientation and phase must be finite"));
        }
        Ok(())
    }
}

/// `127.5 * (1 + c * cos(2 pi f (x cos t + y sin t) + phase))` with x the
/// column and y the row index.
pub fn render_grating(spec: &GratingSpec, height: usize, width: usize) -> Result<GrayImage> {
    spec.validate()?;
    if height == 0 || width == 0 {
        return Err(Error::invalid("grating dims must be positive"));
    }
    let (sin, cos) = spec.orientation_deg.to_radians().sin_cos();
    let plane = Plane::from_fn(height, width, |i, j| {
        let u = j as f64 * cos + i as f64 * sin;
        127.5 * (1.0 + spec.contrast * (2.0 * PI * spec.frequency * u + spec.phase).cos())
    });
    Ok(GrayImage::saturating(plane))
}

/// Transmittance product `a * b / 255`, clamped to `[0, 255]`.
pub fn superimpose(a: &GrayImage, b: &GrayImage) -> Result<GrayImage> {
    if a.dims() != b.dims() {
        return Err(Error::invalid(format!("cannot overlay {:?} and {:?} images", a.dims(), b.dims())));
    }
    let (h, w) = a.dims();
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y / 255.0).collect();
    Ok(GrayImage::saturating(Plane::new(h, w, data)?))
}

/// Mean of every column: the intensity profile across stripes that vary
/// along x.
pub fn column_profile(img: &GrayImage) -> Vec<f64> {
    let (h, w) = img.dims();
    (0..w).map(|j| (0..h).map(|i| img.get(i, j)).sum::<f64>() / h as f64).collect()
}

/// One-sided DFT magnitudes `|X_k| / n` for `k = 0..=n/2`.
pub fn magnitude_spectrum(signal: &[f64]) -> Vec<f64> {
    let n = signal.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[..=n / 2].iter().map(|c| c.norm() / n as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPeak {
    pub bin: usize,
    /// Cycles per pixel, `bin / n`.
    pub frequency: f64,
    pub magnitude: f64,
    /// Frequency spacing `1 / n` between bins.
    pub resolution: f64,
}

/// Largest non-DC bin whose frequency is strictly below `max_frequency`
/// (ties go to the lower bin). `n` is the length of the transformed signal.
pub fn dominant_bin(spectrum: &[f64], n: usize, max_frequency: f64) -> Option<SpectralPeak> {
    let resolution = 1.0 / n as f64;
    spectrum
        .iter()
        .enumerate()
        .skip(1)
        .take_while(|(k, _)| (*k as f64) * resolution < max_frequency)
        .fold(None, |best: Option<(usize, f64)>, (k, &m)| match best {
            Some((_, bm)) if bm >= m => best,
            _ => Some((k, m)),
        })
        .map(|(bin, magnitude)| SpectralPeak {
            bin,
            frequency: bin as f64 * resolution,
            magnitude,
            resolution,
        })
}

/// Overlays two aligned gratings and returns the image with its beat: the
/// strongest component below the lower carrier. The carriers themselves carry
/// twice the beat amplitude, so they are excluded.
pub fn grating_beat(f1: f64, f2: f64, height: usize, width: usize) -> Result<(GrayImage, SpectralPeak)> {
    let a = render_grating(&GratingSpec::aligned(f1), height, width)?;
    let b = render_grating(&GratingSpec::aligned(f2), height, width)?;
    let img = superimpose(&a, &b)?;
    let band = f1.min(f2) - 0.5 / width as f64;
    let peak = dominant_bin(&magnitude_spectrum(&column_profile(&img)), width, band)
        .ok_or_else(|| Error::invalid("carriers too close to DC to resolve a beat"))?;
    Ok((img, peak))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_contrast_is_flat() {
        let spec = GratingSpec {
            contrast: 0.0,
            ..GratingSpec::aligned(0.13)
        };
        let g = render_grating(&spec, 5, 9).unwrap();
        assert!(g.data().iter().all(|&v| v == 127.5));
    }

    #[test]
    fn quarter_frequency_has_period_four() {
        let g = render_grating(&GratingSpec::aligned(0.25), 6, 12).unwrap();
        let expect = [255.0, 127.5, 0.0, 127.5];
        for j in 0..12 {
            for i in 0..6 {
                assert!((g.get(i, j) - expect[j % 4]).abs() < 1e-9, "({i},{j})");
            }
        }
    }

    #[test]
    fn full_turn_of_phase_is_identical() {
        let spec = GratingSpec {
            frequency: 0.17,
            orientation_deg: 33.0,
            phase: 0.4,
            contrast: 0.8,
        };
        let shifted = GratingSpec { phase: 0.4 + 2.0 * PI, ..spec };
        let a = render_grating(&spec, 16, 16).unwrap();
        let b = render_grating(&shifted, 16, 16).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_specs() {
        for f in [0.0, -0.1, 0.51, f64::NAN] {
            assert!(GratingSpec::aligned(f).validate().is_err(), "{f}");
        }
        assert!(GratingSpec { contrast: 1.5, ..GratingSpec::aligned(0.1) }.validate().is_err());
        assert!(GratingSpec::aligned(0.5).validate().is_ok());
    }

    #[test]
    fn white_overlay_is_identity() {
        let a = render_grating(&GratingSpec::aligned(0.3), 4, 10).unwrap();
        let white = GrayImage::saturating(Plane::filled(4, 10, 255.0));
        assert_eq!(superimpose(&a, &white).unwrap(), a);
        let small = GrayImage::saturating(Plane::filled(4, 9, 255.0));
        assert!(superimpose(&a, &small).is_err());
    }

    #[test]
    fn spectrum_of_pure_cosine() {
        let n = 64;
        let s: Vec<f64> = (0..n).map(|x| 3.0 + 2.0 * (2.0 * PI * 5.0 * x as f64 / n as f64).cos()).collect();
        let m = magnitude_spectrum(&s);
        assert_eq!(m.len(), 33);
        assert!((m[0] - 3.0).abs() < 1e-12);
        assert!((m[5] - 1.0).abs() < 1e-12);
        let rest: f64 = m.iter().enumerate().filter(|(k, _)| *k != 0 && *k != 5).map(|(_, v)| v).sum();
        assert!(rest < 1e-10);
    }

    #[test]
    fn squared_grating_has_dc_f_and_2f() {
        // (1 + cos)^2 = 1.5 + 2 cos + 0.5 cos(2.)
        let w = 100;
        let a = render_grating(&GratingSpec::aligned(0.1), 3, w).unwrap();
        let sq = superimpose(&a, &a).unwrap();
        let m = magnitude_spectrum(&column_profile(&sq));
        let k = 63.75;
        assert!((m[0] - 1.5 * k).abs() < 1e-9);
        assert!((m[10] - k).abs() < 1e-9);
        assert!((m[20] - 0.25 * k).abs() < 1e-9);
        let rest: f64 = m.iter().enumerate().filter(|(i, _)| ![0, 10, 20].contains(i)).map(|(_, v)| v).sum();
        assert!(rest < 1e-9);
    }

    #[test]
    fn beat_of_close_gratings() {
        let (img, peak) = grating_beat(0.20, 0.22, 8, 200).unwrap();
        assert_eq!(img.dims(), (8, 200));
        assert!((peak.frequency - 0.02).abs() <= peak.resolution + 1e-12, "{peak:?}");
        // product-to-sum: the difference term has half the carrier amplitude
        assert!((peak.magnitude - 63.75 / 4.0).abs() < 1e-9);
    }

    #[test]
    fn beat_grows_with_frequency_gap() {
        let mut last = 0.0;
        for f2 in [0.21, 0.23, 0.25, 0.28, 0.32] {
            let (_, peak) = grating_beat(0.20, f2, 2, 200).unwrap();
            assert!((peak.frequency - (f2 - 0.20)).abs() <= peak.resolution + 1e-12, "{f2}: {peak:?}");
            assert!(peak.frequency > last);
            last = peak.frequency;
        }
    }
}
