//! Procedurally generated labeled image sets.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imagecore::{ImageRgb, RgbField};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: ImageRgb,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, classes: usize) -> Result<Self> {
        if let Some(s) = samples.iter().find(|s| s.label >= classes) {
            return Err(Error::invalid(format!("label {} out of range for {classes} classes", s.label)));
        }
        Ok(Self { samples, classes })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Class names of [`synthetic_textures`], in label order.
pub const TEXTURE_CLASSES: [&str; 3] = ["striped", "checker", "plain"];

fn random_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0)]
}

fn luma(c: [f64; 3]) -> f64 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

/// Two colors whose luma differs by at least 70.
fn contrasting_pair(rng: &mut ChaCha8Rng) -> ([f64; 3], [f64; 3]) {
    loop {
        let (a, b) = (random_color(rng), random_color(rng));
        if (luma(a) - luma(b)).abs() >= 70.0 {
            return (a, b);
        }
    }
}

fn blend(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|c| a[c] + (b[c] - a[c]) * t)
}

fn texture(label: usize, size: usize, rng: &mut ChaCha8Rng) -> ImageRgb {
    // near-axis orientation: within 20 degrees of horizontal or vertical
    let jitter = rng.gen_range(-PI / 9.0..PI / 9.0);
    let theta = if rng.gen::<bool>() { jitter } else { PI / 2.0 + jitter };
    let (sin, cos) = theta.sin_cos();
    let phase = rng.gen_range(0.0..2.0 * PI);
    let noise = 5.0;
    let field = match label {
        0 => {
            let (a, b) = contrasting_pair(rng);
            let period = rng.gen_range(4.0..10.0);
            let f = 2.0 * PI / period;
            RgbField::from_fn(size, size, |i, j| {
                let u = j as f64 * cos + i as f64 * sin;
                blend(a, b, 0.5 + 0.5 * (f * u + phase).cos())
            })
        }
        1 => {
            let (a, b) = contrasting_pair(rng);
            let cell = rng.gen_range(3.0..8.0);
            let off = (rng.gen_range(0.0..cell), rng.gen_range(0.0..cell));
            RgbField::from_fn(size, size, |i, j| {
                let (x, y) = (j as f64, i as f64);
                let u = x * cos + y * sin + off.0;
                let v = -x * sin + y * cos + off.1;
                let parity = ((u / cell).floor() + (v / cell).floor()) as i64;
                if parity.rem_euclid(2) == 0 {
                    a
                } else {
                    b
                }
            })
        }
        _ => {
            let (a, b) = (random_color(rng), random_color(rng));
            // a gentle ramp at most a fifth of the way between two colors
            let t = rng.gen_range(0.0..0.2);
            RgbField::from_fn(size, size, |i, j| {
                let u = (j as f64 * cos + i as f64 * sin) / size as f64;
                blend(a, b, t * u.clamp(-1.0, 1.0).abs())
            })
        }
    };
    let noisy = RgbField::new(
        size,
        size,
        field.data().iter().map(|v| v + rng.gen_range(-noise..noise)).collect(),
    )
    .expect("dims preserved");
    ImageRgb::saturating(noisy).expect("size >= 2")
}

/// Balanced 3-class set of striped / checkerboard / near-uniform images with
/// random colors, orientation, scale and phase.
pub fn synthetic_textures(count: usize, size: usize, seed: u64) -> Result<Dataset> {
    if size < 2 {
        return Err(Error::invalid("image size must be at least 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..count)
        .map(|k| {
            let label = k % TEXTURE_CLASSES.len();
            Sample {
                image: texture(label, size, &mut rng),
                label,
            }
        })
        .collect();
    Dataset::new(samples, TEXTURE_CLASSES.len())
}

/// Dark (label 0) versus bright (label 1) noisy gray images; separable by the
/// mean intensity alone.
pub fn separable_two_class(count: usize, size: usize, seed: u64) -> Result<Dataset> {
    if size < 2 {
        return Err(Error::invalid("image size must be at least 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..count)
        .map(|k| {
            let label = k % 2;
            let base = if label == 0 { rng.gen_range(30.0..100.0) } else { rng.gen_range(155.0..225.0) };
            let field = RgbField::from_fn(size, size, |_, _| [base + rng.gen_range(-20.0..20.0); 3]);
            Sample {
                image: ImageRgb::saturating(field).expect("size >= 2"),
                label,
            }
        })
        .collect();
    Dataset::new(samples, 2)
}
