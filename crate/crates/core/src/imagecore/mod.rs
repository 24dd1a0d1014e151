//! Dense image buffers and the linear spatial primitives shared by every
//! pipeline stage.
//!
//! All buffers hold `f64` samples. Pixel centers sit at `(i + 0.5, j + 0.5)`.
//! [`RgbField`] and [`Plane`] are unconstrained (they also carry gradients);
//! [`ImageRgb`] and [`GrayImage`] additionally guarantee intensities in
//! `[0, 255]`.

mod conv;
mod resize;
mod warp;

pub use conv::{conv2d, conv2d_adjoint, Kernel, Padding};
pub use resize::{resize_adjoint, resize_bilinear, resize_image, resize_plane, resize_plane_adjoint};
pub use warp::{warp_image, warp_projective, WarpSpec};

use std::ops::Deref;

use crate::{Error, Result};

pub const MAX_INTENSITY: f64 = 255.0;

/// Single-channel row-major field.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!("plane dims must be positive, got {height}x{width}")));
        }
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "plane {height}x{width} needs {} samples, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.width + j] = v;
    }

    pub fn dot(&self, other: &Plane) -> f64 {
        assert_eq!(self.dims(), other.dims(), "plane dims differ");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Three-channel field stored interleaved (row-major, then R, G, B).
#[derive(Debug, Clone, PartialEq)]
pub struct RgbField {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl RgbField {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!("image dims must be positive, got {height}x{width}")));
        }
        if data.len() != height * width * 3 {
            return Err(Error::invalid(format!(
                "rgb field {height}x{width} needs {} samples, got {}",
                height * width * 3,
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width * 3],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for i in 0..height {
            for j in 0..width {
                data.extend_from_slice(&f(i, j));
            }
        }
        Self { height, width, data }
    }

    pub fn from_planes(planes: [&Plane; 3]) -> Result<Self> {
        let dims = planes[0].dims();
        if planes.iter().any(|p| p.dims() != dims) {
            return Err(Error::invalid("channel planes differ in size"));
        }
        let (h, w) = dims;
        let mut data = Vec::with_capacity(h * w * 3);
        for idx in 0..h * w {
            for p in planes {
                data.push(p.data[idx]);
            }
        }
        Ok(Self { height: h, width: w, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[(i * self.width + j) * 3 + c]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, c: usize, v: f64) {
        self.data[(i * self.width + j) * 3 + c] = v;
    }

    pub fn pixel(&self, i: usize, j: usize) -> [f64; 3] {
        let k = (i * self.width + j) * 3;
        [self.data[k], self.data[k + 1], self.data[k + 2]]
    }

    pub fn channel(&self, c: usize) -> Plane {
        Plane {
            height: self.height,
            width: self.width,
            data: self.data.iter().skip(c).step_by(3).copied().collect(),
        }
    }

    pub fn channels(&self) -> [Plane; 3] {
        [self.channel(0), self.channel(1), self.channel(2)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn dot(&self, other: &RgbField) -> f64 {
        assert_eq!(self.dims(), other.dims(), "field dims differ");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &RgbField) -> f64 {
        assert_eq!(self.dims(), other.dims(), "field dims differ");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn check_range(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !(0.0..=MAX_INTENSITY).contains(v)) {
        Some(k) => Err(Error::invalid(format!(
            "intensity {} at sample {k} outside [0, 255]",
            data[k]
        ))),
        None => Ok(()),
    }
}

/// RGB image with intensities in `[0, 255]` and both dims at least 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRgb(RgbField);

impl ImageRgb {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_field(RgbField::new(height, width, data)?)
    }

    pub fn from_field(field: RgbField) -> Result<Self> {
        if field.height < 2 || field.width < 2 {
            return Err(Error::invalid(format!(
                "image must be at least 2x2, got {}x{}",
                field.height, field.width
            )));
        }
        check_range(&field.data)?;
        Ok(Self(field))
    }

    /// Clamps every sample into `[0, 255]`. NaN maps to 0.
    pub fn saturating(mut field: RgbField) -> Result<Self> {
        for v in &mut field.data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, MAX_INTENSITY) };
        }
        Self::from_field(field)
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Result<Self> {
        Self::from_field(RgbField::from_fn(height, width, |_, _| rgb))
    }

    pub fn as_field(&self) -> &RgbField {
        &self.0
    }

    pub fn into_field(self) -> RgbField {
        self.0
    }

    /// Rounds to the nearest 8-bit level, as a file export would.
    pub fn quantized(&self) -> ImageRgb {
        ImageRgb(self.0.map(|v| v.round()))
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.0.data.iter().map(|v| v.round() as u8).collect()
    }

    pub fn from_u8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(height, width, bytes.iter().map(|&b| f64::from(b)).collect())
    }
}

impl Deref for ImageRgb {
    type Target = RgbField;

    fn deref(&self) -> &RgbField {
        &self.0
    }
}

/// Single-channel image with intensities in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage(Plane);

impl GrayImage {
    pub fn from_plane(plane: Plane) -> Result<Self> {
        check_range(&plane.data)?;
        Ok(Self(plane))
    }

    pub fn saturating(mut plane: Plane) -> Self {
        for v in &mut plane.data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, MAX_INTENSITY) };
        }
        Self(plane)
    }

    pub fn as_plane(&self) -> &Plane {
        &self.0
    }

    pub fn into_plane(self) -> Plane {
        self.0
    }

    pub fn to_rgb(&self) -> Result<ImageRgb> {
        ImageRgb::from_field(RgbField::from_planes([&self.0, &self.0, &self.0])?)
    }
}

impl Deref for GrayImage {
    type Target = Plane;

    fn deref(&self) -> &Plane {
        &self.0
    }
}
