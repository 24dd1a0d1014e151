//! Small-stencil cross-correlation with border padding, and its transpose.

use super::Plane;
use crate::{Error, Result};

/// How out-of-range taps are mapped back into the plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Clamp to the nearest edge sample (`aaa|abcd|ddd`).
    Replicate,
    /// Mirror about the edge sample without repeating it (`dcb|abcd|cba`).
    /// Preserves the parity of the index, which keeps CFA phases intact.
    Reflect101,
}

impl Padding {
    #[inline]
    fn index(self, i: isize, n: usize) -> usize {
        let n = n as isize;
        match self {
            Padding::Replicate => i.clamp(0, n - 1) as usize,
            Padding::Reflect101 => {
                if n == 1 {
                    return 0;
                }
                let period = 2 * (n - 1);
                let mut k = i.rem_euclid(period);
                if k >= n {
                    k = period - k;
                }
                k as usize
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    height: usize,
    width: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(height: usize, width: usize, weights: Vec<f64>) -> Result<Self> {
        if height.is_multiple_of(2) || width.is_multiple_of(2) {
            return Err(Error::invalid(format!("kernel dims must be odd, got {height}x{width}")));
        }
        if weights.len() != height * width {
            return Err(Error::invalid(format!(
                "kernel {height}x{width} needs {} weights, got {}",
                height * width,
                weights.len()
            )));
        }
        Ok(Self { height, width, weights })
    }

    pub fn from_rows<const N: usize>(rows: [[f64; N]; N], scale: f64) -> Result<Self> {
        Self::new(N, N, rows.iter().flatten().map(|w| w * scale).collect())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn weight(&self, a: usize, b: usize) -> f64 {
        self.weights[a * self.width + b]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// `out[i][j] = sum_ab k[a][b] * in[pad(i + a - ry)][pad(j + b - rx)]`.
pub fn conv2d(src: &Plane, kernel: &Kernel, padding: Padding) -> Result<Plane> {
    let (h, w) = src.dims();
    let (ry, rx) = ((kernel.height / 2) as isize, (kernel.width / 2) as isize);
    let rows: Vec<Vec<usize>> = (0..h as isize)
        .map(|i| (0..kernel.height as isize).map(|a| padding.index(i + a - ry, h)).collect())
        .collect();
    let cols: Vec<Vec<usize>> = (0..w as isize)
        .map(|j| (0..kernel.width as isize).map(|b| padding.index(j + b - rx, w)).collect())
        .collect();
    Ok(Plane::from_fn(h, w, |i, j| {
        let mut acc = 0.0;
        for (a, &si) in rows[i].iter().enumerate() {
            for (b, &sj) in cols[j].iter().enumerate() {
                acc += kernel.weight(a, b) * src.get(si, sj);
            }
        }
        acc
    }))
}

/// Transpose of [`conv2d`] for the same kernel and padding: scatters each
/// gradient sample back through the padded taps it was gathered from.
pub fn conv2d_adjoint(grad: &Plane, kernel: &Kernel, padding: Padding) -> Result<Plane> {
    let (h, w) = grad.dims();
    let (ry, rx) = ((kernel.height / 2) as isize, (kernel.width / 2) as isize);
    let mut out = Plane::zeros(h, w);
    let data = out.data_mut();
    for i in 0..h {
        for j in 0..w {
            let g = grad.get(i, j);
            if g == 0.0 {
                continue;
            }
            for a in 0..kernel.height {
                let si = padding.index(i as isize + a as isize - ry, h);
                for b in 0..kernel.width {
                    let sj = padding.index(j as isize + b as isize - rx, w);
                    data[si * w + sj] += kernel.weight(a, b) * g;
                }
            }
        }
    }
    Ok(out)
}
