//! Camera-side processing: RGGB Bayer readout, the raw-domain noise injection
//! point, bilinear demosaicing (with its transpose), export denoising and
//! mean-value normalization.

use std::ops::Deref;
use std::sync::OnceLock;

use crate::imagecore::{conv2d, conv2d_adjoint, ImageRgb, Kernel, Padding, Plane, RgbField, MAX_INTENSITY};
use crate::{Error, Result};

/// Channel index (0 = R, 1 = G, 2 = B) sampled at raw site `(i, j)` of an
/// RGGB mosaic with red at the origin.
#[inline]
pub fn cfa_channel(i: usize, j: usize) -> usize {
    match (i % 2, j % 2) {
        (0, 0) => 0,
        (1, 1) => 2,
        _ => 1,
    }
}

/// Single-plane RGGB raw reading with even dims and values in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawBayer(Plane);

impl RawBayer {
    pub fn from_plane(plane: Plane) -> Result<Self> {
        let (h, w) = plane.dims();
        if h % 2 != 0 || w % 2 != 0 || h < 2 || w < 2 {
            return Err(Error::invalid(format!("raw dims must be even and at least 2, got {h}x{w}")));
        }
        if let Some(v) = plane.data().iter().find(|v| !(0.0..=MAX_INTENSITY).contains(*v)) {
            return Err(Error::invalid(format!("raw value {v} outside [0, 255]")));
        }
        Ok(Self(plane))
    }

    pub fn as_plane(&self) -> &Plane {
        &self.0
    }

    pub fn into_plane(self) -> Plane {
        self.0
    }
}

impl Deref for RawBayer {
    type Target = Plane;

    fn deref(&self) -> &Plane {
        &self.0
    }
}

/// Raw-domain perturbation with a hard L-infinity budget.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTensor {
    plane: Plane,
    budget: f64,
}

impl NoiseTensor {
    pub fn zeros(height: usize, width: usize, budget: f64) -> Result<Self> {
        Self::new(Plane::zeros(height, width), budget)
    }

    pub fn new(plane: Plane, budget: f64) -> Result<Self> {
        if !(budget >= 0.0 && budget.is_finite()) {
            return Err(Error::invalid(format!("noise budget must be finite and >= 0, got {budget}")));
        }
        if let Some(v) = plane.data().iter().find(|v| v.is_nan() || v.abs() > budget) {
            return Err(Error::invalid(format!("noise value {v} exceeds budget {budget}")));
        }
        Ok(Self { plane, budget })
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn as_plane(&self) -> &Plane {
        &self.plane
    }

    pub fn linf(&self) -> f64 {
        self.plane.data().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `delta <- clip(delta - step * sign(grad), -budget, budget)`; zero
    /// gradient entries leave the sample untouched.
    pub fn sign_step(&mut self, grad: &Plane, step: f64) {
        assert_eq!(grad.dims(), self.plane.dims(), "gradient dims differ from noise");
        let eps = self.budget;
        for (d, g) in self.plane.data_mut().iter_mut().zip(grad.data()) {
            let s = if *g > 0.0 {
                1.0
            } else if *g < 0.0 {
                -1.0
            } else {
                0.0
            };
            *d = (*d - step * s).clamp(-eps, eps);
        }
    }
}

impl Deref for NoiseTensor {
    type Target = Plane;

    fn deref(&self) -> &Plane {
        &self.plane
    }
}

/// Reads channel `cfa_channel(i, j)` at every site. Odd trailing rows or
/// columns are cropped so the mosaic tiles exactly.
pub fn bayer_cfa(img: &ImageRgb) -> RawBayer {
    let h = img.height() & !1;
    let w = img.width() & !1;
    RawBayer(Plane::from_fn(h, w, |i, j| img.get(i, j, cfa_channel(i, j))))
}

/// Noisy raw reading plus the clamp pass-through mask.
#[derive(Debug, Clone)]
pub struct ClampedRaw {
    pub raw: RawBayer,
    /// `true` where `raw + delta` was already inside `[0, 255]`; the clamp's
    /// derivative is 1 there and 0 elsewhere.
    pub mask: Vec<bool>,
}

impl ClampedRaw {
    /// Zeroes gradient entries at saturated sites.
    pub fn apply_mask(&self, grad: &mut Plane) {
        for (g, &m) in grad.data_mut().iter_mut().zip(&self.mask) {
            if !m {
                *g = 0.0;
            }
        }
    }
}

/// Per-site `clamp(raw + delta, 0, 255)`.
pub fn add_noise_clamped(raw: &RawBayer, delta: &NoiseTensor) -> Result<ClampedRaw> {
    if raw.dims() != delta.dims() {
        return Err(Error::invalid(format!(
            "noise dims {:?} differ from raw dims {:?}",
            delta.dims(),
            raw.dims()
        )));
    }
    if delta.linf() > delta.budget() {
        return Err(Error::invalid("noise exceeds its budget"));
    }
    let (h, w) = raw.dims();
    let mut mask = Vec::with_capacity(h * w);
    let data = raw
        .data()
        .iter()
        .zip(delta.data())
        .map(|(r, d)| {
            let v = r + d;
            mask.push((0.0..=MAX_INTENSITY).contains(&v));
            v.clamp(0.0, MAX_INTENSITY)
        })
        .collect();
    Ok(ClampedRaw {
        raw: RawBayer(Plane::new(h, w, data)?),
        mask,
    })
}

fn green_kernel() -> &'static Kernel {
    static K: OnceLock<Kernel> = OnceLock::new();
    K.get_or_init(|| Kernel::from_rows([[0.0, 1.0, 0.0], [1.0, 4.0, 1.0], [0.0, 1.0, 0.0]], 0.25).unwrap())
}

fn red_blue_kernel() -> &'static Kernel {
    static K: OnceLock<Kernel> = OnceLock::new();
    K.get_or_init(|| Kernel::from_rows([[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]], 0.25).unwrap())
}

fn channel_kernel(c: usize) -> &'static Kernel {
    if c == 1 {
        green_kernel()
    } else {
        red_blue_kernel()
    }
}

// Reflect-101 keeps the RGGB phase of mirrored taps, so border sites see the
// same neighbor pattern as interior ones.
const DEMOSAIC_PADDING: Padding = Padding::Reflect101;

fn check_even(h: usize, w: usize) -> Result<()> {
    if !h.is_multiple_of(2) || !w.is_multiple_of(2) || h < 2 || w < 2 {
        return Err(Error::invalid(format!("bayer dims must be even and at least 2, got {h}x{w}")));
    }
    Ok(())
}

/// Linear bilinear demosaic of an arbitrary (not range-checked) raw plane.
pub fn demosaic_field(raw: &Plane) -> Result<RgbField> {
    let (h, w) = raw.dims();
    check_even(h, w)?;
    let planes: Vec<Plane> = (0..3)
        .map(|c| {
            let masked = Plane::from_fn(h, w, |i, j| if cfa_channel(i, j) == c { raw.get(i, j) } else { 0.0 });
            conv2d(&masked, channel_kernel(c), DEMOSAIC_PADDING)
        })
        .collect::<Result<_>>()?;
    RgbField::from_planes([&planes[0], &planes[1], &planes[2]])
}

/// Classic bilinear demosaic: each channel's sites are kept, the gaps are
/// filled by averaging the nearest same-channel neighbors.
pub fn demosaic_bilinear(raw: &RawBayer) -> Result<ImageRgb> {
    ImageRgb::saturating(demosaic_field(raw)?)
}

/// Exact transpose of [`demosaic_field`].
pub fn demosaic_adjoint(grad: &RgbField) -> Result<Plane> {
    let (h, w) = grad.dims();
    check_even(h, w)?;
    let mut out = Plane::zeros(h, w);
    for c in 0..3 {
        let back = conv2d_adjoint(&grad.channel(c), channel_kernel(c), DEMOSAIC_PADDING)?;
        for i in 0..h {
            for j in 0..w {
                if cfa_channel(i, j) == c {
                    out.set(i, j, back.get(i, j));
                }
            }
        }
    }
    Ok(out)
}

pub const DENOISE_SIGMA: f64 = 0.8;

/// Normalized 3x3 Gaussian with sigma [`DENOISE_SIGMA`].
pub fn denoise_kernel() -> &'static Kernel {
    static K: OnceLock<Kernel> = OnceLock::new();
    K.get_or_init(|| {
        let s2 = 2.0 * DENOISE_SIGMA * DENOISE_SIGMA;
        let w: Vec<f64> = (0..9)
            .map(|k| {
                let (dy, dx) = ((k / 3) as f64 - 1.0, (k % 3) as f64 - 1.0);
                (-(dx * dx + dy * dy) / s2).exp()
            })
            .collect();
        let total: f64 = w.iter().sum();
        Kernel::new(3, 3, w.into_iter().map(|v| v / total).collect()).unwrap()
    })
}

/// Per-channel Gaussian blur applied once at export.
pub fn denoise_export(img: &ImageRgb) -> Result<ImageRgb> {
    let planes: Vec<Plane> = img
        .channels()
        .iter()
        .map(|p| conv2d(p, denoise_kernel(), Padding::Replicate))
        .collect::<Result<_>>()?;
    ImageRgb::saturating(RgbField::from_planes([&planes[0], &planes[1], &planes[2]])?)
}

/// Shifts every value of `adv` by `mean(reference) - mean(adv)`, then clamps.
pub fn normalize_mean(adv: &ImageRgb, reference: &ImageRgb) -> ImageRgb {
    let shift = reference.mean() - adv.mean();
    ImageRgb::saturating(adv.map(|v| v + shift)).expect("dims unchanged")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_raw(rng: &mut ChaCha8Rng, h: usize, w: usize) -> RawBayer {
        RawBayer::from_plane(Plane::from_fn(h, w, |_, _| rng.gen_range(0.0..255.0))).unwrap()
    }

    #[test]
    fn cfa_layout() {
        let img = ImageRgb::new(
            2,
            2,
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0],
        )
        .unwrap();
        let raw = bayer_cfa(&img);
        assert_eq!(raw.data(), &[1.0, 5.0, 8.0, 12.0]);

        let red = ImageRgb::filled(4, 6, [255.0, 0.0, 0.0]).unwrap();
        let raw = bayer_cfa(&red);
        let lit = raw.data().iter().filter(|&&v| v == 255.0).count();
        assert_eq!(lit, 24 / 4);
        assert!(bayer_cfa(&ImageRgb::filled(4, 4, [77.0; 3]).unwrap()).data().iter().all(|&v| v == 77.0));
    }

    #[test]
    fn odd_dims_are_cropped() {
        let raw = bayer_cfa(&ImageRgb::filled(5, 7, [1.0; 3]).unwrap());
        assert_eq!(raw.dims(), (4, 6));
    }

    #[test]
    fn noise_clamps_and_masks() {
        let raw = RawBayer::from_plane(Plane::new(2, 2, vec![255.0, 100.0, 0.0, 30.0]).unwrap()).unwrap();
        let delta = NoiseTensor::new(Plane::new(2, 2, vec![4.0, -3.0, -1.0, 0.0]).unwrap(), 4.0).unwrap();
        let out = add_noise_clamped(&raw, &delta).unwrap();
        assert_eq!(out.raw.data(), &[255.0, 97.0, 0.0, 30.0]);
        assert_eq!(out.mask, vec![false, true, false, true]);

        let zero = NoiseTensor::zeros(2, 2, 4.0).unwrap();
        let out = add_noise_clamped(&raw, &zero).unwrap();
        assert_eq!(&out.raw, &raw);
        assert!(out.mask.iter().all(|&m| m));
    }

    #[test]
    fn budget_enforced() {
        assert!(NoiseTensor::new(Plane::filled(2, 2, 5.0), 4.0).is_err());
        assert!(NoiseTensor::zeros(2, 2, -1.0).is_err());
        let raw = RawBayer::from_plane(Plane::zeros(2, 4)).unwrap();
        assert!(add_noise_clamped(&raw, &NoiseTensor::zeros(2, 2, 1.0).unwrap()).is_err());
    }

    #[test]
    fn sign_step_respects_budget() {
        let mut d = NoiseTensor::zeros(2, 2, 1.5).unwrap();
        let g = Plane::new(2, 2, vec![1.0, -2.0, 0.0, 3.0]).unwrap();
        for _ in 0..4 {
            d.sign_step(&g, 1.0);
        }
        assert_eq!(d.data(), &[-1.5, 1.5, 0.0, -1.5]);
    }

    #[test]
    fn constant_raw_demosaics_to_constant() {
        let raw = RawBayer::from_plane(Plane::filled(6, 8, 123.0)).unwrap();
        let rgb = demosaic_bilinear(&raw).unwrap();
        assert!(rgb.data().iter().all(|&v| (v - 123.0).abs() < 1e-12));
    }

    #[test]
    fn native_sites_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let raw = random_raw(&mut rng, 8, 10);
        let rgb = demosaic_field(&raw).unwrap();
        for i in 0..8 {
            for j in 0..10 {
                assert_eq!(rgb.get(i, j, cfa_channel(i, j)), raw.get(i, j));
            }
        }
    }

    // Oracle: average the nearest same-channel neighbors directly, mirroring
    // indices at the border.
    fn neighbor_average(raw: &Plane, i: usize, j: usize, c: usize) -> f64 {
        let (h, w) = raw.dims();
        let mirror = |k: isize, n: usize| -> usize {
            if k < 0 {
                (-k) as usize
            } else if k as usize >= n {
                2 * (n - 1) - k as usize
            } else {
                k as usize
            }
        };
        if cfa_channel(i, j) == c {
            return raw.get(i, j);
        }
        let cands: &[(isize, isize)] = if c == 1 {
            &[(-1, 0), (1, 0), (0, -1), (0, 1)]
        } else {
            &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
        };
        let picks: Vec<f64> = cands
            .iter()
            .filter_map(|&(di, dj)| {
                let (si, sj) = (mirror(i as isize + di, h), mirror(j as isize + dj, w));
                // the channel must be read at the mirrored-from position's phase,
                // which reflect-101 preserves
                (cfa_channel((i as isize + di).rem_euclid(2) as usize, (j as isize + dj).rem_euclid(2) as usize) == c)
                    .then(|| raw.get(si, sj))
            })
            .collect();
        picks.iter().sum::<f64>() / picks.len() as f64
    }

    #[test]
    fn matches_neighbor_average_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let raw = random_raw(&mut rng, 6, 6);
        let rgb = demosaic_field(&raw).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                for c in 0..3 {
                    let want = neighbor_average(&raw, i, j, c);
                    assert!((rgb.get(i, j, c) - want).abs() < 1e-12, "({i},{j},{c})");
                }
            }
        }
    }

    #[test]
    fn gray_round_trip() {
        for v in [0.0, 1.5, 128.0, 255.0] {
            let gray = ImageRgb::filled(6, 4, [v; 3]).unwrap();
            let back = demosaic_bilinear(&bayer_cfa(&gray)).unwrap();
            assert_eq!(back, gray);
        }
    }

    #[test]
    fn demosaic_adjoint_dot_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let (h, w) = (2 * rng.gen_range(1..6), 2 * rng.gen_range(1..6));
            let x = Plane::from_fn(h, w, |_, _| rng.gen_range(-1.0..1.0));
            let y = RgbField::from_fn(h, w, |_, _| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
            let lhs = demosaic_field(&x).unwrap().dot(&y);
            let rhs = x.dot(&demosaic_adjoint(&y).unwrap());
            assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()).max(1.0));
        }
    }

    #[test]
    fn adjoint_of_red_impulse_stays_on_the_site() {
        // Red output at an R site only reads that site; the transpose must put
        // all of the mass back there.
        let mut g = RgbField::zeros(8, 8);
        g.set(4, 4, 0, 2.5);
        let back = demosaic_adjoint(&g).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let want = if (i, j) == (4, 4) { 2.5 } else { 0.0 };
                assert_eq!(back.get(i, j), want);
            }
        }
        // Green output at the same R site reads the four orthogonal G sites.
        let mut g = RgbField::zeros(8, 8);
        g.set(4, 4, 1, 1.0);
        let back = demosaic_adjoint(&g).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let want = if [(3, 4), (5, 4), (4, 3), (4, 5)].contains(&(i, j)) { 0.25 } else { 0.0 };
                assert_eq!(back.get(i, j), want);
            }
        }
        assert!(demosaic_adjoint(&RgbField::zeros(4, 4)).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(demosaic_adjoint(&RgbField::zeros(3, 4)).is_err());
    }

    #[test]
    fn denoise_behaviour() {
        let flat = ImageRgb::filled(5, 5, [40.0, 80.0, 120.0]).unwrap();
        assert!(denoise_export(&flat).unwrap().max_abs_diff(&flat) < 1e-12);

        let mut spike = RgbField::zeros(7, 7);
        spike.set(3, 3, 1, 200.0);
        let out = denoise_export(&ImageRgb::from_field(spike).unwrap()).unwrap();
        let g = out.channel(1);
        assert!((g.data().iter().sum::<f64>() - 200.0).abs() < 1e-9);
        assert!(g.get(3, 3) < 200.0 && g.get(2, 2) > 0.0 && g.get(1, 1) == 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = ImageRgb::from_field(RgbField::from_fn(6, 5, |_, _| [rng.gen_range(0.0..255.0); 3])).unwrap();
        let out = denoise_export(&img).unwrap();
        let s2 = 2.0 * 0.8 * 0.8;
        let raw_w = |d: f64| (-d / s2).exp();
        let total = raw_w(0.0) + 4.0 * raw_w(1.0) + 4.0 * raw_w(2.0);
        for i in 0..6i32 {
            for j in 0..5i32 {
                let mut acc = 0.0;
                for di in -1..=1i32 {
                    for dj in -1..=1i32 {
                        let (si, sj) = ((i + di).clamp(0, 5) as usize, (j + dj).clamp(0, 4) as usize);
                        acc += raw_w((di * di + dj * dj) as f64) / total * img.get(si, sj, 0);
                    }
                }
                assert!((out.get(i as usize, j as usize, 0) - acc).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn mean_normalization() {
        let reference = ImageRgb::filled(4, 4, [100.0, 120.0, 140.0]).unwrap();
        assert_eq!(normalize_mean(&reference, &reference), reference);
        let darker = ImageRgb::saturating(reference.map(|v| v - 30.0)).unwrap();
        assert!(normalize_mean(&darker, &reference).max_abs_diff(&reference) < 1e-12);

        // clipping only ever pulls the mean back towards the original
        let img = ImageRgb::new(2, 2, vec![250.0, 0.0, 10.0, 5.0, 5.0, 5.0, 200.0, 100.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let bright = ImageRgb::filled(3, 3, [200.0; 3]).unwrap();
        let out = normalize_mean(&img, &bright);
        let shift = 200.0 - img.mean();
        let clipped_loss: f64 = img.data().iter().map(|v| (v + shift - 255.0).max(0.0)).sum::<f64>() / 12.0;
        assert!((bright.mean() - out.mean() - clipped_loss).abs() < 1e-9);
    }
}
