//! Baseline JPEG without entropy coding: color conversion, 4:2:0 chroma
//! subsampling, 8x8 DCT and table quantization are the only lossy steps.

use std::sync::OnceLock;

use crate::imagecore::{resize_plane, ImageRgb, Plane, RgbField};
use crate::{Error, Result};

pub const LUMA_QUANT: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

pub const CHROMA_QUANT: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
];

fn check_quality(quality: u8) -> Result<()> {
    if (1..=100).contains(&quality) {
        Ok(())
    } else {
        Err(Error::invalid(format!("JPEG quality {quality} outside 1..=100")))
    }
}

/// Percentage applied to the base tables (integer division below 50).
pub fn quality_scale(quality: u8) -> Result<u32> {
    check_quality(quality)?;
    let q = u32::from(quality);
    Ok(if q < 50 { 5000 / q } else { 200 - 2 * q })
}

/// Base table scaled for `quality`, each entry clamped to `1..=255`.
pub fn quant_table(base: &[u16; 64], quality: u8) -> Result<[u16; 64]> {
    let s = quality_scale(quality)?;
    Ok(base.map(|q| ((u32::from(q) * s + 50) / 100).clamp(1, 255) as u16))
}

fn dct_matrix() -> &'static [[f64; 8]; 8] {
    static M: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    M.get_or_init(|| {
        let mut m = [[0.0; 8]; 8];
        for (u, row) in m.iter_mut().enumerate() {
            let a = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
            for (x, v) in row.iter_mut().enumerate() {
                *v = a * ((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / 16.0).cos();
            }
        }
        m
    })
}

/// Orthonormal 2-D DCT-II of a row-major 8x8 block.
pub fn dct8x8(block: &[f64; 64]) -> [f64; 64] {
    let m = dct_matrix();
    let mut tmp = [0.0; 64];
    for y in 0..8 {
        for u in 0..8 {
            tmp[y * 8 + u] = (0..8).map(|x| m[u][x] * block[y * 8 + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for v in 0..8 {
        for u in 0..8 {
            out[v * 8 + u] = (0..8).map(|y| m[v][y] * tmp[y * 8 + u]).sum();
        }
    }
    out
}

/// Inverse of [`dct8x8`].
pub fn idct8x8(coeffs: &[f64; 64]) -> [f64; 64] {
    let m = dct_matrix();
    let mut tmp = [0.0; 64];
    for v in 0..8 {
        for x in 0..8 {
            tmp[v * 8 + x] = (0..8).map(|u| m[u][x] * coeffs[v * 8 + u]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            out[y * 8 + x] = (0..8).map(|v| m[v][y] * tmp[v * 8 + x]).sum();
        }
    }
    out
}

/// Quantizes every 8x8 block in place; dims must be multiples of 8.
fn code_plane(plane: &mut Plane, table: &[u16; 64]) {
    let (h, w) = plane.dims();
    for bi in (0..h).step_by(8) {
        for bj in (0..w).step_by(8) {
            let mut block = [0.0; 64];
            for y in 0..8 {
                for x in 0..8 {
                    block[y * 8 + x] = plane.get(bi + y, bj + x) - 128.0;
                }
            }
            let mut c = dct8x8(&block);
            for (v, &q) in c.iter_mut().zip(table) {
                let q = f64::from(q);
                *v = (*v / q).round() * q;
            }
            let rec = idct8x8(&c);
            for y in 0..8 {
                for x in 0..8 {
                    plane.set(bi + y, bj + x, rec[y * 8 + x] + 128.0);
                }
            }
        }
    }
}

fn box_half(p: &Plane) -> Plane {
    Plane::from_fn(p.height() / 2, p.width() / 2, |i, j| {
        (p.get(2 * i, 2 * j) + p.get(2 * i, 2 * j + 1) + p.get(2 * i + 1, 2 * j) + p.get(2 * i + 1, 2 * j + 1)) / 4.0
    })
}

/// Compress-decompress round trip. Input values are rounded to 8 bits first
/// and the output is rounded and clamped back to 8-bit levels.
pub fn jpeg_roundtrip(img: &ImageRgb, quality: u8) -> Result<ImageRgb> {
    let luma_q = quant_table(&LUMA_QUANT, quality)?;
    let chroma_q = quant_table(&CHROMA_QUANT, quality)?;
    let (h, w) = img.dims();
    // pad to whole 16x16 macroblocks by edge replication
    let (ph, pw) = (h.div_ceil(16) * 16, w.div_ceil(16) * 16);
    let px = |i: usize, j: usize| img.pixel(i.min(h - 1), j.min(w - 1)).map(|v| v.round().clamp(0.0, 255.0));
    let mut y = Plane::zeros(ph, pw);
    let mut cb = Plane::zeros(ph, pw);
    let mut cr = Plane::zeros(ph, pw);
    for i in 0..ph {
        for j in 0..pw {
            let [r, g, b] = px(i, j);
            y.set(i, j, 0.299 * r + 0.587 * g + 0.114 * b);
            cb.set(i, j, 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b);
            cr.set(i, j, 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b);
        }
    }
    code_plane(&mut y, &luma_q);
    let mut cb_small = box_half(&cb);
    let mut cr_small = box_half(&cr);
    code_plane(&mut cb_small, &chroma_q);
    code_plane(&mut cr_small, &chroma_q);
    let cb = resize_plane(&cb_small, ph, pw)?;
    let cr = resize_plane(&cr_small, ph, pw)?;
    let out = RgbField::from_fn(h, w, |i, j| {
        let (yv, cbv, crv) = (y.get(i, j), cb.get(i, j) - 128.0, cr.get(i, j) - 128.0);
        [yv + 1.402 * crv, yv - 0.344136 * cbv - 0.714136 * crv, yv + 1.772 * cbv].map(|v| v.round().clamp(0.0, 255.0))
    });
    ImageRgb::from_field(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dct_roundtrip_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let block: [f64; 64] = std::array::from_fn(|_| rng.gen_range(-128.0..128.0));
            let back = idct8x8(&dct8x8(&block));
            for (a, b) in block.iter().zip(&back) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dct_of_constant_block() {
        // orthonormal scaling puts 8 * value in the DC slot
        let c = dct8x8(&[10.0; 64]);
        assert!((c[0] - 80.0).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn dct_preserves_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let block: [f64; 64] = std::array::from_fn(|_| rng.gen_range(-128.0..128.0));
        let e0: f64 = block.iter().map(|v| v * v).sum();
        let e1: f64 = dct8x8(&block).iter().map(|v| v * v).sum();
        assert!((e0 - e1).abs() < 1e-9 * e0);
    }

    #[test]
    fn quality_scaling_spot_checks() {
        assert_eq!(quality_scale(20).unwrap(), 250);
        assert_eq!(quality_scale(50).unwrap(), 100);
        assert_eq!(quality_scale(80).unwrap(), 40);
        assert_eq!(quality_scale(30).unwrap(), 166);
        // luma DC 16, luma corner 99, chroma DC 17
        let q20 = quant_table(&LUMA_QUANT, 20).unwrap();
        assert_eq!((q20[0], q20[63], q20[1]), (40, 248, 28));
        assert_eq!(quant_table(&LUMA_QUANT, 50).unwrap(), LUMA_QUANT);
        let q80 = quant_table(&LUMA_QUANT, 80).unwrap();
        assert_eq!((q80[0], q80[63], q80[1]), (6, 40, 4));
        assert_eq!(quant_table(&CHROMA_QUANT, 20).unwrap()[0], 43);
        assert_eq!(quant_table(&LUMA_QUANT, 1).unwrap()[63], 255);
        assert!(quant_table(&LUMA_QUANT, 100).unwrap().iter().all(|&q| q == 1));
    }

    #[test]
    fn quality_out_of_range() {
        let img = ImageRgb::filled(8, 8, [0.0; 3]).unwrap();
        assert!(jpeg_roundtrip(&img, 0).is_err());
        assert!(jpeg_roundtrip(&img, 101).is_err());
    }

    #[test]
    fn high_quality_on_smooth_image() {
        let img = ImageRgb::new(
            40,
            37,
            RgbField::from_fn(40, 37, |i, j| [3.0 * i as f64 + 20.0, 4.0 * j as f64 + 10.0, 200.0 - 2.0 * (i + j) as f64]).into_data(),
        )
        .unwrap();
        let out = jpeg_roundtrip(&img, 100).unwrap();
        assert_eq!(out.dims(), (40, 37));
        assert!(img.max_abs_diff(&out) <= 3.0, "{}", img.max_abs_diff(&out));
    }

    #[test]
    fn constant_gray_survives_any_quality() {
        let img = ImageRgb::filled(24, 24, [77.0; 3]).unwrap();
        for q in [20, 50, 100] {
            let out = jpeg_roundtrip(&img, q).unwrap();
            assert!(img.max_abs_diff(&out) <= 1.0, "qf {q}");
        }
    }

    #[test]
    fn lower_quality_loses_more() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = ImageRgb::new(32, 32, (0..32 * 32 * 3).map(|_| rng.gen_range(0.0..255.0)).collect()).unwrap();
        let err = |q| {
            let out = jpeg_roundtrip(&img, q).unwrap();
            img.data().iter().zip(out.data()).map(|(a, b)| (a - b).abs()).sum::<f64>()
        };
        assert!(err(20) > err(80));
    }
}
