use super::*;
use crate::classifier::{ClassifierSpec, LayerParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ImageRgb {
    ImageRgb::new(h, w, (0..h * w * 3).map(|_| rng.gen_range(0.0..255.0)).collect()).unwrap()
}

fn all_defenses() -> Vec<DefenseSpec> {
    vec![
        DefenseSpec::None,
        DefenseSpec::Jpeg(20),
        DefenseSpec::BitDepth(4),
        DefenseSpec::MedianSmooth(2),
        DefenseSpec::MedianSmooth(3),
        DefenseSpec::MeanNormalize(Some(ImageRgb::filled(4, 4, [250.0; 3]).unwrap())),
        DefenseSpec::Rotate(30.0),
        DefenseSpec::RotateDim(-20.0, DEFAULT_DIM),
    ]
}

#[test]
fn defenses_stay_in_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let img = random_image(&mut rng, 13, 10);
        for d in all_defenses() {
            let out = d.apply(&img, None).unwrap();
            assert_eq!(out.dims(), img.dims(), "{}", d.label());
            assert!(out.data().iter().all(|v| (0.0..=255.0).contains(v)), "{}", d.label());
        }
    }
}

#[test]
fn invalid_parameters_rejected() {
    for d in [
        DefenseSpec::Jpeg(0),
        DefenseSpec::BitDepth(9),
        DefenseSpec::MedianSmooth(5),
        DefenseSpec::RotateDim(0.0, 0.0),
        DefenseSpec::Rotate(f64::NAN),
    ] {
        assert!(d.validate().is_err(), "{d:?}");
    }
    let img = ImageRgb::filled(4, 4, [1.0; 3]).unwrap();
    assert!(DefenseSpec::MeanNormalize(None).apply(&img, None).is_err());
}

// Gray textures and smooth color ramps: chroma is flat or slowly varying, so
// a second pass only re-quantizes. Saturated fine color detail drifts further
// because the chroma resampling blurs again on every pass.
#[test]
fn jpeg_second_pass_is_nearly_stable() {
    let data = crate::classifier::synthetic_textures(60, 32, 7).unwrap();
    let mut images: Vec<ImageRgb> = data
        .samples
        .iter()
        .map(|s| {
            let gray = crate::imagecore::RgbField::from_fn(32, 32, |i, j| {
                let [r, g, b] = s.image.pixel(i, j);
                [0.299 * r + 0.587 * g + 0.114 * b; 3]
            });
            ImageRgb::from_field(gray).unwrap()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let (a, b): ([f64; 3], [f64; 3]) = (std::array::from_fn(|_| rng.gen_range(0.0..255.0)), std::array::from_fn(|_| rng.gen_range(0.0..255.0)));
        let ramp = crate::imagecore::RgbField::from_fn(40, 40, |i, j| {
            let t = (i + j) as f64 / 78.0;
            std::array::from_fn(|c| a[c] + (b[c] - a[c]) * t)
        });
        images.push(ImageRgb::from_field(ramp).unwrap());
    }
    for q in [20, 40, 60, 80] {
        let (mut close, mut total) = (0usize, 0usize);
        for img in &images {
            let once = jpeg_roundtrip(img, q).unwrap();
            let twice = jpeg_roundtrip(&once, q).unwrap();
            close += once.data().iter().zip(twice.data()).filter(|(a, b)| (*a - *b).abs() <= 4.0).count();
            total += once.data().len();
        }
        assert!(close as f64 >= 0.99 * total as f64, "qf {q}: {close}/{total}");
    }
}

fn constant_model(winner: usize) -> Model {
    let mut model = Model::init(ClassifierSpec {
        input_size: 4,
        classes: 3,
        layers: vec![crate::classifier::LayerSpec::Dense { out: 3 }],
        seed: 0,
    })
    .unwrap()
    .zeroed();
    if let LayerParams::Dense { bias, .. } = &mut model.params_mut()[0] {
        bias[winner] = 1.0;
    }
    model
}

#[test]
fn evaluate_grid_and_aggregates() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let items: Vec<EvalItem> = (0..6)
        .map(|k| EvalItem::new(random_image(&mut rng, 8, 8), k % 3, LossSpec::untargeted(k % 3)).with_reference(random_image(&mut rng, 4, 4)))
        .collect();
    let m0 = constant_model(0);
    let m2 = constant_model(2);
    let defenses = [DefenseSpec::None, DefenseSpec::Jpeg(40), DefenseSpec::MeanNormalize(None)];
    let report = evaluate(&items, &[&m0, &m2], &defenses).unwrap();
    assert_eq!(report.cells.len(), 6);
    for cell in &report.cells {
        let mean = cell.records.iter().filter(|r| r.success_after).count() as f64 / cell.records.len() as f64;
        assert_eq!(cell.success_rate, mean);
    }
    // a constant model fools every image whose label differs from its output
    assert!((report.success_rate(0, "none").unwrap() - 4.0 / 6.0).abs() < 1e-12);
    assert!((report.success_rate(1, "jpeg-40").unwrap() - 4.0 / 6.0).abs() < 1e-12);
    assert_eq!(report, evaluate(&items, &[&m0, &m2], &defenses).unwrap());
}

#[test]
fn evaluate_rejects_empty_input() {
    let m = constant_model(0);
    let item = EvalItem::new(ImageRgb::filled(4, 4, [0.0; 3]).unwrap(), 0, LossSpec::untargeted(0));
    assert!(evaluate(&[], &[&m], &[DefenseSpec::None]).is_err());
    assert!(evaluate(std::slice::from_ref(&item), &[], &[DefenseSpec::None]).is_err());
    assert!(evaluate(std::slice::from_ref(&item), &[&m], &[]).is_err());
}

#[test]
fn rotate_dim_rate_of_constant_model() {
    let data = crate::classifier::synthetic_textures(9, 4, 1).unwrap();
    let rate = rotate_dim_misprediction_rate(&constant_model(1), &data.samples, DEFAULT_DIM, 0).unwrap();
    assert!((rate - 6.0 / 9.0).abs() < 1e-12);
    assert!(rotate_dim_misprediction_rate(&constant_model(1), &[], DEFAULT_DIM, 0).is_err());
}
