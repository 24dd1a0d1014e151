//! End-to-end behaviour of the attack against a trained toy victim.

use std::sync::OnceLock;

use moire_core::attack::{moire_attack, AttackConfig, AttackResult};
use moire_core::classifier::{synthetic_textures, train_toy, ClassifierSpec, LossSpec, Model, Sample, TrainConfig};
use moire_core::robustness::rotate_dim_misprediction_rate;

const IMAGES: usize = 24;

struct Bench {
    model: Model,
    samples: Vec<Sample>,
    attacks: Vec<AttackResult>,
}

fn bench() -> &'static Bench {
    static BENCH: OnceLock<Bench> = OnceLock::new();
    BENCH.get_or_init(|| {
        let train = synthetic_textures(600, 32, 1).unwrap();
        let (model, _) = train_toy(ClassifierSpec::default_victim(32, 3, 0), &train, None, &TrainConfig::default()).unwrap();
        let samples = synthetic_textures(IMAGES, 32, 2).unwrap().samples;
        let attacks = samples
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let cfg = AttackConfig::new(LossSpec::untargeted(s.label), 8.0, 20).with_seed(k as u64);
                moire_attack(&s.image, &model, &cfg).unwrap()
            })
            .collect();
        Bench { model, samples, attacks }
    })
}

#[test]
fn loss_mostly_falls_along_the_trace() {
    let (mut falls, mut steps) = (0, 0);
    for r in &bench().attacks {
        for w in r.trace.windows(2) {
            steps += 1;
            falls += usize::from(w[1].loss <= w[0].loss);
        }
    }
    let share = falls as f64 / steps as f64;
    assert!(share >= 0.8, "loss fell on {falls}/{steps} steps");
}

#[test]
fn noise_stays_in_budget_and_trace_is_complete() {
    for r in &bench().attacks {
        let delta = r.delta.as_ref().unwrap();
        assert!(delta.as_plane().data().iter().all(|d| d.abs() <= 8.0));
        assert_eq!(r.trace.len(), 21);
        assert!(r.trace.iter().all(|t| t.linf <= 8.0));
        assert!((-45.0..=45.0).contains(&r.gamma.unwrap()));
    }
}

#[test]
fn optimized_noise_beats_rotation_and_dimming() {
    let b = bench();
    let attack = b.attacks.iter().filter(|r| r.success).count() as f64 / IMAGES as f64;
    let baseline = rotate_dim_misprediction_rate(&b.model, &b.samples, 0.5, 0).unwrap();
    assert!(attack > baseline, "attack {attack} vs rotate+dim {baseline}");
}
