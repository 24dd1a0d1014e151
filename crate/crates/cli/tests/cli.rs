use std::path::Path;
use std::process::{Command, Output};

fn moire(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_moire")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = moire(args);
    assert!(out.status.success(), "moire {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).unwrap()
}

fn small_model(dir: &Path) -> String {
    let path = s(&dir.join("model.json"));
    ok(&["train", "--out", &path, "--epochs", "1", "--size", "16", "--train-count", "30", "--test-count", "0"]);
    path
}

#[test]
fn grating_reports_the_beat() {
    let dir = tempfile::tempdir().unwrap();
    let png = dir.path().join("g.png");
    let v = json(&ok(&["grating", "--f1", "0.20", "--f2", "0.22", "--out", &s(&png)]));
    assert_eq!(v["beat_frequency"].as_f64().unwrap(), 0.02);
    assert!(png.exists());
}

#[test]
fn gradcheck_passes_with_exit_zero() {
    let v = json(&ok(&["gradcheck"]));
    assert!(v["max_relative_error"].as_f64().unwrap() < 1e-4);
    assert_eq!(v["pass"], true);
}

#[test]
fn missing_model_is_named() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["dataset", "--out", &s(&dir.path().join("d")), "--count", "1", "--size", "8"]);
    let missing = dir.path().join("no-such-model.json");
    let out = moire(&["attack", "--model", &s(&missing), "--input", &s(&dir.path().join("d/0000_striped.png")), "--out-dir", &s(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains(&s(&missing)));
}

#[test]
fn simulate_is_repeatable_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["dataset", "--out", &s(&dir.path().join("d")), "--count", "2", "--size", "12", "--format", "ppm"]);
    let input = s(&dir.path().join("d/0001_checker.ppm"));
    let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
    let report = json(&ok(&["simulate", "--input", &input, "--out", &s(&a), "--alpha", "2", "--gamma", "30"]));
    ok(&["simulate", "--input", &input, "--out", &s(&b), "--alpha", "2", "--gamma", "30"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!((report["height"].as_u64(), report["width"].as_u64()), (Some(72), Some(72)));
    assert_eq!(report["gamma"].as_f64(), Some(30.0));
}

#[test]
fn ppm_round_trips_through_png() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["dataset", "--out", &s(&dir.path().join("p")), "--count", "3", "--size", "10", "--format", "ppm", "--seed", "4"]);
    ok(&["dataset", "--out", &s(&dir.path().join("q")), "--count", "3", "--size", "10", "--format", "png", "--seed", "4"]);
    // same samples, so the identity simulation of either file matches
    for (p, q) in [("p/0000_striped.ppm", "q/0000_striped.png"), ("p/0002_plain.ppm", "q/0002_plain.png")] {
        let (a, b) = (dir.path().join("a.ppm"), dir.path().join("b.ppm"));
        let args = ["--gamma", "0", "--k1", "0", "--no-denoise"];
        ok(&[&["simulate", "--input", &s(&dir.path().join(p)), "--out", &s(&a)][..], &args].concat());
        ok(&[&["simulate", "--input", &s(&dir.path().join(q)), "--out", &s(&b)][..], &args].concat());
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}

#[test]
fn malformed_ppm_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ppm");
    std::fs::write(&bad, b"P6\n4 4\n255\n\x00\x01").unwrap();
    let out = moire(&["simulate", "--input", &s(&bad), "--out", &s(&dir.path().join("o.png"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.ppm"));
}

#[test]
fn zero_iterations_export_the_clean_capture() {
    let dir = tempfile::tempdir().unwrap();
    let model = small_model(dir.path());
    ok(&["dataset", "--out", &s(&dir.path().join("d")), "--count", "1", "--size", "16"]);
    let input = s(&dir.path().join("d/0000_striped.png"));
    let out_dir = dir.path().join("attack");
    let report = json(&ok(&["attack", "--model", &model, "--input", &input, "--out-dir", &s(&out_dir), "--iters", "0", "--seed", "3"]));
    let sim = dir.path().join("sim.png");
    ok(&["simulate", "--input", &input, "--out", &s(&sim), "--seed", "3"]);
    assert_eq!(std::fs::read(out_dir.join("adversarial.png")).unwrap(), std::fs::read(&sim).unwrap());
    assert_eq!(report["trace"].as_array().unwrap().len(), 1);
    assert_eq!(report["metrics"]["linf"].as_f64(), Some(0.0));
}

#[test]
fn attack_report_layout() {
    let dir = tempfile::tempdir().unwrap();
    let model = small_model(dir.path());
    ok(&["dataset", "--out", &s(&dir.path().join("d")), "--count", "1", "--size", "16"]);
    let out_dir = dir.path().join("a");
    let input = s(&dir.path().join("d/0000_striped.png"));
    let text = ok(&["attack", "--model", &model, "--input", &input, "--out-dir", &s(&out_dir), "--mode", "targeted", "--target", "2", "--iters", "4", "--alpha", "2"]);
    let v = json(&text);
    assert_eq!(v, json(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()));
    assert_eq!(v["schema"], 1);
    assert_eq!(v["mode"], "targeted");
    assert_eq!(v["alpha"], 2);
    for key in ["eps", "iters", "gamma", "seed", "success", "trace", "metrics", "units"] {
        assert!(!v[key].is_null(), "missing {key}");
    }
    for key in ["linf", "l2", "mad"] {
        assert!(v["metrics"][key].is_number());
        assert!(v["units"][key].is_string());
    }
    assert_eq!(v["trace"].as_array().unwrap().len(), 5);
    for f in ["adversarial.png", "adversarial_pre_denoise.png", "reference.png", "delta.png"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
}

#[test]
fn flag_combinations_are_checked() {
    let dir = tempfile::tempdir().unwrap();
    let model = small_model(dir.path());
    ok(&["dataset", "--out", &s(&dir.path().join("d")), "--count", "1", "--size", "16"]);
    let input = s(&dir.path().join("d/0000_striped.png"));
    let base = ["attack", "--model", &model, "--input", &input, "--out-dir", &s(dir.path())];
    assert!(!moire(&[&base[..], &["--mode", "targeted"]].concat()).status.success());
    assert!(!moire(&[&base[..], &["--target", "1"]].concat()).status.success());
    assert!(!moire(&[&base[..], &["--eps", "300"]].concat()).status.success());
}

#[test]
fn jpeg_table_layout() {
    let dir = tempfile::tempdir().unwrap();
    let model = small_model(dir.path());
    let data = s(&dir.path().join("d"));
    ok(&["dataset", "--out", &data, "--count", "4", "--size", "16"]);
    let csv = ok(&["table", "--kind", "jpeg", "--model", &model, "--dataset", &data, "--qf", "20,40,60,80", "--iters", "2"]);
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "attack,none,jpeg-20,jpeg-40,jpeg-60,jpeg-80,images");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), ["moire", "bim", "pgd", "mi-fgsm"]);
    for r in &rows {
        assert_eq!(r.len(), 7);
        assert_eq!(r[6], "4");
        for cell in &r[1..6] {
            let v: f64 = cell.parse().unwrap();
            assert!((0.0..=1.0).contains(&v));
            // four images, so every rate is a multiple of a quarter
            assert!((v * 4.0 - (v * 4.0).round()).abs() < 1e-9);
        }
    }
}

#[test]
fn other_tables_have_their_columns() {
    let dir = tempfile::tempdir().unwrap();
    let model = small_model(dir.path());
    let data = s(&dir.path().join("d"));
    ok(&["dataset", "--out", &data, "--count", "3", "--size", "16"]);
    let header = |kind: &str, extra: &[&str]| {
        let csv = ok(&[&["table", "--kind", kind, "--model", &model, "--dataset", &data, "--iters", "1"][..], extra].concat());
        csv.lines().next().unwrap().to_string()
    };
    assert_eq!(header("success", &["--eps", "2,8"]), "eps,untargeted,targeted,rotate,rotate_dim,images");
    assert_eq!(header("normalize", &[]), "eps,unnormalized,normalized,images");
    assert_eq!(header("squeeze", &[]), "attack,none,bits-4,bits-5,median-2,median-3,images");
    assert_eq!(header("transfer", &["--model", &model]), "attack,model-0,model-1,images");
    assert_eq!(header("noise-position", &["--qf", "20"]), "attack,none,jpeg-20,images");
}

#[test]
fn empty_dataset_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let model = small_model(dir.path());
    let data = dir.path().join("empty");
    std::fs::create_dir(&data).unwrap();
    std::fs::write(data.join("labels.csv"), "file,label\n").unwrap();
    assert!(!moire(&["table", "--kind", "jpeg", "--model", &model, "--dataset", &s(&data)]).status.success());
}

#[test]
fn trained_victim_is_fooled_by_the_default_attack() {
    let dir = tempfile::tempdir().unwrap();
    let model = s(&dir.path().join("victim.json"));
    let trained = json(&ok(&["train", "--out", &model]));
    assert!(trained["test_accuracy"].as_f64().unwrap() >= 0.9);
    let data = s(&dir.path().join("test"));
    ok(&["dataset", "--out", &data, "--count", "1", "--seed", "2"]);
    let input = format!("{data}/0000_striped.png");
    let v = json(&ok(&["attack", "--model", &model, "--input", &input, "--out-dir", &s(&dir.path().join("a")), "--mode", "untargeted", "--eps", "8", "--iters", "20", "--seed", "7"]));
    assert_eq!(v["success"], true);
}
