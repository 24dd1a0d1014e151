//! `moire`: simulate screen captures, craft sensor-noise attacks and
//! tabulate their success under defenses.

mod datadir;
mod imageio;
mod report;
mod table;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use moire_core::attack::{capture_without_noise, classify, end_to_end_gradcheck, AttackConfig, AttackResult, GradcheckConfig, PixelAttack};
use moire_core::classifier::{
    load_model, save_model, synthetic_textures, train_toy, ClassifierSpec, LossSpec, Model, Optimizer, Sample, TrainConfig,
};
use moire_core::gratings::grating_beat;
use moire_core::imagecore::{ImageRgb, RgbField};
use moire_core::lcdsim::CaptureParams;
use moire_core::sensor::denoise_export;
use serde_json::json;

use crate::imageio::{read_image, write_image};
use crate::report::AttackReport;
use crate::table::{Attack, TableKind, TableSettings};

#[derive(Parser)]
#[command(name = "moire", version, about = "Screen-capture moire simulator and sensor-noise attacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a toy victim on the built-in striped/checker/plain textures.
    Train(TrainArgs),
    /// Write a labeled texture set (images plus labels.csv).
    Dataset(DatasetArgs),
    /// Run one attack on one image.
    Attack(AttackArgs),
    /// Success-rate table over a dataset directory, as CSV.
    Table(TableArgs),
    /// Finite-difference check of the noise gradient; exit 0 iff it passes.
    Gradcheck(GradcheckArgs),
    /// Overlay two stripe patterns and report their beat frequency.
    Grating(GratingArgs),
    /// Write the unperturbed capture of an image.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct CaptureArgs {
    /// Monitor scale factor (integer).
    #[arg(long, default_value_t = 1)]
    alpha: u32,
    /// Capture rotation in degrees; drawn from the seed when omitted.
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 0.05, allow_hyphen_values = true)]
    k1: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    k2: f64,
}

impl CaptureArgs {
    fn params(&self, seed: u64) -> CaptureParams {
        CaptureParams {
            scale: self.alpha,
            rotation_deg: self.gamma,
            k1: self.k1,
            k2: self.k2,
            seed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 0.002)]
    lr: f64,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    optimizer: OptimizerArg,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    /// Seeds weight initialization and sample order.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Architecture: 0 is the default victim, 1 and 2 are alternatives.
    #[arg(long, default_value_t = 0)]
    variant: usize,
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value_t = 600)]
    train_count: usize,
    #[arg(long, default_value_t = 300)]
    test_count: usize,
    #[arg(long, default_value_t = 1)]
    train_seed: u64,
    #[arg(long, default_value_t = 2)]
    test_seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ImageFormat {
    Png,
    Ppm,
}

impl ImageFormat {
    fn extension(self) -> &'static str {
        match self {
            ImageFormat::Png => "png",
            ImageFormat::Ppm => "ppm",
        }
    }
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value_t = 2)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ImageFormat::Png)]
    format: ImageFormat,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Untargeted,
    Targeted,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Moire,
    Bim,
    Pgd,
    MiFgsm,
    MoireBim,
}

impl Method {
    fn attack(self) -> Attack {
        match self {
            Method::Moire => Attack::Moire,
            Method::Bim => Attack::Pixel(PixelAttack::Bim),
            Method::Pgd => Attack::Pixel(PixelAttack::Pgd),
            Method::MiFgsm => Attack::Pixel(PixelAttack::MiFgsm),
            Method::MoireBim => Attack::MoirePlusBim,
        }
    }
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Directory for images and report.json.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Untargeted)]
    mode: Mode,
    #[arg(long, value_enum, default_value_t = Method::Moire)]
    method: Method,
    /// True class; defaults to the model's prediction on the input.
    #[arg(long)]
    label: Option<usize>,
    /// Target class (targeted mode only).
    #[arg(long)]
    target: Option<usize>,
    #[arg(long, default_value_t = 8.0)]
    eps: f64,
    #[arg(long, default_value_t = 20)]
    iters: usize,
    /// Seeds the capture rotation and the PGD start.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    capture: CaptureArgs,
    #[arg(long, value_enum, default_value_t = ImageFormat::Png)]
    format: ImageFormat,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long, value_enum)]
    kind: TableKind,
    /// Source model first; further models are transfer targets.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    #[arg(long)]
    dataset: PathBuf,
    /// Use only the first N images.
    #[arg(long)]
    count: Option<usize>,
    /// Budgets; tables with one budget per row use all, others the first.
    #[arg(long, value_delimiter = ',', default_value = "8")]
    eps: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    iters: usize,
    #[arg(long, default_value_t = 1)]
    alpha: u32,
    /// Image k uses capture seed `seed + k`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "20,40,60,80")]
    qf: Vec<u8>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Check this model; a freshly initialized default victim otherwise.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Image to check at; a random image of the model's input size otherwise.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 12)]
    size: usize,
    #[arg(long, default_value_t = 8.0)]
    eps: f64,
    #[arg(long, default_value_t = 50)]
    coords: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    capture: CaptureArgs,
}

#[derive(Args)]
struct GratingArgs {
    #[arg(long, default_value_t = 0.20)]
    f1: f64,
    #[arg(long, default_value_t = 0.22)]
    f2: f64,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 200)]
    width: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    capture: CaptureArgs,
    /// Skip the export denoiser.
    #[arg(long)]
    no_denoise: bool,
}

fn load(path: &Path) -> Result<Model> {
    load_model(path).with_context(|| format!("cannot load model {}", path.display()))
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let train = synthetic_textures(a.train_count, a.size, a.train_seed)?;
    let test = synthetic_textures(a.test_count, a.size, a.test_seed)?;
    let spec = ClassifierSpec::victim_variant(a.variant, a.size, train.classes, a.seed);
    let cfg = TrainConfig {
        epochs: a.epochs,
        optimizer: match a.optimizer {
            OptimizerArg::Adam => Optimizer::Adam,
            OptimizerArg::Sgd => Optimizer::Sgd,
        },
        learning_rate: a.lr,
        batch_size: a.batch,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let validation = (!test.is_empty()).then_some(&test);
    let (model, report) = train_toy(spec, &train, validation, &cfg)?;
    save_model(&model, &a.out)?;
    print_json(&json!({
        "model": a.out.display().to_string(),
        "train_accuracy": report.train_accuracy,
        "test_accuracy": report.validation_accuracy,
        "epochs": report.epochs,
    }))
}

fn cmd_dataset(a: &DatasetArgs) -> Result<()> {
    let data = synthetic_textures(a.count, a.size, a.seed)?;
    datadir::write_dataset(&a.out, &data, a.format.extension())
}

fn delta_visualization(r: &AttackResult) -> Result<Option<ImageRgb>> {
    let Some(delta) = &r.delta else { return Ok(None) };
    let p = delta.as_plane();
    let field = RgbField::from_fn(p.height(), p.width(), |i, j| [p.get(i, j) + 128.0; 3]);
    Ok(Some(ImageRgb::saturating(field)?))
}

fn cmd_attack(a: &AttackArgs) -> Result<()> {
    let model = load(&a.model)?;
    let x = read_image(&a.input)?;
    let label = match a.label {
        Some(l) => l,
        None => classify(&model, &x)?,
    };
    let loss = match (a.mode, a.target) {
        (Mode::Untargeted, None) => LossSpec::untargeted(label),
        (Mode::Targeted, Some(t)) => LossSpec::targeted(t),
        (Mode::Untargeted, Some(_)) => bail!("--target only applies to --mode targeted"),
        (Mode::Targeted, None) => bail!("--mode targeted requires --target"),
    };
    let cfg = AttackConfig::new(loss, a.eps, a.iters).with_capture(a.capture.params(a.seed)).with_seed(a.seed);
    let sample = Sample { image: x, label };
    let result = table::run_attack(a.method.attack(), &sample, &model, &cfg)?;

    fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    let ext = a.format.extension();
    write_image(&a.out_dir.join(format!("adversarial.{ext}")), &result.adversarial)?;
    write_image(&a.out_dir.join(format!("adversarial_pre_denoise.{ext}")), &result.adversarial_pre_denoise)?;
    write_image(&a.out_dir.join(format!("reference.{ext}")), &result.reference)?;
    if let Some(d) = delta_visualization(&result)? {
        write_image(&a.out_dir.join(format!("delta.{ext}")), &d)?;
    }
    let mode = match a.mode {
        Mode::Untargeted => "untargeted",
        Mode::Targeted => "targeted",
    };
    let report = AttackReport::new(a.method.attack().name(), mode, label, a.eps, a.iters, a.capture.alpha, a.seed, &result);
    let text = serde_json::to_string_pretty(&report)?;
    let path = a.out_dir.join("report.json");
    fs::write(&path, format!("{text}\n")).with_context(|| format!("cannot write {}", path.display()))?;
    println!("{text}");
    Ok(())
}

fn cmd_table(a: &TableArgs) -> Result<()> {
    let models = a.models.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Model> = models.iter().collect();
    let samples = datadir::read_dataset(&a.dataset, a.count)?;
    let settings = TableSettings {
        epsilons: a.eps.clone(),
        iterations: a.iters,
        alpha: a.alpha,
        seed: a.seed,
        qualities: a.qf.clone(),
    };
    let csv = table::build(a.kind, &samples, &refs, &settings)?.to_csv();
    match &a.out {
        Some(p) => fs::write(p, csv).with_context(|| format!("cannot write {}", p.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}

/// Largest relative error the command accepts.
const GRADCHECK_THRESHOLD: f64 = 1e-4;

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<bool> {
    let model = match &a.model {
        Some(p) => load(p)?,
        None => Model::init(ClassifierSpec::default_victim(a.size, 3, a.seed))?,
    };
    let x = match &a.input {
        Some(p) => read_image(p)?,
        None => {
            let data = synthetic_textures(1, model.input_size(), a.seed)?;
            data.samples.into_iter().next().expect("one sample").image
        }
    };
    let cfg = AttackConfig::new(LossSpec::untargeted(0), a.eps, 1).with_capture(a.capture.params(a.seed));
    let gc = GradcheckConfig {
        coordinates: a.coords,
        seed: a.seed,
        ..GradcheckConfig::default()
    };
    let report = end_to_end_gradcheck(&x, &model, &cfg, &gc)?;
    let pass = report.max_relative_error < GRADCHECK_THRESHOLD;
    print_json(&json!({
        "max_relative_error": report.max_relative_error,
        "coordinates": report.sites.len(),
        "threshold": GRADCHECK_THRESHOLD,
        "pass": pass,
    }))?;
    Ok(pass)
}

fn cmd_grating(a: &GratingArgs) -> Result<()> {
    let (img, peak) = grating_beat(a.f1, a.f2, a.height, a.width)?;
    if let Some(p) = &a.out {
        write_image(p, &img.to_rgb()?)?;
    }
    print_json(&json!({
        "f1": a.f1,
        "f2": a.f2,
        "expected_beat": (a.f1 - a.f2).abs(),
        "beat_frequency": peak.frequency,
        "bin": peak.bin,
        "resolution": peak.resolution,
        "magnitude": peak.magnitude,
    }))
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let x = read_image(&a.input)?;
    let params = a.capture.params(a.seed);
    let captured = capture_without_noise(&x, &params)?;
    let out = if a.no_denoise { captured } else { denoise_export(&captured)? };
    write_image(&a.out, &out)?;
    print_json(&json!({ "gamma": params.gamma(), "alpha": a.capture.alpha, "height": out.height(), "width": out.width() }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Train(a) => cmd_train(a).map(|_| true),
        Command::Dataset(a) => cmd_dataset(a).map(|_| true),
        Command::Attack(a) => cmd_attack(a).map(|_| true),
        Command::Table(a) => cmd_table(a).map(|_| true),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Grating(a) => cmd_grating(a).map(|_| true),
        Command::Simulate(a) => cmd_simulate(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
