//! `sentinel` — train, evaluate, run, and benchmark the three-class
//! anomaly-detection classifier, plus a two-sample t-test utility.
//!
//! Exit codes: 0 success, 1 domain/runtime error, 2 usage or configuration
//! error. Every run derives all of its randomness from one root `--seed`,
//! recorded in the artifacts the seed influences.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sentinel_core::bench::{run_benchmark_frames, FrameSource};
use sentinel_core::config::IniConfig;
use sentinel_core::data::{
    derive_seed, load_dataset, normalize, read_ppm, resize_bilinear, split, AugmentConfig,
    Dataset, SplitConfig, CLASS_NAMES,
};
use sentinel_core::error::{Error, Result};
use sentinel_core::metrics::{report, ConfusionMatrix};
use sentinel_core::model::{build_model, load_weights, save_weights, Model, ModelConfig, Variant};
use sentinel_core::stats::{parse_numeric_lines, two_sample_t_test, Tails};
use sentinel_core::tensor::{ReduceOp, Tensor};
use sentinel_core::train::{evaluate_predictions, train, TrainConfig};

// Independent sub-seed streams derived from the root seed.
const STREAM_INIT: u64 = 1;
const STREAM_SPLIT: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;
const STREAM_AUGMENT: u64 = 4;
const STREAM_BENCH: u64 = 5;

#[derive(Parser)]
#[command(
    name = "sentinel",
    version,
    about = "Three-class visual anomaly detection: training, evaluation, inference, benchmarking, and significance testing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a dataset directory and save SDLW weights.
    Train(TrainArgs),
    /// Evaluate saved weights on a dataset and emit a metrics JSON report.
    Eval(EvalArgs),
    /// Classify a single PPM image.
    Predict(PredictArgs),
    /// Measure single-stream inference latency and FPS.
    Bench(BenchArgs),
    /// Pooled two-sample t-test over two newline-separated numeric files.
    Ttest(TtestArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// INI config file; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset root with admin/, intruder/, no_human/ subdirectories.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model variant: mobilenetv2-224 | micronet-32.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output weights path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training log path (default: <out> with a .log extension).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Fraction of each class held out for validation.
    #[arg(long)]
    val_fraction: Option<f64>,
    #[arg(long)]
    width_multiplier: Option<f32>,
    /// Hidden dense units in the head (0 disables the hidden layer).
    #[arg(long)]
    hidden_units: Option<usize>,
    /// Initialize from an existing SDLW file instead of random weights.
    #[arg(long)]
    init_weights: Option<PathBuf>,
    /// Freeze everything except the dense head.
    #[arg(long, value_name = "BOOL")]
    freeze_backbone: Option<bool>,
    /// Enable or disable augmentation (default true).
    #[arg(long, value_name = "BOOL")]
    augment: Option<bool>,
    #[arg(long)]
    rotation_deg: Option<f32>,
    #[arg(long)]
    scale_min: Option<f32>,
    #[arg(long)]
    scale_max: Option<f32>,
    #[arg(long)]
    hflip_prob: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    width_multiplier: Option<f32>,
    #[arg(long)]
    hidden_units: Option<usize>,
    /// Also write the JSON report to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    /// PPM image to classify.
    #[arg(long)]
    image: Option<PathBuf>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    width_multiplier: Option<f32>,
    #[arg(long)]
    hidden_units: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    /// "synthetic" or a directory of .ppm frames.
    #[arg(long)]
    source: Option<String>,
    /// Measured frames (after warmup).
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    width_multiplier: Option<f32>,
    #[arg(long)]
    hidden_units: Option<usize>,
    /// Also write the JSON report to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TtestArgs {
    /// First newline-separated numeric file.
    file_a: Option<PathBuf>,
    /// Second newline-separated numeric file.
    file_b: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// one | two (default two).
    #[arg(long)]
    tails: Option<String>,
    /// Also write the JSON result to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Ttest(args) => cmd_ttest(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn load_ini(path: &Option<PathBuf>) -> Result<IniConfig> {
    match path {
        Some(p) => IniConfig::load(p),
        None => Ok(IniConfig::default()),
    }
}

fn pick<T>(cli: Option<T>, file: Option<T>, default: T) -> T {
    cli.or(file).unwrap_or(default)
}

fn require<T>(value: Option<T>, what: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("missing required setting: {what}")))
}

fn model_config(
    variant: Option<String>,
    width_multiplier: Option<f32>,
    hidden_units: Option<usize>,
    ini: &IniConfig,
    section: &str,
) -> Result<ModelConfig> {
    let variant_name = pick(
        variant,
        ini.get(section, "variant").map(|s| s.to_string()),
        "mobilenetv2-224".to_string(),
    );
    let mut config = ModelConfig::new(Variant::parse(&variant_name)?);
    config.width_multiplier = pick(
        width_multiplier,
        ini.get_parsed(section, "width_multiplier")?,
        1.0,
    );
    config.hidden_units = pick(hidden_units, ini.get_parsed(section, "hidden_units")?, 128);
    config.validate()?;
    Ok(config)
}

fn load_sized_dataset(root: &Path, variant: Variant) -> Result<Dataset> {
    let (mut dataset, warnings) = load_dataset(root)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let (h, w) = variant.input_hw();
    dataset.resize_all(h, w)?;
    Ok(dataset)
}

fn build_with_weights(config: &ModelConfig, weights: &Path) -> Result<Model> {
    let mut model = build_model(config, 0)?;
    load_weights(weights, &mut model)?;
    Ok(model)
}

fn write_out(path: &Option<PathBuf>, contents: &str) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, contents)?;
    }
    Ok(())
}

const TRAIN_KEYS: &[&str] = &[
    "data",
    "variant",
    "epochs",
    "batch",
    "lr",
    "seed",
    "out",
    "log",
    "val_fraction",
    "width_multiplier",
    "hidden_units",
    "init_weights",
    "freeze_backbone",
    "augment",
    "rotation_deg",
    "scale_min",
    "scale_max",
    "hflip_prob",
];

fn cmd_train(args: TrainArgs) -> Result<()> {
    let ini = load_ini(&args.config)?;
    ini.check_keys("train", TRAIN_KEYS)?;

    let data = require(
        args.data.or_else(|| ini.get("train", "data").map(PathBuf::from)),
        "data",
    )?;
    let epochs = pick(args.epochs, ini.get_parsed("train", "epochs")?, 50);
    let batch = pick(args.batch, ini.get_parsed("train", "batch")?, 16);
    let lr = pick(args.lr, ini.get_parsed("train", "lr")?, 0.001);
    let seed = pick(args.seed, ini.get_parsed("train", "seed")?, 0);
    let out = pick(
        args.out,
        ini.get("train", "out").map(PathBuf::from),
        PathBuf::from("weights.sdlw"),
    );
    let log_path = pick(
        args.log,
        ini.get("train", "log").map(PathBuf::from),
        out.with_extension("log"),
    );
    let val_fraction = pick(args.val_fraction, ini.get_parsed("train", "val_fraction")?, 0.2);
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::Config(format!(
            "val_fraction must be in [0, 1), got {val_fraction}"
        )));
    }
    let config = model_config(
        args.variant,
        args.width_multiplier,
        args.hidden_units,
        &ini,
        "train",
    )?;
    let freeze = pick(args.freeze_backbone, ini.get_parsed("train", "freeze_backbone")?, false);
    let augment_on = pick(args.augment, ini.get_parsed("train", "augment")?, true);
    let augment_cfg = if augment_on {
        let defaults = AugmentConfig::default();
        let cfg = AugmentConfig {
            rotation_deg: pick(
                args.rotation_deg,
                ini.get_parsed("train", "rotation_deg")?,
                defaults.rotation_deg,
            ),
            scale_range: (
                pick(args.scale_min, ini.get_parsed("train", "scale_min")?, defaults.scale_range.0),
                pick(args.scale_max, ini.get_parsed("train", "scale_max")?, defaults.scale_range.1),
            ),
            hflip_prob: pick(args.hflip_prob, ini.get_parsed("train", "hflip_prob")?, defaults.hflip_prob),
            seed: derive_seed(seed, STREAM_AUGMENT),
        };
        cfg.validate()?;
        Some(cfg)
    } else {
        None
    };
    let init_weights = args
        .init_weights
        .or_else(|| ini.get("train", "init_weights").map(PathBuf::from));
    let train_cfg = TrainConfig {
        epochs,
        batch_size: batch,
        lr,
        seed: derive_seed(seed, STREAM_SHUFFLE),
        augment: augment_cfg,
    };
    train_cfg.validate()?;

    // Config is fully validated; now touch the filesystem.
    let dataset = load_sized_dataset(&data, config.variant)?;
    let split_cfg = SplitConfig {
        train_fraction: 1.0 - val_fraction,
        val_fraction,
        test_fraction: 0.0,
        seed: derive_seed(seed, STREAM_SPLIT),
    };
    let (train_idx, val_idx, _) = split(&dataset, &split_cfg)?;
    let train_set = dataset.subset(&train_idx);
    let val_set = dataset.subset(&val_idx);

    let mut model = match &init_weights {
        Some(path) => build_with_weights(&config, path)?,
        None => build_model(&config, derive_seed(seed, STREAM_INIT))?,
    };
    model.freeze_backbone(freeze);

    let mut log = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
    let header = format!(
        "seed = {seed}\nvariant = {}\nepochs = {epochs}\nbatch = {batch}\nlr = {lr}\n\
         val_fraction = {val_fraction}\naugment = {augment_on}\nfreeze_backbone = {freeze}\n\
         data = {}\ntrain_samples = {}\nval_samples = {}\n",
        config.variant.name(),
        data.display(),
        train_set.len(),
        val_set.len(),
    );
    print!("{header}");
    log.write_all(header.as_bytes())?;

    train(&mut model, &train_set, Some(&val_set), &train_cfg, |s| {
        let val = match s.val_acc {
            Some(v) => format!("{v:.4}"),
            None => "-".to_string(),
        };
        let line = format!(
            "epoch {}/{} loss {:.6} train_acc {:.4} val_acc {}\n",
            s.epoch, epochs, s.train_loss, s.train_acc, val
        );
        print!("{line}");
        let _ = log.write_all(line.as_bytes());
        true
    })?;

    save_weights(&model, &out)?;
    let footer = format!("weights = {}\n", out.display());
    print!("{footer}");
    log.write_all(footer.as_bytes())?;
    log.flush()?;
    Ok(())
}

const EVAL_KEYS: &[&str] = &["weights", "data", "variant", "width_multiplier", "hidden_units", "out"];

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let ini = load_ini(&args.config)?;
    ini.check_keys("eval", EVAL_KEYS)?;
    let weights = require(
        args.weights.or_else(|| ini.get("eval", "weights").map(PathBuf::from)),
        "weights",
    )?;
    let data = require(
        args.data.or_else(|| ini.get("eval", "data").map(PathBuf::from)),
        "data",
    )?;
    let config = model_config(args.variant, args.width_multiplier, args.hidden_units, &ini, "eval")?;

    let model = build_with_weights(&config, &weights)?;
    let dataset = load_sized_dataset(&data, config.variant)?;
    let (actual, predicted) = evaluate_predictions(&model, &dataset)?;
    let cm = ConfusionMatrix::from_predictions(
        &actual,
        &predicted,
        CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
    )?;
    let json = report(&cm)?.to_json();
    println!("{json}");
    write_out(&args.out.or_else(|| ini.get("eval", "out").map(PathBuf::from)), &json)?;
    Ok(())
}

const PREDICT_KEYS: &[&str] = &["weights", "image", "variant", "width_multiplier", "hidden_units"];

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let ini = load_ini(&args.config)?;
    ini.check_keys("predict", PREDICT_KEYS)?;
    let weights = require(
        args.weights.or_else(|| ini.get("predict", "weights").map(PathBuf::from)),
        "weights",
    )?;
    let image_path = require(
        args.image.or_else(|| ini.get("predict", "image").map(PathBuf::from)),
        "image",
    )?;
    let config = model_config(args.variant, args.width_multiplier, args.hidden_units, &ini, "predict")?;

    let model = build_with_weights(&config, &weights)?;
    let (h, w) = config.variant.input_hw();
    let image = resize_bilinear(&read_ppm(&image_path)?, h, w)?;
    let (class, probs) = model.predict(&normalize(&image)?)?;
    println!("class = {}", CLASS_NAMES[class]);
    for (name, p) in CLASS_NAMES.iter().zip(&probs) {
        println!("{name} = {p:.6}");
    }
    Ok(())
}

const BENCH_KEYS: &[&str] = &[
    "weights",
    "source",
    "frames",
    "warmup",
    "seed",
    "variant",
    "width_multiplier",
    "hidden_units",
    "out",
];

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let ini = load_ini(&args.config)?;
    ini.check_keys("bench", BENCH_KEYS)?;
    let weights = require(
        args.weights.or_else(|| ini.get("bench", "weights").map(PathBuf::from)),
        "weights",
    )?;
    let source_name = pick(
        args.source,
        ini.get("bench", "source").map(|s| s.to_string()),
        "synthetic".to_string(),
    );
    let frames = pick(args.frames, ini.get_parsed("bench", "frames")?, 60);
    let warmup = pick(args.warmup, ini.get_parsed("bench", "warmup")?, 10);
    let seed = pick(args.seed, ini.get_parsed("bench", "seed")?, 0);
    let config = model_config(args.variant, args.width_multiplier, args.hidden_units, &ini, "bench")?;
    if frames == 0 {
        return Err(Error::Config("frames must be >= 1".into()));
    }

    let model = build_with_weights(&config, &weights)?;
    let (h, w) = config.variant.input_hw();
    let bench_seed = derive_seed(seed, STREAM_BENCH);
    let source = match source_name.as_str() {
        "synthetic" => FrameSource::Synthetic { h, w, seed: bench_seed },
        dir => FrameSource::Directory(PathBuf::from(dir)),
    };
    // Materialize and pre-size frames outside the timed loop.
    let raw = source.frames(warmup + frames)?;
    let mut sized = Vec::with_capacity(raw.len());
    for f in raw {
        sized.push(resize_bilinear(&f, h, w)?);
    }
    let per_frame = |frame: &Tensor| -> Result<usize> {
        let norm = normalize(frame)?;
        let logits = model.infer(&norm.reshape(&[1, h, w, 3])?)?;
        Ok(Tensor::reduce(ReduceOp::Argmax, &logits, 1)?.data()[0] as usize)
    };
    let report = run_benchmark_frames(per_frame, &sized, warmup, seed)?;
    let json = report.to_json();
    println!("{json}");
    write_out(&args.out.or_else(|| ini.get("bench", "out").map(PathBuf::from)), &json)?;
    Ok(())
}

const TTEST_KEYS: &[&str] = &["file_a", "file_b", "tails", "out"];

fn cmd_ttest(args: TtestArgs) -> Result<()> {
    let ini = load_ini(&args.config)?;
    ini.check_keys("ttest", TTEST_KEYS)?;
    let file_a = require(
        args.file_a.or_else(|| ini.get("ttest", "file_a").map(PathBuf::from)),
        "file_a",
    )?;
    let file_b = require(
        args.file_b.or_else(|| ini.get("ttest", "file_b").map(PathBuf::from)),
        "file_b",
    )?;
    let tails = Tails::parse(&pick(
        args.tails,
        ini.get("ttest", "tails").map(|s| s.to_string()),
        "two".to_string(),
    ))?;
    let a = parse_numeric_lines(&std::fs::read_to_string(&file_a)?)?;
    let b = parse_numeric_lines(&std::fs::read_to_string(&file_b)?)?;
    let result = two_sample_t_test(&a, &b, tails)?;
    let json = result.to_json();
    println!("{json}");
    write_out(&args.out.or_else(|| ini.get("ttest", "out").map(PathBuf::from)), &json)?;
    Ok(())
}
