use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use volstm::data::{
    generate, load_manifest, manifest_path, write_dataset, SignalMode, SiteShift, SubjectRecord, SyntheticSpec,
};
use volstm::gradcheck::{check_all, check_component, TOLERANCE};
use volstm::models::{load_checkpoint, save_checkpoint, ModelConfig, Variant};
use volstm::training::{
    kfold_split, metrics, predict, run_fold, summarize, CvSummary, FoldMetrics, Precision, TrainConfig,
};
use volstm::{Error, Result, Scalar};

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_DIVERGENCE: u8 = 4;
const EXIT_GRADCHECK: u8 = 5;

#[derive(Parser)]
#[command(name = "volstm", version, about = "Spatio-temporal volume sequence classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic cohort (ST4D files + manifest.csv).
    Generate(GenerateArgs),
    /// Cross-validated training; writes run.json, per-fold logs and checkpoints, summary.toml.
    Train(TrainArgs),
    /// Crop-averaged evaluation of a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Finite-difference gradient checks in 64-bit.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value = "spatiotemporal")]
    mode: SignalMode,
    #[arg(long, default_value_t = 40)]
    subjects: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    force: bool,
    #[arg(long, default_value_t = 3.0)]
    snr: f64,
    /// Fraction of subjects with label 1.
    #[arg(long, default_value_t = 0.5)]
    balance: f64,
    /// Volume dims as D,H,W.
    #[arg(long, value_delimiter = ',', default_values_t = [12, 14, 12])]
    grid: Vec<usize>,
    #[arg(long, default_value_t = 60)]
    t_min: usize,
    #[arg(long, default_value_t = 120)]
    t_max: usize,
    /// Number of acquisition sites; site k adds offset 0.5·k and gain 1 + 0.1·k.
    #[arg(long, default_value_t = 1)]
    sites: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory or manifest file.
    #[arg(long, required_unless_present = "replay")]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "clstm")]
    variant: Variant,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    crop_length: Option<u64>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    validate_every: Option<usize>,
    /// Small widths, short schedule and a larger step for CPU runs.
    #[arg(long)]
    desk_scale: bool,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value = "f32")]
    precision: Precision,
    /// C-LSTM hidden channels.
    #[arg(long)]
    hidden: Option<usize>,
    /// Temporal convolution kernel of the conv1d variant.
    #[arg(long)]
    temporal_kernel: Option<usize>,
    /// Re-run the configuration recorded in a previous run.json.
    #[arg(long, conflicts_with_all = ["data", "epochs", "batch", "crop_length", "lr", "validate_every", "desk_scale", "hidden", "temporal_kernel"])]
    replay: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Defaults to the crop length stored in the checkpoint.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    crop_length: Option<u64>,
    /// Summary file; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Restrict to one component.
    #[arg(long)]
    component: Option<String>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

/// Everything needed to reproduce a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct RunManifest {
    tool_version: String,
    data: PathBuf,
    folds: usize,
    stratify: bool,
    model: ModelConfig,
    train: TrainConfig,
    artifacts: Artifacts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Artifacts {
    summary: String,
    logs: Vec<String>,
    checkpoints: Vec<String>,
}

#[derive(Serialize)]
struct EvalSummary {
    checkpoint: PathBuf,
    accuracy: f64,
    f1: f64,
    predictions: Vec<volstm::training::SubjectPrediction>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::InvalidArgument(_) => EXIT_CONFIG,
                Error::Data(_) | Error::Ingestion(_) | Error::Format { .. } => EXIT_DATA,
                Error::Divergence(_) => EXIT_DIVERGENCE,
                _ => EXIT_OTHER,
            })
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn to_toml<S: Serialize>(value: &S) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::InvalidState(format!("cannot serialize summary: {e}")))
}

fn cmd_generate(a: GenerateArgs) -> Result<ExitCode> {
    if a.out.exists() {
        let non_empty = std::fs::read_dir(&a.out)
            .map_err(|e| Error::Io {
                path: a.out.clone(),
                source: e,
            })?
            .next()
            .is_some();
        if non_empty && !a.force {
            return Err(Error::Config(format!(
                "{} exists and is not empty; pass --force to overwrite",
                a.out.display()
            )));
        }
    }
    if a.grid.len() != 3 {
        return Err(Error::Config(format!("--grid takes three sizes D,H,W, got {:?}", a.grid)));
    }
    let spec = SyntheticSpec {
        subjects: a.subjects,
        class_balance: a.balance,
        spatial: [a.grid[0], a.grid[1], a.grid[2]],
        t_range: (a.t_min, a.t_max),
        mode: a.mode,
        snr: a.snr,
        sites: (0..a.sites.max(1))
            .map(|k| SiteShift {
                name: format!("site{k}"),
                offset: 0.5 * k as f64,
                gain: 1.0 + 0.1 * k as f64,
            })
            .collect(),
        seed: a.seed,
    };
    let records = generate(&spec).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::Config(m),
        other => other,
    })?;
    let manifest = write_dataset(&a.out, &records)?;
    println!("wrote {} subjects to {}", records.len(), manifest.display());
    Ok(ExitCode::SUCCESS)
}

fn resolve_run(a: &TrainArgs) -> Result<RunManifest> {
    if let Some(path) = &a.replay {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let mut run: RunManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        run.train.workers = a.workers;
        return Ok(run);
    }
    let data = a.data.clone().expect("clap requires --data without --replay");
    let (mut model, mut train) = if a.desk_scale {
        (ModelConfig::desk_scale(a.variant), TrainConfig::desk_scale())
    } else {
        (ModelConfig::full_scale(a.variant), TrainConfig::default())
    };
    if let Some(v) = a.epochs {
        train.epochs = v;
    }
    if let Some(v) = a.batch {
        train.batch_size = v;
    }
    if let Some(v) = a.crop_length {
        train.crop_length = v as usize;
    }
    if let Some(v) = a.lr {
        train.lr = v;
    }
    if let Some(v) = a.validate_every {
        train.validate_every = v;
    }
    if let Some(v) = a.hidden {
        model.clstm.hidden_channels = v;
    }
    if let Some(v) = a.temporal_kernel {
        model.temporal_conv.kernel = v;
    }
    train.seed = a.seed;
    train.workers = a.workers;
    train.precision = a.precision;
    model.crop_length = train.crop_length;
    let folds = a.folds;
    Ok(RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        data,
        folds,
        stratify: true,
        model,
        train,
        artifacts: Artifacts {
            summary: "summary.toml".into(),
            logs: (0..folds).map(|i| format!("fold-{i}.log")).collect(),
            checkpoints: (0..folds).map(|i| format!("fold-{i}.st4d")).collect(),
        },
    })
}

fn load_records(data: &Path, crop_length: usize) -> Result<Vec<SubjectRecord<f32>>> {
    let refs = load_manifest(manifest_path(data))?;
    let short: Vec<String> = refs
        .iter()
        .filter(|r| r.len() < crop_length)
        .map(|r| format!("subject {:?} has {} timesteps, crop length is {crop_length}", r.id, r.len()))
        .collect();
    if !short.is_empty() {
        return Err(Error::Ingestion(short));
    }
    refs.iter().map(|r| r.load::<f32>()).collect()
}

fn cmd_train(a: TrainArgs) -> Result<ExitCode> {
    let mut run = resolve_run(&a)?;
    run.train.validate()?;
    let records = load_records(&run.data, run.train.crop_length)?;
    let dims = records[0].series.dims();
    run.model.input_channels = dims[1];
    run.model.input_spatial = [dims[2], dims[3], dims[4]];
    run.model.shape_chain()?;

    std::fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    let json = serde_json::to_string_pretty(&run).expect("manifest serializes");
    write_text(&a.out.join("run.json"), &(json + "\n"))?;

    let summary = match run.train.precision {
        Precision::F32 => train_folds::<f32>(&run, &records, &a.out)?,
        Precision::F64 => {
            let cast: Vec<SubjectRecord<f64>> = records.iter().map(SubjectRecord::cast).collect();
            train_folds::<f64>(&run, &cast, &a.out)?
        }
    };
    write_text(&a.out.join(&run.artifacts.summary), &to_toml(&summary)?)?;
    println!(
        "accuracy {:.4} ± {:.4}, F1 {:.4} ± {:.4} over {} folds",
        summary.accuracy_mean,
        summary.accuracy_std,
        summary.f1_mean,
        summary.f1_std,
        summary.folds.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn train_folds<T: Scalar>(run: &RunManifest, records: &[SubjectRecord<T>], out: &Path) -> Result<CvSummary> {
    let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
    let folds = kfold_split(&labels, run.folds, run.train.seed, run.stratify)?;
    let mut metrics: Vec<FoldMetrics> = Vec::with_capacity(folds.len());
    for fold in &folds {
        let i = fold.index;
        let mut progress = |line: &str| {
            if line.contains("val_") {
                eprintln!("fold {i}: {line}");
            }
        };
        let outcome = run_fold(&run.model, &run.train, records, fold, &mut progress)?;
        write_text(&out.join(&run.artifacts.logs[i]), &outcome.report.to_log())?;
        save_checkpoint(out.join(&run.artifacts.checkpoints[i]), &outcome.network, run.train.seed + i as u64)?;
        eprintln!(
            "fold {i}: test accuracy {:.4}, F1 {:.4} (best epoch {:?})",
            outcome.metrics.accuracy, outcome.metrics.f1, outcome.metrics.best_epoch
        );
        metrics.push(outcome.metrics);
    }
    Ok(summarize(metrics))
}

fn cmd_eval(a: EvalArgs) -> Result<ExitCode> {
    let (network, _) = load_checkpoint::<f32>(&a.checkpoint)?;
    let crop = a.crop_length.map_or(network.config.crop_length, |v| v as usize);
    let records = load_records(&a.data, crop)?;
    let dims = records[0].series.dims();
    let cfg = &network.config;
    let [d, h, w] = cfg.input_spatial;
    if dims[1..] != [cfg.input_channels, d, h, w] {
        return Err(Error::Data(format!(
            "checkpoint expects volumes [C, D, H, W] = {:?}, dataset has {:?}",
            [cfg.input_channels, d, h, w],
            &dims[1..]
        )));
    }
    let refs: Vec<&SubjectRecord<f32>> = records.iter().collect();
    let predictions = predict(&network, &refs, crop, a.workers)?;
    let m = metrics(
        &predictions.iter().map(|p| p.probabilities.clone()).collect::<Vec<_>>(),
        &predictions.iter().map(|p| p.label).collect::<Vec<_>>(),
    )?;
    let summary = EvalSummary {
        checkpoint: a.checkpoint.clone(),
        accuracy: m.accuracy,
        f1: m.f1,
        predictions,
    };
    let text = to_toml(&summary)?;
    match &a.out {
        Some(path) => {
            write_text(path, &text)?;
            println!("accuracy {:.4}, F1 {:.4}", m.accuracy, m.f1);
        }
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<ExitCode> {
    let reports = match &a.component {
        Some(c) => vec![check_component(c, a.seed)?],
        None => check_all(a.seed)?,
    };
    let mut ok = true;
    for r in &reports {
        println!(
            "{:<14} max rel err {:.3e} over {:>4} scalars (worst: {}) {}",
            r.component,
            r.max_rel_error,
            r.scalars_checked,
            r.worst,
            if r.passed { "ok" } else { "FAIL" }
        );
        ok &= r.passed;
    }
    println!("tolerance {TOLERANCE:e}: {}", if ok { "all passed" } else { "FAILED" });
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_GRADCHECK)
    })
}
