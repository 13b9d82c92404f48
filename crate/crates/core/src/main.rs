use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use tmf_core::check::{run_checks, CheckOptions, Mutation, Scope};
use tmf_core::checkpoint::Checkpoint;
use tmf_core::config::RunConfig;
use tmf_core::metrics::EvalReport;
use tmf_core::model::{evaluate_condition, train, MetricsRow, NetworkSpec, TrainError, TrainMode, TrainState};
use tmf_core::synth::{build_corpus, read_jsonl, write_jsonl, DatasetConfig, NoiseCondition, SequenceSample};

#[derive(Parser)]
#[command(name = "tmf", version, about = "CTC + expected center loss training and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the train/valid/test corpus described by a config.
    GenData {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: paths.data from the config).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train, or resume from an unfinished checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Corpus directory (default: paths.data).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint file (default: paths.checkpoint).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Metrics CSV (default: paths.metrics).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on each noise condition of a corpus directory
    /// or a single JSONL file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// CSV destination (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the oracle and gradient verification suites.
    Check {
        /// all, ctc, losses or model.
        #[arg(long, default_value = "all")]
        scope: Scope,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug)]
enum Failure {
    Check(String),
    Config(String),
    Diverged(String),
    Shape(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Check(_) | Self::Other(_) => 1,
            Self::Config(_) => 2,
            Self::Diverged(_) => 3,
            Self::Shape(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Check(m) | Self::Config(m) | Self::Diverged(m) | Self::Shape(m) | Self::Other(m) => m,
        }
    }
}

fn other(e: impl std::fmt::Display) -> Failure {
    Failure::Other(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData { config, out, seed } => gen_data(&config, out, seed),
        Command::Train {
            config,
            data,
            checkpoint,
            out,
            seed,
        } => train_cmd(&config, data, checkpoint, out, seed),
        Command::Eval { checkpoint, data, out } => eval_cmd(&checkpoint, &data, out),
        Command::Check { scope, seed } => check_cmd(scope, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(path).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(seed) = seed {
        cfg = cfg.with_seed(seed);
    }
    Ok(cfg)
}

const TRAIN_FILE: &str = "train.jsonl";
const VALID_FILE: &str = "valid.jsonl";
const MANIFEST_FILE: &str = "manifest.json";

fn test_file(condition: NoiseCondition) -> String {
    format!("test_{condition}.jsonl")
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    data: DatasetConfig,
    files: BTreeMap<String, usize>,
}

fn gen_data(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<(), Failure> {
    let cfg = load_config(config, seed)?;
    let out = out.unwrap_or(cfg.paths.data.clone());
    let corpus = build_corpus(&cfg.data).map_err(|e| Failure::Config(e.to_string()))?;
    std::fs::create_dir_all(&out).map_err(other)?;
    let mut files = BTreeMap::new();
    let mut parts: Vec<(String, &[SequenceSample])> = vec![(TRAIN_FILE.into(), &corpus.train), (VALID_FILE.into(), &corpus.valid)];
    for c in NoiseCondition::ALL {
        parts.push((test_file(c), corpus.test(c)));
    }
    for (name, samples) in parts {
        write_jsonl(&out.join(&name), samples).map_err(other)?;
        println!("{name}: {} sequences", samples.len());
        files.insert(name, samples.len());
    }
    let manifest = Manifest {
        data: cfg.data.clone(),
        files,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(other)? + "\n";
    std::fs::write(out.join(MANIFEST_FILE), text).map_err(other)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn read_samples(path: &Path) -> Result<Vec<SequenceSample>, Failure> {
    if !path.exists() {
        return Err(Failure::Config(format!("{} does not exist", path.display())));
    }
    read_jsonl(path).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))
}

/// Every sample must fit the network input and its label space.
fn check_shapes(samples: &[SequenceSample], spec: &NetworkSpec, mode: TrainMode, source: &Path) -> Result<(), Failure> {
    let labels = if mode.is_temporal() {
        spec.num_classes - 1
    } else {
        spec.num_classes
    };
    for (i, s) in samples.iter().enumerate() {
        if s.features.ncols() != spec.input_dim {
            return Err(Failure::Shape(format!(
                "{} record {}: {} features per frame, network expects {}",
                source.display(),
                i + 1,
                s.features.ncols(),
                spec.input_dim
            )));
        }
        if let Some(&bad) = s.framewise.iter().find(|&&k| k == 0 || k > labels) {
            return Err(Failure::Shape(format!(
                "{} record {}: label {bad} outside 1..={labels} for a {mode} network",
                source.display(),
                i + 1
            )));
        }
    }
    Ok(())
}

fn train_cmd(
    config: &Path,
    data: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<(), Failure> {
    let cfg = load_config(config, seed)?;
    let data = data.unwrap_or(cfg.paths.data.clone());
    let checkpoint = checkpoint.unwrap_or(cfg.paths.checkpoint.clone());
    let metrics = out.unwrap_or(cfg.paths.metrics.clone());
    if !data.is_dir() {
        return Err(Failure::Config(format!("paths.data: {} is not a directory", data.display())));
    }
    let mode = cfg.mode();

    let train_set = read_samples(&data.join(TRAIN_FILE))?;
    let valid_set = read_samples(&data.join(VALID_FILE))?;
    check_shapes(&train_set, &cfg.network, mode, &data.join(TRAIN_FILE))?;
    check_shapes(&valid_set, &cfg.network, mode, &data.join(VALID_FILE))?;
    let mut monitors = Vec::new();
    for c in NoiseCondition::ALL {
        let path = data.join(test_file(c));
        if path.exists() {
            let samples = read_samples(&path)?;
            check_shapes(&samples, &cfg.network, mode, &path)?;
            monitors.push((c, samples));
        }
    }
    let monitors: Vec<(NoiseCondition, &[SequenceSample])> = monitors.iter().map(|(c, s)| (*c, s.as_slice())).collect();

    for path in [&checkpoint, &metrics] {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(other)?;
        }
    }
    let mut state = if checkpoint.exists() {
        let cp = Checkpoint::load(&checkpoint).map_err(|e| Failure::Config(e.to_string()))?;
        if cp.config != cfg.train || cp.state.network.spec() != &cfg.network {
            return Err(Failure::Config(format!(
                "{} was written by a run with a different train or network config",
                checkpoint.display()
            )));
        }
        if cp.state.finished {
            println!("{} is already finished", checkpoint.display());
            return Ok(());
        }
        println!("resuming from eval {} (batch {})", cp.state.evals, cp.state.batches_seen);
        truncate_metrics(&metrics, cp.state.evals)?;
        cp.state
    } else {
        write_metrics_header(&metrics)?;
        TrainState::new(cfg.network.clone(), &cfg.train).map_err(|e| Failure::Config(e.to_string()))?
    };

    let result = train(&mut state, &cfg.train, &train_set, &valid_set, &monitors, |s, row| {
        append_metrics(&metrics, row).map_err(|e| TrainError::Hook(e.message().to_owned()))?;
        Checkpoint::new(cfg.train.clone(), s.clone())
            .save(&checkpoint)
            .map_err(|e| TrainError::Hook(e.to_string()))?;
        println!(
            "eval {:>3} batch {:>6} lr {:.3e} loss {:.4} valid {:.4}",
            row.eval_index, row.batches_seen, row.learning_rate, row.train_loss, row.validation_score
        );
        Ok(())
    });
    match result {
        Ok(_) => {}
        Err(e @ TrainError::Diverged { .. }) => {
            let kept = if checkpoint.exists() {
                format!("last good checkpoint kept at {}", checkpoint.display())
            } else {
                "no checkpoint was written before the divergence".into()
            };
            return Err(Failure::Diverged(format!("{e}; {kept}")));
        }
        Err(e) => return Err(other(e)),
    }
    Checkpoint::new(cfg.train.clone(), state.clone())
        .save(&checkpoint)
        .map_err(other)?;
    println!("finished after {} batches; checkpoint {}", state.batches_seen, checkpoint.display());
    Ok(())
}

fn write_metrics_header(path: &Path) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(other)?;
    w.write_record(MetricsRow::COLUMNS).map_err(other)?;
    w.flush().map_err(other)
}

fn append_metrics(path: &Path, row: &MetricsRow) -> Result<(), Failure> {
    let file = OpenOptions::new().append(true).open(path).map_err(other)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(row.record()).map_err(other)?;
    w.flush().map_err(other)
}

/// Drops rows logged after the checkpoint being resumed, which can exist if
/// a run was killed between logging a row and saving its checkpoint.
fn truncate_metrics(path: &Path, evals: u64) -> Result<(), Failure> {
    if !path.exists() {
        return write_metrics_header(path);
    }
    let mut reader = csv::Reader::from_path(path).map_err(other)?;
    let mut keep = Vec::new();
    for record in reader.records() {
        let record = record.map_err(other)?;
        let eval: u64 = record
            .get(0)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| other(format!("{}: malformed row", path.display())))?;
        if eval <= evals {
            keep.push(record);
        }
    }
    let mut w = csv::Writer::from_path(path).map_err(other)?;
    w.write_record(MetricsRow::COLUMNS).map_err(other)?;
    for r in keep {
        w.write_record(&r).map_err(other)?;
    }
    w.flush().map_err(other)
}

fn eval_cmd(checkpoint: &Path, data: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let cp = Checkpoint::load(checkpoint).map_err(|e| Failure::Config(e.to_string()))?;
    let mode = cp.config.mode;
    let network = &cp.state.network;
    let mut sets: Vec<(NoiseCondition, Vec<SequenceSample>)> = Vec::new();
    if data.is_dir() {
        for c in NoiseCondition::ALL {
            let path = data.join(test_file(c));
            if path.exists() {
                sets.push((c, read_samples(&path)?));
            }
        }
        if sets.is_empty() {
            return Err(Failure::Config(format!("{} holds no test_*.jsonl files", data.display())));
        }
    } else {
        let samples = read_samples(data)?;
        for c in NoiseCondition::ALL {
            let group: Vec<SequenceSample> = samples.iter().filter(|s| s.condition == c).cloned().collect();
            if !group.is_empty() {
                sets.push((c, group));
            }
        }
        if sets.is_empty() {
            return Err(Failure::Config(format!("{} is empty", data.display())));
        }
    }
    for (_, samples) in &sets {
        check_shapes(samples, network.spec(), mode, data)?;
    }

    let sink: Box<dyn Write> = match &out {
        Some(path) => Box::new(File::create(path).map_err(other)?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["mode"];
    header.extend(EvalReport::COLUMNS);
    w.write_record(&header).map_err(other)?;
    for (c, samples) in &sets {
        let report = evaluate_condition(network, mode, samples, *c).map_err(other)?;
        let mut record = vec![mode.to_string()];
        record.extend(report.record());
        w.write_record(&record).map_err(other)?;
    }
    w.flush().map_err(other)
}

fn check_cmd(scope: Scope, seed: u64) -> Result<(), Failure> {
    let reports = run_checks(&CheckOptions {
        scope,
        seed,
        mutation: Mutation::None,
    })
    .map_err(other)?;
    for r in &reports {
        println!("{r}");
    }
    let failed = reports.iter().filter(|r| !r.passed()).count();
    if failed > 0 {
        return Err(Failure::Check(format!("{failed} of {} suites failed", reports.len())));
    }
    println!("all {} suites passed", reports.len());
    Ok(())
}
