//! `promiseval`: featurize, tune, train, predict, submit and evaluate.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use promise_core::config::{PipelineConfig, DEFAULT_SEED};
use promise_core::corpus::{
    holdout_split, load_corpus, save_corpus, stratified_kfold, LabelSelector, RecordRow,
    SchemaMode, SplitManifest, Subtask,
};
use promise_core::eval::{assemble_submission, evaluate, read_submission, write_submission};
use promise_core::inference::{predict_all, Prediction};
use promise_core::net::{ModelKind, PromiseModel};
use promise_core::synth::{generate, SynthConfig};
use promise_core::trainer::{
    select_best, train_final, train_multitask, train_single_task, tune, TrialResult,
};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "promiseval", version, about = "Promise verification for ESG report text")]
struct Cli {
    /// Seed for splits, training and augmentation [default: 42, or the config's seed]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pipeline configuration (YAML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Base,
    Feature,
    Combined,
}

impl From<Kind> for ModelKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Base => ModelKind::Base,
            Kind::Feature => ModelKind::Feature,
            Kind::Combined => ModelKind::Combined,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Prepend feature tags and write records with an `enriched_text` field
    Featurize {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        subtask: u8,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stratified k-fold split manifest, or a train/validation holdout
    Split {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Stratify by this subtask; default is the joint promise/evidence label
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        subtask: Option<u8>,
        #[arg(long, default_value_t = 4)]
        k: usize,
        /// Write a holdout split with this training fraction instead of folds
        #[arg(long)]
        holdout: Option<f64>,
    },
    /// Hyperparameter search with cross-validation; writes a JSON-lines trial log
    Tune {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        subtask: u8,
        #[arg(long, value_enum, default_value = "feature")]
        model: Kind,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write a checkpoint directory
    Train {
        #[arg(long, value_enum)]
        model: Kind,
        /// Required for base and feature models
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        subtask: Option<u8>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Trial log from `tune`; retrains the best trial on all records
        #[arg(long)]
        trials: Option<PathBuf>,
    },
    /// Predict with test-time augmentation; writes JSON-lines predictions
    Predict {
        /// Checkpoint directory
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        tta_passes: Option<usize>,
        #[arg(long)]
        word_dropout: Option<f64>,
    },
    /// Merge predictions into a submission CSV
    Submit {
        /// Predictions for subtasks 1 and 2
        #[arg(long)]
        combined: PathBuf,
        /// Predictions for subtasks 3 and 4 (repeatable)
        #[arg(long, required = true)]
        feature: Vec<PathBuf>,
        /// Records that define the submission ids and order
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a submission CSV against gold records
    Evaluate {
        #[arg(long)]
        submission: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Also write the full report as JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic labelled corpus
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value = "syn")]
        id_prefix: String,
    },
}

fn subtask(n: u8) -> Subtask {
    Subtask::from_number(n).expect("clap restricts the range")
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    Ok(match (cli.seed, config.seed) {
        (Some(seed), _) => config.with_seed(seed),
        (None, Some(_)) => config,
        (None, None) => config.with_seed(DEFAULT_SEED),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct EnrichedRow {
    #[serde(flatten)]
    row: RecordRow,
    enriched_text: String,
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    match cli.command {
        Command::Featurize { subtask: n, input, out } => {
            let featurizer = config.featurizer()?;
            let records = load_corpus(&input, SchemaMode::Permissive)?;
            let rows = records
                .iter()
                .map(|r| {
                    Ok(EnrichedRow {
                        row: RecordRow::from_record(r),
                        enriched_text: featurizer.enrich_record(subtask(n), r)?,
                    })
                })
                .collect::<promise_core::Result<Vec<_>>>()?;
            write_jsonl(&out, rows)?;
            info!("featurized {} records for {}", records.len(), subtask(n));
        }
        Command::Split { input, out, subtask: n, k, holdout } => {
            let records = load_corpus(&input, SchemaMode::Strict)?;
            let selector = n.map_or(LabelSelector::PromiseEvidence, |n| LabelSelector::Subtask(subtask(n)));
            let seed = config.schedule.seed;
            let json = match holdout {
                Some(fraction) => {
                    let (train, val) = holdout_split(&records, fraction, selector, seed)?;
                    serde_json::json!({ "seed": seed, "train": train, "val": val })
                }
                None => serde_json::to_value(SplitManifest::new(seed, &stratified_kfold(&records, k, selector, seed)?))?,
            };
            let mut w = create(&out)?;
            serde_json::to_writer_pretty(&mut w, &json)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        Command::Tune { subtask: n, model, input, out } => {
            let kind = ModelKind::from(model);
            if kind == ModelKind::Combined {
                bail!(promise_core::Error::InvalidArgument(
                    "tuning applies to base and feature models".into()
                ));
            }
            let featurizer = config.featurizer()?;
            let records = load_corpus(&input, SchemaMode::Strict)?;
            let model_config = config.model_config(kind, Some(subtask(n)))?;
            let mut log = create(&out)?;
            let mut io_error = None;
            let trials = tune(&records, &model_config, &featurizer, &config.cv, |t| {
                info!(
                    "trial {}: lr {:.2e}, batch {}, wd {:.3}, mean validation loss {:.4}",
                    t.config.trial_index,
                    t.config.learning_rate,
                    t.config.batch_size,
                    t.config.weight_decay,
                    t.mean_validation_loss
                );
                let written = serde_json::to_writer(&mut log, t)
                    .map_err(anyhow::Error::from)
                    .and_then(|_| log.write_all(b"\n").and_then(|_| log.flush()).map_err(Into::into));
                if let Err(e) = written {
                    io_error.get_or_insert(e);
                }
            })?;
            if let Some(e) = io_error {
                return Err(e.context(format!("cannot write {}", out.display())));
            }
            if let Some(best) = select_best(&trials) {
                println!(
                    "best trial {}: lr {:.2e}, batch {}, wd {:.3}, loss {:.4}",
                    best.config.trial_index,
                    best.config.learning_rate,
                    best.config.batch_size,
                    best.config.weight_decay,
                    best.mean_validation_loss
                );
            }
        }
        Command::Train { model, subtask: n, input, out, trials } => {
            let kind = ModelKind::from(model);
            let featurizer = config.featurizer()?;
            let records = load_corpus(&input, SchemaMode::Strict)?;
            let model_config = config.model_config(kind, n.map(subtask))?;
            let mut metrics = BTreeMap::new();
            let (trained, training) = match (kind, trials) {
                (ModelKind::Combined, trials) => {
                    if trials.is_some() {
                        warn!("--trials is ignored for the combined model");
                    }
                    let outcome = train_multitask(&records, &model_config, &config.schedule, &featurizer)?;
                    let best = &outcome.history[outcome.best_epoch - 1];
                    metrics.insert("validation_promise_f1".into(), best.promise_f1);
                    metrics.insert("validation_evidence_f1".into(), best.evidence_f1);
                    metrics.insert("validation_mean_f1".into(), best.mean_f1);
                    println!(
                        "best epoch {}: promise F1 {:.4}, evidence F1 {:.4}",
                        best.epoch, best.promise_f1, best.evidence_f1
                    );
                    let training = serde_json::json!({
                        "schedule": config.schedule,
                        "best_epoch": outcome.best_epoch,
                        "history": outcome.history,
                    });
                    (outcome.model, training)
                }
                (_, Some(log)) => {
                    let history: Vec<TrialResult> = read_jsonl(&log)?;
                    let Some(best) = select_best(&history) else {
                        bail!(promise_core::Error::InvalidArgument(format!("{} has no trials", log.display())));
                    };
                    let fit = train_final(&records, best, &model_config, &featurizer, &config.cv)?;
                    if let Some(last) = fit.history.last() {
                        metrics.insert("final_train_loss".into(), last.mean_loss);
                    }
                    let training = serde_json::json!({
                        "trial": best,
                        "epochs": fit.epochs,
                        "history": fit.history,
                    });
                    (fit.model, training)
                }
                (_, None) => {
                    let fit = train_single_task(&records, &model_config, &config.schedule, &featurizer)?;
                    if let Some(last) = fit.history.last() {
                        metrics.insert("final_train_loss".into(), last.mean_loss);
                    }
                    let training = serde_json::json!({
                        "schedule": config.schedule,
                        "history": fit.history,
                    });
                    (fit.model, training)
                }
            };
            trained.save(&out, metrics, training)?;
            println!("checkpoint written to {}", out.display());
        }
        Command::Predict { model, input, out, tta_passes, word_dropout } => {
            let (model, _) = PromiseModel::load(&model)?;
            let featurizer = config.featurizer()?;
            let mut tta = config.tta.clone();
            if let Some(n) = tta_passes {
                tta.n_passes = n;
            }
            if let Some(rate) = word_dropout {
                tta.word_dropout_rate = rate;
            }
            let records = load_corpus(&input, SchemaMode::Permissive)?;
            let predictions = predict_all(&records, &model, &featurizer, &tta)?;
            write_jsonl(&out, &predictions)?;
            info!("wrote {} predictions", predictions.len());
        }
        Command::Submit { combined, feature, records, out } => {
            let records = load_corpus(&records, SchemaMode::Permissive)?;
            let pred_12: Vec<Prediction> = read_jsonl(&combined)?;
            let mut pred_34 = Vec::new();
            for path in &feature {
                pred_34.extend(read_jsonl::<Prediction>(path)?);
            }
            let rows = assemble_submission(&pred_12, &pred_34, &records, &config.placeholders)?;
            let mut w = create(&out)?;
            write_submission(&mut w, &rows)?;
            w.flush()?;
            println!("{} rows written to {}", rows.len(), out.display());
        }
        Command::Evaluate { submission, gold, out } => {
            let file = File::open(&submission).with_context(|| format!("cannot open {}", submission.display()))?;
            let rows = read_submission(BufReader::new(file))?;
            let gold = load_corpus(&gold, SchemaMode::Permissive)?;
            let report = evaluate(&rows, &gold)?;
            for s in &report.subtasks {
                println!("{:<24} F1 {:.4} (n = {})", s.subtask.field(), s.f1, s.support);
            }
            println!("{:<24} {:.4}", "mean", report.mean_f1);
            if let Some(path) = out {
                let mut w = create(&path)?;
                serde_json::to_writer_pretty(&mut w, &report)?;
                w.write_all(b"\n")?;
                w.flush()?;
            }
        }
        Command::Synth { out, n, id_prefix } => {
            let records = generate(&SynthConfig {
                n_records: n,
                seed: config.schedule.seed,
                id_prefix,
                ..SynthConfig::default()
            });
            save_corpus(&out, &records)?;
            println!("{} records written to {}", records.len(), out.display());
        }
    }
    Ok(())
}

/// 2 for bad input, 1 for anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<promise_core::Error>() {
            return if e.is_validation() { 2 } else { 1 };
        }
        if cause.is::<serde_json::Error>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

