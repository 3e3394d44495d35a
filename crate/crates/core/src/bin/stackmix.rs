//! Command-line front end: preprocess | train | ensemble | evaluate | predict
//! over `id<TAB>label<TAB>text` TSV files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stackmix::config::RunConfig;
use stackmix::dataio::{
    self, load_tsv, EncodedExample, LabeledDataset, Vocabulary,
};
use stackmix::ensemble::{is_ensemble_file, StackingEnsemble};
use stackmix::metrics;
use stackmix::models::{argmax, train_model, Model, TrainReport};
use stackmix::textprep::{run_pipeline, PipelineConfig};
use stackmix::{Error, Result};

#[derive(Parser)]
#[command(
    name = "stackmix",
    about = "Normalize code-mixed tweets, train CNN/LSTM/attention classifiers, \
             stack them, and evaluate with macro metrics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// key=value run configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the normalization pipeline over a TSV and write the token stream
    Preprocess {
        /// Input TSV (id<TAB>label<TAB>text)
        input: PathBuf,
        /// Output TSV path
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Train a single model (config must contain a `model.kind`)
    Train {
        /// Labeled training TSV
        input: PathBuf,
        /// Model output path; reports go to <out>.report.{txt,json}
        #[arg(long)]
        out: PathBuf,
        /// Optional separate validation TSV (otherwise a seeded 90/10 split)
        #[arg(long)]
        val: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Train a stacking ensemble (config must contain model1..modelT sections)
    Ensemble {
        /// Labeled training TSV
        input: PathBuf,
        /// Ensemble output path; reports go to <out>.report.{txt,json}
        #[arg(long)]
        out: PathBuf,
        /// Optional separate validation TSV (otherwise a seeded 90/10 split)
        #[arg(long)]
        val: Option<PathBuf>,
        /// Maximum concurrently-training base models
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Score a model or ensemble on a labeled TSV
    Evaluate {
        /// Labeled TSV
        input: PathBuf,
        /// Saved model (MXS1) or ensemble (MXE1) file
        #[arg(long)]
        model: PathBuf,
        /// Also write the report here (text) and alongside as JSON
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Predict labels for a TSV (labels may be `_`)
    Predict {
        /// Input TSV
        input: PathBuf,
        /// Saved model (MXS1) or ensemble (MXE1) file
        #[arg(long)]
        model: PathBuf,
        /// Output TSV: id<TAB>predicted_label<TAB>probabilities
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_run_config(common: &CommonOpts) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn tokenize_dataset(ds: &LabeledDataset, pipeline: &PipelineConfig) -> Result<Vec<Vec<String>>> {
    ds.examples
        .iter()
        .map(|ex| run_pipeline(&ex.text, pipeline))
        .collect()
}

/// Encode a dataset against a fixed vocabulary and label list.
fn encode_dataset(
    ds: &LabeledDataset,
    pipeline: &PipelineConfig,
    vocab: &Vocabulary,
    labels: &[String],
    max_len: usize,
    require_labels: bool,
) -> Result<Vec<EncodedExample>> {
    let mut out = Vec::with_capacity(ds.len());
    for ex in &ds.examples {
        let tokens = run_pipeline(&ex.text, pipeline)?;
        let mut enc = dataio::encode(&tokens, vocab, max_len)?;
        enc.label_index = match &ex.label {
            Some(l) => Some(labels.iter().position(|x| x == l).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "label `{l}` (example {}) is not among the model's classes {labels:?}",
                    ex.id
                ))
            })?),
            None if require_labels => {
                return Err(Error::InvalidArgument(format!(
                    "example {} is unlabeled (`_`), but labels are required",
                    ex.id
                )))
            }
            None => None,
        };
        out.push(enc);
    }
    Ok(out)
}

struct Prepared {
    vocab: Vocabulary,
    labels: Vec<String>,
    train: Vec<EncodedExample>,
    val: Vec<EncodedExample>,
    class_counts: Vec<usize>,
}

/// Load, normalize, build the vocabulary, encode, and split.
fn prepare(
    input: &Path,
    val_path: Option<&Path>,
    cfg: &RunConfig,
    pipeline: &PipelineConfig,
) -> Result<Prepared> {
    let full = load_tsv(input, cfg.has_header)?;
    if full.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "training file {} has no examples",
            input.display()
        )));
    }
    let tokenizer = |text: &str| -> Vec<String> {
        run_pipeline(text, pipeline).unwrap_or_default()
    };
    let vocab = dataio::build_vocabulary(&full, &tokenizer, cfg.min_count)?;
    let labels = full.label_set.clone();
    if labels.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 distinct labels, found {labels:?}"
        )));
    }
    let (train_ds, val_ds) = match val_path {
        Some(p) => {
            let mut val = load_tsv(p, cfg.has_header)?;
            val.label_set = labels.clone();
            (full, val)
        }
        None => dataio::split(&full, cfg.train_fraction, cfg.seed)?,
    };
    let train = encode_dataset(&train_ds, pipeline, &vocab, &labels, cfg.max_len, true)?;
    let val = encode_dataset(&val_ds, pipeline, &vocab, &labels, cfg.max_len, true)?;
    let mut class_counts = vec![0usize; labels.len()];
    for ex in &train {
        class_counts[ex.label_index.unwrap()] += 1;
    }
    if class_counts.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "every class needs at least one training example, counts {class_counts:?}"
        )));
    }
    Ok(Prepared {
        vocab,
        labels,
        train,
        val,
        class_counts,
    })
}

fn load_pretrained(
    cfg: &RunConfig,
    vocab: &Vocabulary,
) -> Result<Option<dataio::EmbeddingTable>> {
    match &cfg.embeddings_path {
        Some(p) => Ok(Some(dataio::load_embeddings(
            p,
            vocab,
            cfg.embeddings_dim,
            cfg.seed,
        )?)),
        None => Ok(None),
    }
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content)
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn render_train_report(report: &TrainReport) -> String {
    let mut out = String::from(
        "epoch\ttrain_loss\ttrain_accuracy\tval_macro_f1\tval_macro_precision\t\
         val_macro_recall\tval_accuracy\n",
    );
    for (i, e) in report.epochs.iter().enumerate() {
        out.push_str(&format!(
            "{i}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
            e.train_loss,
            e.train_accuracy,
            e.val_macro_f1,
            e.val_macro_precision,
            e.val_macro_recall,
            e.val_accuracy
        ));
    }
    out.push_str(&format!("best_epoch={}\n", report.best_epoch));
    out.push_str(&format!(
        "merged_tail_batches={}\n",
        report.merged_tail_batches
    ));
    out
}

fn write_train_reports(out: &Path, report: &TrainReport) -> Result<()> {
    write_text(&suffixed(out, ".report.txt"), &render_train_report(report))?;
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::InvalidArgument(format!("encoding report: {e}")))?;
    write_text(&suffixed(out, ".report.json"), &json)
}

fn eval_scores(
    gold: &[usize],
    pred: &[usize],
    labels: &[String],
) -> Result<metrics::MacroScores> {
    let cm = metrics::confusion(gold, pred, labels)?;
    metrics::macro_scores(&cm)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess {
            input,
            out,
            common,
        } => {
            let cfg = load_run_config(&common)?;
            let pipeline = cfg.build_pipeline()?;
            let ds = load_tsv(&input, cfg.has_header)?;
            let token_lists = tokenize_dataset(&ds, &pipeline)?;
            let normalized = LabeledDataset {
                examples: ds
                    .examples
                    .iter()
                    .zip(token_lists)
                    .map(|(ex, tokens)| dataio::Example {
                        id: ex.id.clone(),
                        label: ex.label.clone(),
                        text: tokens.join(" "),
                    })
                    .collect(),
                label_set: ds.label_set.clone(),
            };
            dataio::write_tsv(&out, &normalized)?;
            println!("preprocessed {} examples -> {}", normalized.len(), out.display());
            Ok(())
        }
        Command::Train {
            input,
            out,
            val,
            common,
        } => {
            if common.config.is_none() {
                return Err(Error::Config("train requires --config".into()));
            }
            let cfg = load_run_config(&common)?;
            let pipeline = cfg.build_pipeline()?;
            let prepared = prepare(&input, val.as_deref(), &cfg, &pipeline)?;
            let model_cfg = cfg.model.to_model_config(
                prepared.vocab.len(),
                prepared.labels.len(),
                cfg.max_len,
            )?;
            let pretrained = load_pretrained(&cfg, &prepared.vocab)?;
            let model = Model::new(
                model_cfg,
                prepared.vocab.clone(),
                prepared.labels.clone(),
                cfg.seed,
                pretrained.as_ref(),
            )?;
            let loss = cfg.build_loss(&prepared.class_counts)?;
            let train_cfg = cfg.build_train_config(loss)?;
            let report = train_model(&model, &prepared.train, &prepared.val, &train_cfg)?;
            model.save(&out)?;
            write_train_reports(&out, &report)?;
            let best = &report.epochs[report.best_epoch];
            println!(
                "trained {:?} for {} epochs; best epoch {} val_macro_f1={:.4}; model -> {}",
                model.config.kind,
                report.epochs.len(),
                report.best_epoch,
                best.val_macro_f1,
                out.display()
            );
            Ok(())
        }
        Command::Ensemble {
            input,
            out,
            val,
            jobs,
            common,
        } => {
            if common.config.is_none() {
                return Err(Error::Config("ensemble requires --config".into()));
            }
            let cfg = load_run_config(&common)?;
            if cfg.models.is_empty() {
                return Err(Error::Config(
                    "ensemble requires model1..modelT sections in the config".into(),
                ));
            }
            let pipeline = cfg.build_pipeline()?;
            let prepared = prepare(&input, val.as_deref(), &cfg, &pipeline)?;
            let loss = cfg.build_loss(&prepared.class_counts)?;
            let train_cfg = cfg.build_train_config(loss)?;
            let configs: Vec<_> = cfg
                .models
                .iter()
                .map(|m| {
                    Ok((
                        m.to_model_config(
                            prepared.vocab.len(),
                            prepared.labels.len(),
                            cfg.max_len,
                        )?,
                        train_cfg.clone(),
                    ))
                })
                .collect::<Result<_>>()?;
            let (ens, reports) = StackingEnsemble::fit(
                &prepared.train,
                &prepared.val,
                &prepared.vocab,
                &prepared.labels,
                &configs,
                cfg.seed,
                cfg.ensemble_mode,
                jobs,
            )?;
            ens.save(&out)?;

            // combined report: one row per base model plus the ensemble
            let gold: Vec<usize> = prepared
                .val
                .iter()
                .map(|e| e.label_index.unwrap())
                .collect();
            let mut rows: Vec<(String, metrics::MacroScores)> = Vec::new();
            for (t, (model, _)) in ens.base.iter().zip(&reports).enumerate() {
                let pred = model.predict_labels(&prepared.val)?;
                rows.push((
                    format!("model{}.{:?}", t + 1, model.config.kind).to_lowercase(),
                    eval_scores(&gold, &pred, &prepared.labels)?,
                ));
            }
            let (pred, _) = ens.predict(&prepared.val)?;
            rows.push((
                "ensemble".to_string(),
                eval_scores(&gold, &pred, &prepared.labels)?,
            ));

            let mut txt = String::from(
                "name\tmacro_f1\tmacro_precision\tmacro_recall\taccuracy\n",
            );
            for (name, s) in &rows {
                txt.push_str(&format!(
                    "{name}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
                    s.macro_f1, s.macro_precision, s.macro_recall, s.accuracy
                ));
            }
            write_text(&suffixed(&out, ".report.txt"), &txt)?;
            let json_rows: Vec<serde_json::Value> = rows
                .iter()
                .map(|(name, s)| {
                    let mut v: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
                    v["name"] = serde_json::json!(name);
                    v
                })
                .collect();
            write_text(
                &suffixed(&out, ".report.json"),
                &serde_json::to_string_pretty(&json_rows).unwrap(),
            )?;
            print!("{txt}");
            println!("ensemble -> {}", out.display());
            Ok(())
        }
        Command::Evaluate {
            input,
            model,
            out,
            common,
        } => {
            let cfg = load_run_config(&common)?;
            let pipeline = cfg.build_pipeline()?;
            let ds = load_tsv(&input, cfg.has_header)?;
            if ds.is_empty() {
                return Err(Error::InvalidArgument("no examples to evaluate".into()));
            }
            let (gold_pred, labels): ((Vec<usize>, Vec<usize>), Vec<String>) =
                if is_ensemble_file(&model)? {
                    let ens = StackingEnsemble::load(&model)?;
                    let labels = ens.labels().to_vec();
                    let encoded = encode_dataset(
                        &ds,
                        &pipeline,
                        &ens.base[0].vocab,
                        &labels,
                        ens.base[0].config.max_len,
                        true,
                    )?;
                    let gold = encoded.iter().map(|e| e.label_index.unwrap()).collect();
                    let (pred, _) = ens.predict(&encoded)?;
                    ((gold, pred), labels)
                } else {
                    let m = Model::load(&model)?;
                    let labels = m.labels.clone();
                    let encoded = encode_dataset(
                        &ds,
                        &pipeline,
                        &m.vocab,
                        &labels,
                        m.config.max_len,
                        true,
                    )?;
                    let gold = encoded.iter().map(|e| e.label_index.unwrap()).collect();
                    let pred = m.predict_labels(&encoded)?;
                    ((gold, pred), labels)
                };
            let scores = eval_scores(&gold_pred.0, &gold_pred.1, &labels)?;
            print!("{}", scores.to_key_values());
            if let Some(out) = out {
                write_text(&out, &scores.to_key_values())?;
                write_text(&suffixed(&out, ".json"), &scores.to_json())?;
            }
            Ok(())
        }
        Command::Predict {
            input,
            model,
            out,
            common,
        } => {
            let cfg = load_run_config(&common)?;
            let pipeline = cfg.build_pipeline()?;
            let ds = load_tsv(&input, cfg.has_header)?;
            let (rows, labels): (Vec<Vec<f64>>, Vec<String>) = if is_ensemble_file(&model)? {
                let ens = StackingEnsemble::load(&model)?;
                let labels = ens.labels().to_vec();
                let encoded = encode_dataset(
                    &ds,
                    &pipeline,
                    &ens.base[0].vocab,
                    &labels,
                    ens.base[0].config.max_len,
                    false,
                )?;
                let (_, probs) = ens.predict(&encoded)?;
                (probs, labels)
            } else {
                let m = Model::load(&model)?;
                let labels = m.labels.clone();
                let encoded =
                    encode_dataset(&ds, &pipeline, &m.vocab, &labels, m.config.max_len, false)?;
                (m.predict_proba(&encoded)?, labels)
            };
            let mut text = String::new();
            for (ex, row) in ds.examples.iter().zip(&rows) {
                let probs: Vec<String> = row.iter().map(|p| format!("{p:.9}")).collect();
                text.push_str(&format!(
                    "{}\t{}\t{}\n",
                    ex.id,
                    labels[argmax(row)],
                    probs.join(",")
                ));
            }
            write_text(&out, &text)?;
            println!("predicted {} examples -> {}", rows.len(), out.display());
            Ok(())
        }
    }
}
