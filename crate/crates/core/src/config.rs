//! Flat `key=value` run configuration shared by the CLI commands: pipeline
//! settings, resource paths, data handling, training hyperparameters, and
//! one or more model sections (`model.kind=...` or `model1.kind=...`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::ensemble::MetaMode;
use crate::models::{ModelConfig, ModelKind, OutputHead, TrainConfig};
use crate::nn::FocalLossConfig;
use crate::spellcheck::FrequencyLexicon;
use crate::textprep::{PipelineConfig, ResourceTable, Step, Stemmer, StopList};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassWeighting {
    Uniform,
    InverseFrequency,
}

/// Per-model overrides; unset fields fall back to the kind's defaults.
#[derive(Debug, Clone, Default)]
pub struct ModelSettings {
    pub kind: Option<ModelKind>,
    pub embed_dim: Option<usize>,
    pub units: Option<usize>,
    pub dense: Option<Vec<usize>>,
    pub dropout: Option<f64>,
    pub filter_widths: Option<Vec<usize>>,
    pub filters_per_width: Option<usize>,
    pub output: Option<OutputHead>,
}

impl ModelSettings {
    pub fn to_model_config(
        &self,
        vocab_size: usize,
        num_classes: usize,
        max_len: usize,
    ) -> Result<ModelConfig> {
        let kind = self
            .kind
            .ok_or_else(|| Error::Config("model section is missing `kind`".into()))?;
        let mut cfg = ModelConfig::of_kind(kind, vocab_size, num_classes);
        cfg.max_len = max_len;
        if let Some(v) = self.embed_dim {
            cfg.embed_dim = v;
        }
        if let Some(v) = self.units {
            cfg.units = v;
        }
        if let Some(v) = &self.dense {
            cfg.dense = v.clone();
        }
        if let Some(v) = self.dropout {
            cfg.dropout = v;
        }
        if let Some(v) = &self.filter_widths {
            cfg.filter_widths = v.clone();
        }
        if let Some(v) = self.filters_per_width {
            cfg.filters_per_width = v;
        }
        if let Some(v) = self.output {
            cfg.output = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    // pipeline
    pub steps: Vec<Step>,
    pub max_repeat: usize,
    pub keep_unknown_emoji: bool,
    pub stemmer: Stemmer,
    // resource overrides (absent → built-in defaults)
    pub emoji_path: Option<PathBuf>,
    pub contractions_path: Option<PathBuf>,
    pub acronyms_path: Option<PathBuf>,
    pub stopwords_path: Option<PathBuf>,
    pub wordfreq_path: Option<PathBuf>,
    // data
    pub max_len: usize,
    pub min_count: u64,
    pub train_fraction: f64,
    pub has_header: bool,
    // embeddings
    pub embeddings_path: Option<PathBuf>,
    pub embeddings_dim: usize,
    // training
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub lr: f64,
    pub gamma: f64,
    pub class_weighting: ClassWeighting,
    // models
    pub model: ModelSettings,
    pub models: Vec<ModelSettings>,
    pub ensemble_mode: MetaMode,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            seed: 0,
            steps: Step::DEFAULT_ORDER.to_vec(),
            max_repeat: 2,
            keep_unknown_emoji: false,
            stemmer: Stemmer::English,
            emoji_path: None,
            contractions_path: None,
            acronyms_path: None,
            stopwords_path: None,
            wordfreq_path: None,
            max_len: 25,
            min_count: 1,
            train_fraction: 0.9,
            has_header: false,
            embeddings_path: None,
            embeddings_dim: 100,
            epochs: 20,
            batch_size: 32,
            patience: 5,
            lr: 1e-3,
            gamma: 2.0,
            class_weighting: ClassWeighting::InverseFrequency,
            model: ModelSettings::default(),
            models: Vec::new(),
            ensemble_mode: MetaMode::Insample,
        }
    }
}

fn parse_list<T: std::str::FromStr>(value: &str, key: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|_| Error::Config(format!("bad list element `{v}` for key `{key}`")))
        })
        .collect()
}

fn parse_scalar<T: std::str::FromStr>(value: &str, key: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| Error::Config(format!("bad value `{value}` for key `{key}`")))
}

fn parse_bool(value: &str, key: &str) -> Result<bool> {
    match value.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::Config(format!(
            "bad boolean `{other}` for key `{key}` (use true/false)"
        ))),
    }
}

impl RunConfig {
    /// Parse a config file; relative resource paths resolve against the
    /// file's directory and every referenced file must exist.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut sections: BTreeMap<usize, ModelSettings> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config(format!(
                "line {}: expected `key=value`, got `{line}`",
                i + 1
            )))?;
            let (key, value) = (key.trim(), value.trim());
            cfg.apply(key, value, base_dir, &mut sections)?;
        }
        if !sections.is_empty() {
            let expected: Vec<usize> = (1..=sections.len()).collect();
            let found: Vec<usize> = sections.keys().copied().collect();
            if found != expected {
                return Err(Error::Config(format!(
                    "model sections must be numbered 1..T without gaps, found {found:?}"
                )));
            }
            cfg.models = sections.into_values().collect();
        }
        cfg.check_resources()?;
        Ok(cfg)
    }

    fn apply(
        &mut self,
        key: &str,
        value: &str,
        base_dir: &Path,
        sections: &mut BTreeMap<usize, ModelSettings>,
    ) -> Result<()> {
        let path_of = |v: &str| -> PathBuf {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        };
        // numbered model sections, e.g. `model2.units=64`
        if let Some(rest) = key.strip_prefix("model") {
            if let Some((idx, field)) = rest.split_once('.') {
                if let Ok(idx) = idx.parse::<usize>() {
                    if idx == 0 {
                        return Err(Error::Config("model sections start at model1".into()));
                    }
                    let section = sections.entry(idx).or_default();
                    return apply_model_field(section, field, value, key);
                }
                if idx.is_empty() {
                    return apply_model_field(&mut self.model, field, value, key);
                }
            }
        }
        match key {
            "seed" => self.seed = parse_scalar(value, key)?,
            "pipeline.steps" => {
                self.steps = if value.is_empty() {
                    Vec::new()
                } else {
                    parse_list(value, key)?
                }
            }
            "pipeline.max_repeat" => self.max_repeat = parse_scalar(value, key)?,
            "pipeline.keep_unknown_emoji" => self.keep_unknown_emoji = parse_bool(value, key)?,
            "pipeline.stemmer" => self.stemmer = parse_scalar(value, key)?,
            "resources.emoji" => self.emoji_path = Some(path_of(value)),
            "resources.contractions" => self.contractions_path = Some(path_of(value)),
            "resources.acronyms" => self.acronyms_path = Some(path_of(value)),
            "resources.stopwords" => self.stopwords_path = Some(path_of(value)),
            "resources.wordfreq" => self.wordfreq_path = Some(path_of(value)),
            "data.max_len" => self.max_len = parse_scalar(value, key)?,
            "data.min_count" => self.min_count = parse_scalar(value, key)?,
            "data.train_fraction" => self.train_fraction = parse_scalar(value, key)?,
            "data.has_header" => self.has_header = parse_bool(value, key)?,
            "embeddings.path" => self.embeddings_path = Some(path_of(value)),
            "embeddings.dim" => self.embeddings_dim = parse_scalar(value, key)?,
            "train.epochs" => self.epochs = parse_scalar(value, key)?,
            "train.batch_size" => self.batch_size = parse_scalar(value, key)?,
            "train.patience" => self.patience = parse_scalar(value, key)?,
            "train.lr" => self.lr = parse_scalar(value, key)?,
            "train.gamma" => self.gamma = parse_scalar(value, key)?,
            "train.class_weights" => {
                self.class_weighting = match value {
                    "uniform" => ClassWeighting::Uniform,
                    "inverse_frequency" => ClassWeighting::InverseFrequency,
                    other => {
                        return Err(Error::Config(format!(
                            "bad class weighting `{other}` (uniform|inverse_frequency)"
                        )))
                    }
                }
            }
            "ensemble.mode" => self.ensemble_mode = value.parse()?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    fn check_resources(&self) -> Result<()> {
        for (name, path) in [
            ("resources.emoji", &self.emoji_path),
            ("resources.contractions", &self.contractions_path),
            ("resources.acronyms", &self.acronyms_path),
            ("resources.stopwords", &self.stopwords_path),
            ("resources.wordfreq", &self.wordfreq_path),
            ("embeddings.path", &self.embeddings_path),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::Config(format!(
                        "{name} refers to a missing file: {}",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn build_pipeline(&self) -> Result<PipelineConfig> {
        let mut pipeline = PipelineConfig::default_pipeline()?;
        pipeline.steps = self.steps.clone();
        pipeline.max_repeat = self.max_repeat;
        pipeline.keep_unknown_emoji = self.keep_unknown_emoji;
        pipeline.stemmer = self.stemmer;
        if let Some(p) = &self.emoji_path {
            pipeline.emoji = ResourceTable::load(p, false)?;
        }
        if let Some(p) = &self.contractions_path {
            pipeline.contractions = ResourceTable::load(p, true)?;
        }
        if let Some(p) = &self.acronyms_path {
            pipeline.acronyms = ResourceTable::load(p, true)?;
        }
        if let Some(p) = &self.stopwords_path {
            pipeline.stopwords = StopList::load(p)?;
        }
        if self.steps.contains(&Step::Spellcheck) {
            pipeline.lexicon = Some(match &self.wordfreq_path {
                Some(p) => FrequencyLexicon::load(p)?,
                None => FrequencyLexicon::parse(
                    crate::textprep::DEFAULT_WORDFREQ,
                    Path::new("builtin wordfreq"),
                )?,
            });
        }
        pipeline.validate()?;
        Ok(pipeline)
    }

    /// Focal loss from gamma and the configured weighting scheme.
    pub fn build_loss(&self, class_counts: &[usize]) -> Result<FocalLossConfig> {
        match self.class_weighting {
            ClassWeighting::Uniform => Ok(FocalLossConfig::uniform(class_counts.len(), self.gamma)),
            ClassWeighting::InverseFrequency => {
                FocalLossConfig::inverse_frequency(class_counts, self.gamma)
            }
        }
    }

    pub fn build_train_config(&self, loss: FocalLossConfig) -> Result<TrainConfig> {
        let mut tc = TrainConfig::new(loss, self.seed);
        tc.epochs = self.epochs;
        tc.batch_size = self.batch_size;
        tc.patience = self.patience;
        tc.adam.lr = self.lr;
        tc.validate()?;
        Ok(tc)
    }
}

fn apply_model_field(
    section: &mut ModelSettings,
    field: &str,
    value: &str,
    key: &str,
) -> Result<()> {
    match field {
        "kind" => section.kind = Some(value.parse()?),
        "embed_dim" => section.embed_dim = Some(parse_scalar(value, key)?),
        "units" => section.units = Some(parse_scalar(value, key)?),
        "dense" => section.dense = Some(parse_list(value, key)?),
        "dropout" => section.dropout = Some(parse_scalar(value, key)?),
        "filter_widths" => section.filter_widths = Some(parse_list(value, key)?),
        "filters_per_width" => section.filters_per_width = Some(parse_scalar(value, key)?),
        "output" => {
            section.output = Some(match value {
                "softmax" => OutputHead::Softmax,
                "sigmoid" => OutputHead::Sigmoid,
                other => {
                    return Err(Error::Config(format!(
                        "bad output head `{other}` (softmax|sigmoid)"
                    )))
                }
            })
        }
        other => {
            return Err(Error::Config(format!(
                "unknown model field `{other}` in key `{key}`"
            )))
        }
    }
    Ok(())
}
