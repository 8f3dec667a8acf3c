//! Flat key-value run configuration.
//!
//! A config file is a flat TOML table. Every field has a default, and the
//! resolved configuration (defaults included) is written next to each run as
//! its manifest, so `sra run --config <run>/manifest.toml` repeats the run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::{AugmentationConfig, EvalGating};
use crate::classify::TrainConfig;
use crate::corpus::TaskKind;
use crate::error::{Error, Result};
use crate::evaluate::CompareParams;
use crate::longtail::{Gate, SelectionPolicy};
use crate::retrieval::{RetrievalParams, TfidfParams};
use crate::text::Tokenizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    Baseline,
    Full,
    Sra,
}

impl std::str::FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Arm::Baseline),
            "full" => Ok(Arm::Full),
            "sra" => Ok(Arm::Sra),
            other => Err(Error::Config(format!("unknown arm `{other}` (baseline, full, sra)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Cutoff,
    NonEmpty,
    Threshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    HashedTrigram,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMetric {
    MacroF1,
    MicroF1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub task: TaskKind,
    pub arm: Arm,

    pub policy: PolicyKind,
    pub alpha: f64,
    pub threshold: u64,
    pub gate: Gate,

    pub top_n: usize,
    pub top_m: usize,
    pub k: usize,
    pub tfidf_min_df: usize,
    pub tfidf_max_df: f64,
    pub provider: ProviderKind,
    /// Precomputed embedding file, used when `provider = "file"`.
    pub embeddings: PathBuf,
    pub embedding_dim: usize,
    pub embedding_seed: u64,
    pub max_seq_tokens: usize,

    pub clause_token_cap: usize,
    pub max_model_length: usize,
    pub prompt_orig: String,
    pub prompt_ref: String,
    pub separator: String,
    pub eval_gating: EvalGating,

    pub learning_rate: f64,
    pub batch_size_train: usize,
    pub batch_size_eval: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub grad_clip_norm: f64,
    pub multilabel_threshold: f64,
    pub feature_min_df: usize,
    pub feature_max_df: f64,
    /// 0 keeps every feature.
    pub feature_max_features: usize,

    pub resamples: usize,
    pub level: f64,
    pub bucket_fractions: Vec<f64>,
    pub top_k: usize,
    pub selection_metric: SelectionMetric,
    pub percentiles: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let aug = AugmentationConfig::default();
        let train = TrainConfig::default();
        let retrieval = RetrievalParams::default();
        let tfidf = TfidfParams::default();
        Self {
            dataset: PathBuf::from("data.jsonl"),
            task: TaskKind::SingleLabel,
            arm: Arm::Sra,
            policy: PolicyKind::Cutoff,
            alpha: 0.65,
            threshold: 76,
            gate: Gate::AnyLabel,
            top_n: retrieval.top_n,
            top_m: retrieval.top_m,
            k: retrieval.k,
            tfidf_min_df: tfidf.min_df,
            tfidf_max_df: tfidf.max_df,
            provider: ProviderKind::HashedTrigram,
            embeddings: PathBuf::new(),
            embedding_dim: 256,
            embedding_seed: 0x5eed,
            max_seq_tokens: 256,
            clause_token_cap: aug.clause_token_cap,
            max_model_length: aug.max_model_length,
            prompt_orig: aug.prompt_orig,
            prompt_ref: aug.prompt_ref,
            separator: aug.separator,
            eval_gating: aug.eval_gating,
            learning_rate: train.learning_rate,
            batch_size_train: train.batch_size_train,
            batch_size_eval: train.batch_size_eval,
            patience: train.patience,
            max_epochs: train.max_epochs,
            seed: train.seed,
            grad_clip_norm: train.grad_clip_norm,
            multilabel_threshold: train.multilabel_threshold,
            feature_min_df: train.features.min_df,
            feature_max_df: train.features.max_df,
            feature_max_features: train.features.max_features.unwrap_or(0),
            resamples: 10_000,
            level: 0.95,
            bucket_fractions: vec![0.1, 0.4, 0.5],
            top_k: 5,
            selection_metric: SelectionMetric::MacroF1,
            percentiles: vec![0.5, 0.95, 0.99],
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Read a config file; relative paths inside it resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml_str(&text)?;
        if let Some(dir) = path.parent() {
            config.resolve_paths(dir);
        }
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if self.dataset.is_relative() {
            self.dataset = base.join(&self.dataset);
        }
        if !self.embeddings.as_os_str().is_empty() && self.embeddings.is_relative() {
            self.embeddings = base.join(&self.embeddings);
        }
    }

    /// Apply a `key=value` override; the value is read as a TOML value and
    /// falls back to a bare string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        let key = key.trim();
        let raw = raw.trim();
        let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
        let mut table: toml::Table = toml::from_str(&self.to_toml()).map_err(|e| Error::Config(e.to_string()))?;
        if !table.contains_key(key) {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
        table.insert(key.to_owned(), value);
        *self = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn selection_policy(&self) -> SelectionPolicy {
        match self.policy {
            PolicyKind::Cutoff => SelectionPolicy::cutoff(self.alpha),
            PolicyKind::NonEmpty => SelectionPolicy::non_empty(),
            PolicyKind::Threshold => SelectionPolicy::threshold(self.threshold),
        }
    }

    pub fn retrieval_params(&self) -> RetrievalParams {
        RetrievalParams {
            top_n: self.top_n,
            top_m: self.top_m,
            k: self.k,
        }
    }

    pub fn tfidf_params(&self) -> TfidfParams {
        TfidfParams {
            min_df: self.tfidf_min_df,
            max_df: self.tfidf_max_df,
            ..TfidfParams::default()
        }
    }

    pub fn augmentation_config(&self) -> AugmentationConfig {
        AugmentationConfig {
            clause_token_cap: self.clause_token_cap,
            max_model_length: self.max_model_length,
            prompt_orig: self.prompt_orig.clone(),
            prompt_ref: self.prompt_ref.clone(),
            separator: self.separator.clone(),
            tokenizer: Tokenizer::Whitespace,
            eval_gating: self.eval_gating,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size_train: self.batch_size_train,
            batch_size_eval: self.batch_size_eval,
            patience: self.patience,
            max_epochs: self.max_epochs,
            seed: self.seed,
            grad_clip_norm: self.grad_clip_norm,
            multilabel_threshold: self.multilabel_threshold,
            features: TfidfParams {
                min_df: self.feature_min_df,
                max_df: self.feature_max_df,
                sublinear_tf: true,
                max_ngram: 2,
                max_features: (self.feature_max_features > 0).then_some(self.feature_max_features),
            },
        }
    }

    pub fn compare_params(&self) -> CompareParams {
        CompareParams {
            resamples: self.resamples,
            level: self.level,
            seed: self.seed,
            top_k: self.top_k,
            mcnemar: self.task == TaskKind::SingleLabel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.arm == Arm::Sra {
            self.selection_policy().validate(self.task)?;
        }
        self.retrieval_params().validate()?;
        self.augmentation_config().validate()?;
        self.train_config().validate()?;
        if self.provider == ProviderKind::File && self.embeddings.as_os_str().is_empty() {
            return Err(Error::Config("provider = \"file\" needs an `embeddings` path".into()));
        }
        Ok(())
    }
}
