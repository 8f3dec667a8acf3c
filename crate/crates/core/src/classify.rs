//! Linear stand-in classifier over TF-IDF features of the composed text.
//!
//! Single-label tasks use a softmax head with cross-entropy, multi-label tasks
//! independent sigmoids with binary cross-entropy. Training is mini-batch
//! gradient descent with a linearly decaying learning rate (no warmup, no
//! weight decay), global gradient-norm clipping, and early stopping on
//! validation micro-F1.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::truncate_tokens;
use crate::corpus::TaskKind;
use crate::error::{Error, Result};
use crate::evaluate;
use crate::fingerprint;
use crate::retrieval::{SparseVector, TfidfParams, TfidfVectorizer};

/// Frozen vocabulary applied to model inputs cut to the model length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub vectorizer: TfidfVectorizer,
    pub max_input_tokens: usize,
}

impl FeatureMap {
    pub fn build<S: AsRef<str>>(texts: &[S], params: TfidfParams, max_input_tokens: usize) -> Result<Self> {
        let cut: Vec<String> = texts.iter().map(|t| truncate_tokens(t.as_ref(), max_input_tokens)).collect();
        Ok(Self {
            vectorizer: TfidfVectorizer::fit(&cut, params)?,
            max_input_tokens,
        })
    }

    pub fn num_features(&self) -> usize {
        self.vectorizer.num_terms()
    }

    pub fn transform(&self, text: &str) -> SparseVector {
        self.vectorizer.transform(&truncate_tokens(text, self.max_input_tokens))
    }
}

/// Featurize `texts`; out-of-vocabulary terms are dropped.
pub fn featurize<S: AsRef<str> + Sync>(texts: &[S], map: &FeatureMap) -> Vec<SparseVector> {
    texts.par_iter().map(|t| map.transform(t.as_ref())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size_train: usize,
    pub batch_size_eval: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub grad_clip_norm: f64,
    pub multilabel_threshold: f64,
    pub features: TfidfParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            batch_size_train: 32,
            batch_size_eval: 64,
            patience: 3,
            max_epochs: 30,
            seed: 13,
            grad_clip_norm: 1.0,
            multilabel_threshold: 0.5,
            features: TfidfParams {
                min_df: 1,
                max_df: 1.0,
                sublinear_tf: true,
                max_ngram: 2,
                max_features: Some(100_000),
            },
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config("patience and max_epochs must be at least 1".into()));
        }
        if self.batch_size_train == 0 || self.batch_size_eval == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if !(self.grad_clip_norm > 0.0) {
            return Err(Error::Config("grad_clip_norm must be positive".into()));
        }
        Ok(())
    }
}

/// Weights (`features x classes`, row-major) and per-class bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub n_features: usize,
    pub n_classes: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearParams {
    pub fn zeros(n_features: usize, n_classes: usize) -> Self {
        Self {
            n_features,
            n_classes,
            weights: vec![0.0; n_features * n_classes],
            bias: vec![0.0; n_classes],
        }
    }

    pub fn logits(&self, x: &SparseVector) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (f, v) in x.iter() {
            let row = &self.weights[f as usize * self.n_classes..(f as usize + 1) * self.n_classes];
            for (zc, w) in z.iter_mut().zip(row) {
                *zc += v * w;
            }
        }
        z
    }

    fn apply(&mut self, grad: &Gradient, step: f64) {
        for (&f, row) in &grad.rows {
            let dst = &mut self.weights[f as usize * self.n_classes..(f as usize + 1) * self.n_classes];
            for (w, g) in dst.iter_mut().zip(row) {
                *w -= step * g;
            }
        }
        for (b, g) in self.bias.iter_mut().zip(&grad.bias) {
            *b -= step * g;
        }
    }
}

/// Gradient restricted to the feature rows a batch touches.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub rows: BTreeMap<u32, Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Gradient {
    pub fn norm(&self) -> f64 {
        let rows: f64 = self.rows.values().flatten().map(|g| g * g).sum();
        let bias: f64 = self.bias.iter().map(|g| g * g).sum();
        (rows + bias).sqrt()
    }

    /// Rescale to at most `max_norm`; returns the resulting norm.
    pub fn clip(&mut self, max_norm: f64) -> f64 {
        let norm = self.norm();
        if norm > max_norm {
            let scale = max_norm / norm;
            self.rows.values_mut().flatten().for_each(|g| *g *= scale);
            self.bias.iter_mut().for_each(|g| *g *= scale);
            max_norm
        } else {
            norm
        }
    }

    /// Dense `features x classes` weight gradient.
    pub fn dense_weights(&self, n_features: usize, n_classes: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_features * n_classes];
        for (&f, row) in &self.rows {
            out[f as usize * n_classes..(f as usize + 1) * n_classes].copy_from_slice(row);
        }
        out
    }
}

/// A featurized training example; `target` holds class indices (exactly one
/// for single-label tasks, possibly none for multi-label).
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: SparseVector,
    pub target: Vec<usize>,
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(z);
    z.iter().map(|v| (v - lse).exp()).collect()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean batch loss and its gradient.
pub fn loss_and_gradient(params: &LinearParams, batch: &[&Example], task: TaskKind) -> (f64, Gradient) {
    let c = params.n_classes;
    let mut rows: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let mut bias = vec![0.0; c];
    let mut loss = 0.0;
    let scale = 1.0 / batch.len().max(1) as f64;

    for ex in batch {
        let z = params.logits(&ex.features);
        let mut dz = vec![0.0; c];
        match task {
            TaskKind::SingleLabel => {
                let y = ex.target[0];
                let lse = log_sum_exp(&z);
                loss += lse - z[y];
                for (k, d) in dz.iter_mut().enumerate() {
                    *d = (z[k] - lse).exp();
                }
                dz[y] -= 1.0;
            }
            TaskKind::MultiLabel => {
                for (k, d) in dz.iter_mut().enumerate() {
                    let y = ex.target.contains(&k) as u8 as f64;
                    loss += softplus(z[k]) - y * z[k];
                    *d = sigmoid(z[k]) - y;
                }
            }
        }
        for (b, d) in bias.iter_mut().zip(&dz) {
            *b += d * scale;
        }
        for (f, v) in ex.features.iter() {
            let row = rows.entry(f).or_insert_with(|| vec![0.0; c]);
            for (r, d) in row.iter_mut().zip(&dz) {
                *r += v * d * scale;
            }
        }
    }
    (loss * scale, Gradient { rows, bias })
}

/// Outcome of one early-stopping observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stop once the metric has failed to improve for `patience` epochs in a row.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            best_epoch: 0,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, metric: f64) -> StopDecision {
        if self.best.is_none_or(|b| metric > b) {
            self.best = Some(metric);
            self.best_epoch = epoch;
            self.stale = 0;
            return StopDecision::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }
}

const MODEL_FORMAT: &str = "sra-linear-model/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub format: String,
    pub task: TaskKind,
    pub labels: Vec<String>,
    pub feature_map: FeatureMap,
    pub params: LinearParams,
    pub multilabel_threshold: f64,
    pub batch_size_eval: usize,
    pub config_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub labels: Vec<String>,
    /// Softmax probabilities or per-class sigmoids, in `model.labels` order.
    pub scores: Vec<f64>,
}

impl ClassifierModel {
    pub fn predict_features(&self, x: &SparseVector) -> Prediction {
        let z = self.params.logits(x);
        match self.task {
            TaskKind::SingleLabel => {
                let probs = softmax(&z);
                let mut best = 0;
                for (k, &v) in z.iter().enumerate() {
                    if v > z[best] {
                        best = k;
                    }
                }
                Prediction {
                    labels: vec![self.labels[best].clone()],
                    scores: probs,
                }
            }
            TaskKind::MultiLabel => {
                let scores: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
                let labels = scores
                    .iter()
                    .zip(&self.labels)
                    .filter(|(s, _)| **s >= self.multilabel_threshold)
                    .map(|(_, l)| l.clone())
                    .collect();
                Prediction { labels, scores }
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, self)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let model: Self = serde_json::from_reader(BufReader::new(file))?;
        if model.format != MODEL_FORMAT {
            return Err(Error::InvalidInput(format!("unsupported model format `{}`", model.format)));
        }
        Ok(model)
    }
}

/// Predict in evaluation-sized chunks.
pub fn predict<S: AsRef<str> + Sync>(model: &ClassifierModel, texts: &[S]) -> Vec<Prediction> {
    texts
        .par_chunks(model.batch_size_eval.max(1))
        .flat_map_iter(|chunk| {
            chunk
                .iter()
                .map(|t| model.predict_features(&model.feature_map.transform(t.as_ref())))
                .collect::<Vec<_>>()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_micro_f1: f64,
    /// Largest post-clipping gradient norm over the epoch's steps.
    pub max_clipped_grad_norm: f64,
    pub clipped_steps: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ClassifierModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// A labeled text as fed to the classifier.
#[derive(Debug, Clone, Copy)]
pub struct LabeledText<'a> {
    pub text: &'a str,
    pub labels: &'a [String],
}

fn to_examples(texts: &[LabeledText<'_>], map: &FeatureMap, labels: &[String]) -> Result<Vec<Example>> {
    let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let features = featurize(&texts.iter().map(|t| t.text).collect::<Vec<_>>(), map);
    features
        .into_iter()
        .zip(texts)
        .map(|(features, t)| {
            let target = t
                .labels
                .iter()
                .map(|l| {
                    index
                        .get(l.as_str())
                        .copied()
                        .ok_or_else(|| Error::InvalidInput(format!("label `{l}` is not in the label vocabulary")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Example { features, target })
        })
        .collect()
}

/// Build the feature map on `train`, then fit the linear head with early
/// stopping on `val` micro-F1. Returns the best epoch's weights.
pub fn train(
    train: &[LabeledText<'_>],
    val: &[LabeledText<'_>],
    labels: &[String],
    task: TaskKind,
    max_input_tokens: usize,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Training("training and validation splits must be non-empty".into()));
    }
    if labels.is_empty() {
        return Err(Error::Training("empty label vocabulary".into()));
    }
    if task == TaskKind::SingleLabel {
        if let Some(bad) = train.iter().chain(val).find(|t| t.labels.len() != 1) {
            return Err(Error::Training(format!("single-label example with {} labels", bad.labels.len())));
        }
    }

    let train_texts: Vec<&str> = train.iter().map(|t| t.text).collect();
    let feature_map = FeatureMap::build(&train_texts, config.features, max_input_tokens)?;
    let train_ex = to_examples(train, &feature_map, labels)?;
    let val_ex = to_examples(val, &feature_map, labels)?;
    let val_gold: Vec<Vec<String>> = val.iter().map(|t| t.labels.to_vec()).collect();

    let mut model = ClassifierModel {
        format: MODEL_FORMAT.into(),
        task,
        labels: labels.to_vec(),
        params: LinearParams::zeros(feature_map.num_features(), labels.len()),
        feature_map,
        multilabel_threshold: config.multilabel_threshold,
        batch_size_eval: config.batch_size_eval,
        config_fingerprint: fingerprint::of(config),
    };

    let steps_per_epoch = train_ex.len().div_ceil(config.batch_size_train);
    let total_steps = (steps_per_epoch * config.max_epochs) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_ex.len()).collect();
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best_params = model.params.clone();
    let mut history = Vec::new();
    let mut step = 0usize;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut max_norm: f64 = 0.0;
        let mut clipped_steps = 0;
        for chunk in order.chunks(config.batch_size_train) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train_ex[i]).collect();
            let (loss, mut grad) = loss_and_gradient(&model.params, &batch, task);
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss {loss} at epoch {epoch}, step {step} (learning rate {})",
                    config.learning_rate
                )));
            }
            let raw = grad.norm();
            let clipped = grad.clip(config.grad_clip_norm);
            clipped_steps += (raw > config.grad_clip_norm) as usize;
            max_norm = max_norm.max(clipped);
            let lr = config.learning_rate * (1.0 - step as f64 / total_steps);
            model.params.apply(&grad, lr);
            loss_sum += loss * batch.len() as f64;
            step += 1;
        }

        let preds: Vec<Vec<String>> = val_ex
            .par_chunks(config.batch_size_eval)
            .flat_map_iter(|chunk| chunk.iter().map(|ex| model.predict_features(&ex.features).labels).collect::<Vec<_>>())
            .collect();
        let val_micro = evaluate::micro_f1(&val_gold, &preds);
        history.push(EpochRecord {
            epoch,
            mean_loss: loss_sum / train_ex.len() as f64,
            val_micro_f1: val_micro,
            max_clipped_grad_norm: max_norm,
            clipped_steps,
        });
        match stopper.observe(epoch, val_micro) {
            StopDecision::Improved => best_params = model.params.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }

    model.params = best_params;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch: stopper.best_epoch(),
    })
}
