//! Experiment orchestration: baseline / full / selective arms, cutoff sweeps,
//! run comparison and per-sample inspection.
//!
//! A run directory holds:
//!
//! ```text
//! manifest.toml                  resolved configuration
//! report.json                    validation/test metrics, coverage, history
//! model.json                     classifier archive
//! predictions.{validation,test}.jsonl
//! augmented/{train,validation,test}.jsonl
//! low_set.json                   selective arm only
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{
    augment_split, compose, read_augmented, write_augmented, AugmentedHeader, AugmentedSample, CoverageStats,
    Eligibility, RetrieverState,
};
use crate::classify::{self, ClassifierModel, EpochRecord, LabeledText};
use crate::config::{Arm, ProviderKind, RunConfig, SelectionMetric};
use crate::corpus::{length_percentiles, load_dataset, Dataset, FrequencyTable, Split, TaskKind};
use crate::error::{Error, Result, StageExt};
use crate::evaluate::{self, bucketed_macro_f1, f1_scores, ComparisonReport, CompareParams, CoverageRow, EvalReport};
use crate::longtail::{bucketize, select_low_frequency, BucketAssignment, LowFrequencySet, SelectionPolicy};
use crate::retrieval::{EmbeddingProvider, HashedTrigramProvider, PrecomputedProvider, Retriever};

/// Loaded dataset plus lazily built retrieval state, shared by every arm and
/// cutoff evaluated from one configuration.
pub struct Pipeline {
    config: RunConfig,
    dataset: Dataset,
    freq: FrequencyTable,
    buckets: BucketAssignment,
    provider: OnceLock<Box<dyn EmbeddingProvider>>,
    retriever: OnceLock<Retriever>,
}

impl Pipeline {
    pub fn prepare(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let dataset = load_dataset(&config.dataset, config.task).stage("load")?;
        Self::with_dataset(config, dataset)
    }

    pub fn with_dataset(config: RunConfig, dataset: Dataset) -> Result<Self> {
        config.validate()?;
        if dataset.task() != config.task {
            return Err(Error::Config("dataset task differs from config task".into()));
        }
        let freq = dataset.frequency_table();
        let buckets = bucketize(&freq, &config.bucket_fractions)?;
        Ok(Self {
            config,
            dataset,
            freq,
            buckets,
            provider: OnceLock::new(),
            retriever: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn frequency_table(&self) -> &FrequencyTable {
        &self.freq
    }

    pub fn buckets(&self) -> &BucketAssignment {
        &self.buckets
    }

    fn provider(&self) -> Result<&dyn EmbeddingProvider> {
        if let Some(p) = self.provider.get() {
            return Ok(p.as_ref());
        }
        let built: Box<dyn EmbeddingProvider> = match self.config.provider {
            ProviderKind::HashedTrigram => Box::new(HashedTrigramProvider::new(
                self.config.embedding_dim,
                self.config.embedding_seed,
                self.config.max_seq_tokens,
            )),
            ProviderKind::File => Box::new(PrecomputedProvider::load(&self.config.embeddings)?),
        };
        Ok(self.provider.get_or_init(|| built).as_ref())
    }

    /// Sparse index and train embeddings, built on first use.
    pub fn retriever(&self) -> Result<&Retriever> {
        if let Some(r) = self.retriever.get() {
            return Ok(r);
        }
        let train: Vec<(&str, &str)> = self
            .dataset
            .split(Split::Train)
            .map(|s| (s.id.as_str(), s.text.as_str()))
            .collect();
        let built = Retriever::build(
            &train,
            self.config.tfidf_params(),
            self.provider()?,
            self.config.retrieval_params(),
        )?;
        Ok(self.retriever.get_or_init(|| built))
    }

    pub fn low_set(&self, policy: SelectionPolicy) -> Result<LowFrequencySet> {
        select_low_frequency(&self.freq, policy)
    }

    pub fn eligibility(&self, arm: Arm) -> Result<Eligibility> {
        Ok(match arm {
            Arm::Baseline => Eligibility::Nothing,
            Arm::Full => Eligibility::Everything,
            Arm::Sra => Eligibility::Selective {
                low: self.low_set(self.config.selection_policy())?,
                gate: self.config.gate,
            },
        })
    }

    /// Augment all three splits under `eligibility`.
    pub fn augment(&self, eligibility: &Eligibility) -> Result<AugmentedSplits> {
        let config = self.config.augmentation_config();
        let mut splits = Vec::with_capacity(3);
        for split in Split::ALL {
            let out = if *eligibility == Eligibility::Nothing {
                // Baseline never touches retrieval state.
                let samples: Vec<AugmentedSample> =
                    self.dataset.split(split).map(|s| compose(s, &[], &config)).collect();
                let stats = CoverageStats {
                    total: samples.len(),
                    ..CoverageStats::default()
                };
                (samples, stats)
            } else {
                let state = RetrieverState {
                    retriever: self.retriever()?,
                    provider: self.provider()?,
                };
                augment_split(&self.dataset, split, eligibility, &state, &config)?
            };
            splits.push(out);
        }
        let mut it = splits.into_iter();
        let (train, train_cov) = it.next().unwrap();
        let (validation, val_cov) = it.next().unwrap();
        let (test, test_cov) = it.next().unwrap();
        Ok(AugmentedSplits {
            train,
            validation,
            test,
            coverage: SplitCoverage {
                train: train_cov,
                validation: val_cov,
                test: test_cov,
            },
        })
    }

    pub fn run_arm(&self, arm: Arm) -> Result<RunOutcome> {
        let eligibility = self.eligibility(arm).stage("select")?;
        let mut manifest = self.config.clone();
        manifest.arm = arm;
        self.run_with(eligibility, manifest)
    }

    /// Selective run at cutoff `alpha`; 0 means nothing is augmented.
    pub fn run_cutoff(&self, alpha: f64) -> Result<RunOutcome> {
        let mut manifest = self.config.clone();
        if alpha == 0.0 {
            manifest.arm = Arm::Baseline;
            return self.run_with(Eligibility::Nothing, manifest);
        }
        manifest.arm = Arm::Sra;
        manifest.policy = crate::config::PolicyKind::Cutoff;
        manifest.alpha = alpha;
        let low = self.low_set(SelectionPolicy::cutoff(alpha)).stage("select")?;
        self.run_with(
            Eligibility::Selective {
                low,
                gate: self.config.gate,
            },
            manifest,
        )
    }

    fn run_with(&self, eligibility: Eligibility, manifest: RunConfig) -> Result<RunOutcome> {
        let augmented = self.augment(&eligibility).stage("augment")?;
        let to_labeled = |samples: &[AugmentedSample]| -> Vec<(String, Vec<String>)> {
            samples
                .iter()
                .map(|s| (s.composed_text.clone(), s.base.labels.clone()))
                .collect()
        };
        let train_rows = to_labeled(&augmented.train);
        let val_rows = to_labeled(&augmented.validation);
        let outcome = classify::train(
            &as_labeled(&train_rows),
            &as_labeled(&val_rows),
            self.dataset.label_vocab(),
            self.dataset.task(),
            self.config.max_model_length,
            &self.config.train_config(),
        )
        .stage("train")?;

        let validation = self.predict_split(&outcome.model, &augmented.validation);
        let test = self.predict_split(&outcome.model, &augmented.test);
        let val_report = self.report(&validation).stage("evaluate")?;
        let test_report = self.report(&test).stage("evaluate")?;

        let mut pooled = augmented.coverage.train.clone();
        pooled.merge(&augmented.coverage.validation);
        pooled.merge(&augmented.coverage.test);

        let report = RunReport {
            task: self.dataset.task(),
            labels: self.dataset.label_vocab().to_vec(),
            test_fingerprint: self.dataset.split_fingerprint(Split::Test),
            buckets: self.buckets.clone(),
            validation: val_report,
            test: test_report,
            coverage: augmented.coverage.clone(),
            pooled_coverage: pooled.coverage(),
            pooled_mean_similarity: pooled.mean_similarity(),
            best_epoch: outcome.best_epoch,
            history: outcome.history,
        };
        Ok(RunOutcome {
            manifest,
            eligibility,
            augmented,
            model: outcome.model,
            validation_predictions: validation,
            test_predictions: test,
            report,
        })
    }

    fn predict_split(&self, model: &ClassifierModel, samples: &[AugmentedSample]) -> Vec<PredictionRecord> {
        let texts: Vec<&str> = samples.iter().map(|s| s.composed_text.as_str()).collect();
        classify::predict(model, &texts)
            .into_iter()
            .zip(samples)
            .map(|(p, s)| PredictionRecord {
                id: s.base.id.clone(),
                gold: s.base.labels.clone(),
                predicted: p.labels,
                scores: p.scores,
            })
            .collect()
    }

    fn report(&self, predictions: &[PredictionRecord]) -> Result<EvalReport> {
        let gold: Vec<Vec<String>> = predictions.iter().map(|p| p.gold.clone()).collect();
        let pred: Vec<Vec<String>> = predictions.iter().map(|p| p.predicted.clone()).collect();
        let mut report = f1_scores(&gold, &pred, self.dataset.label_vocab())?;
        report.buckets = bucketed_macro_f1(&report, &self.buckets);
        Ok(report)
    }

    /// Run the selective arm at every cutoff and pick the best on validation.
    pub fn sweep(&self, cutoffs: &[f64]) -> Result<SweepOutcome> {
        if cutoffs.len() < 2 {
            return Err(Error::Config("a sweep needs at least two cutoffs".into()));
        }
        if let Some(bad) = cutoffs.iter().find(|&&c| !(0.0..=1.0).contains(&c)) {
            return Err(Error::Config(format!("cutoff {bad} outside [0, 1]")));
        }
        let mut sorted = cutoffs.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        if sorted.iter().any(|&c| c > 0.0) {
            // build shared retrieval state once before fanning out
            self.retriever()?;
        }
        let runs: Vec<RunOutcome> = sorted.par_iter().map(|&c| self.run_cutoff(c)).collect::<Result<_>>()?;

        let metric = |r: &EvalReport| match self.config.selection_metric {
            SelectionMetric::MacroF1 => r.macro_f1,
            SelectionMetric::MicroF1 => r.micro_f1,
        };
        let mut selected = 0;
        for (i, run) in runs.iter().enumerate() {
            if metric(&run.report.validation) > metric(&runs[selected].report.validation) {
                selected = i;
            }
        }
        let rows = sorted
            .iter()
            .zip(&runs)
            .enumerate()
            .map(|(i, (&cutoff, run))| SweepRow {
                cutoff,
                coverage: run.report.pooled_coverage,
                mean_similarity: run.report.pooled_mean_similarity,
                validation_micro_f1: run.report.validation.micro_f1,
                validation_macro_f1: run.report.validation.macro_f1,
                test_micro_f1: run.report.test.micro_f1,
                test_macro_f1: run.report.test.macro_f1,
                selected: i == selected,
            })
            .collect();
        let report = SweepReport {
            selection_metric: self.config.selection_metric,
            selected_cutoff: sorted[selected],
            rows,
            selected_test: runs[selected].report.test.clone(),
        };
        Ok(SweepOutcome { report, runs })
    }

    /// Dataset summary: label counts, empty shares, bucket table and token
    /// length percentiles per split.
    pub fn analyze(&self) -> Result<AnalyzeReport> {
        let mut split_sizes = BTreeMap::new();
        let mut length_pct = BTreeMap::new();
        for split in Split::ALL {
            let lengths: Vec<usize> = self.dataset.split(split).map(|s| s.text.split_whitespace().count()).collect();
            split_sizes.insert(split, lengths.len());
            length_pct.insert(split, length_percentiles(&lengths, &self.config.percentiles)?);
        }
        let buckets = self
            .buckets
            .buckets
            .iter()
            .map(|b| {
                let freqs: Vec<u64> = b.labels.iter().map(|l| self.freq.count(l)).collect();
                BucketSummary {
                    name: b.name.clone(),
                    classes: freqs.len(),
                    avg_frequency: if freqs.is_empty() {
                        0.0
                    } else {
                        freqs.iter().sum::<u64>() as f64 / freqs.len() as f64
                    },
                    min_frequency: freqs.iter().copied().min(),
                    max_frequency: freqs.iter().copied().max(),
                }
            })
            .collect();
        Ok(AnalyzeReport {
            task: self.dataset.task(),
            split_sizes,
            num_labels: self.freq.num_labels(),
            frequency: self.freq.clone(),
            empty_shares: (self.dataset.task() == TaskKind::MultiLabel).then(|| self.dataset.empty_shares()),
            buckets,
            token_length_percentiles: length_pct,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCoverage {
    pub train: CoverageStats,
    pub validation: CoverageStats,
    pub test: CoverageStats,
}

#[derive(Debug, Clone)]
pub struct AugmentedSplits {
    pub train: Vec<AugmentedSample>,
    pub validation: Vec<AugmentedSample>,
    pub test: Vec<AugmentedSample>,
    pub coverage: SplitCoverage,
}

impl AugmentedSplits {
    pub fn get(&self, split: Split) -> &[AugmentedSample] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn all(&self) -> impl Iterator<Item = &AugmentedSample> {
        self.train.iter().chain(&self.validation).chain(&self.test)
    }

    /// Write the three split files plus `low_set.json` for selective runs.
    pub fn write(&self, dir: &Path, eligibility: &Eligibility, config: &RunConfig) -> Result<()> {
        let aug_dir = dir.join("augmented");
        fs::create_dir_all(&aug_dir).map_err(|e| Error::io(&aug_dir, e))?;
        let low = match eligibility {
            Eligibility::Selective { low, .. } => Some(low),
            _ => None,
        };
        for split in Split::ALL {
            let header = AugmentedHeader {
                split,
                eligibility: eligibility.clone(),
                low_set_fingerprint: low.map(LowFrequencySet::fingerprint),
                config: config.augmentation_config(),
            };
            write_augmented(aug_dir.join(format!("{split}.jsonl")), &header, self.get(split))?;
        }
        if let Some(low) = low {
            write_text(&dir.join("low_set.json"), &low.to_json())?;
        }
        write_json(&dir.join("coverage.json"), &self.coverage)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub gold: Vec<String>,
    pub predicted: Vec<String>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task: TaskKind,
    pub labels: Vec<String>,
    pub test_fingerprint: String,
    pub buckets: BucketAssignment,
    pub validation: EvalReport,
    pub test: EvalReport,
    pub coverage: SplitCoverage,
    pub pooled_coverage: f64,
    pub pooled_mean_similarity: Option<f64>,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run report serializes")
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunConfig,
    pub eligibility: Eligibility,
    pub augmented: AugmentedSplits,
    pub model: ClassifierModel,
    pub validation_predictions: Vec<PredictionRecord>,
    pub test_predictions: Vec<PredictionRecord>,
    pub report: RunReport,
}

impl RunOutcome {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_text(&dir.join("manifest.toml"), &self.manifest.to_toml())?;
        write_text(&dir.join("report.json"), &self.report.to_json())?;
        self.model.save(dir.join("model.json"))?;
        write_jsonl(&dir.join("predictions.validation.jsonl"), &self.validation_predictions)?;
        write_jsonl(&dir.join("predictions.test.jsonl"), &self.test_predictions)?;
        self.augmented.write(dir, &self.eligibility, &self.manifest)
    }

    pub fn gold_and_predictions(&self) -> (Vec<Vec<String>>, Vec<Vec<String>>) {
        split_predictions(&self.test_predictions)
    }
}

fn as_labeled(rows: &[(String, Vec<String>)]) -> Vec<LabeledText<'_>> {
    rows.iter()
        .map(|(t, l)| LabeledText {
            text: t.as_str(),
            labels: l.as_slice(),
        })
        .collect()
}

fn split_predictions(records: &[PredictionRecord]) -> (Vec<Vec<String>>, Vec<Vec<String>>) {
    records.iter().map(|p| (p.gold.clone(), p.predicted.clone())).unzip()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cutoff: f64,
    pub coverage: f64,
    pub mean_similarity: Option<f64>,
    pub validation_micro_f1: f64,
    pub validation_macro_f1: f64,
    pub test_micro_f1: f64,
    pub test_macro_f1: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub selection_metric: SelectionMetric,
    pub selected_cutoff: f64,
    pub rows: Vec<SweepRow>,
    pub selected_test: EvalReport,
}

impl SweepReport {
    pub fn coverage_rows(&self) -> Vec<CoverageRow> {
        self.rows
            .iter()
            .map(|r| CoverageRow {
                cutoff: r.cutoff,
                coverage: r.coverage,
                mean_similarity: r.mean_similarity,
            })
            .collect()
    }

    /// `cutoff,coverage,mean_similarity,micro_f1,macro_f1` with test or
    /// validation metrics.
    pub fn to_csv(&self, split: Split) -> String {
        let mut out = String::from("cutoff,coverage,mean_similarity,micro_f1,macro_f1\n");
        for r in &self.rows {
            let (micro, macro_) = match split {
                Split::Validation => (r.validation_micro_f1, r.validation_macro_f1),
                _ => (r.test_micro_f1, r.test_macro_f1),
            };
            let sim = r.mean_similarity.map(|s| s.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{}\n", r.cutoff, r.coverage, sim, micro, macro_));
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join("sweep.json"), self)?;
        write_text(&dir.join("sweep.csv"), &self.to_csv(Split::Test))?;
        write_text(&dir.join("sweep.validation.csv"), &self.to_csv(Split::Validation))
    }
}

pub struct SweepOutcome {
    pub report: SweepReport,
    pub runs: Vec<RunOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketSummary {
    pub name: String,
    pub classes: usize,
    pub avg_frequency: f64,
    pub min_frequency: Option<u64>,
    pub max_frequency: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub task: TaskKind,
    pub split_sizes: BTreeMap<Split, usize>,
    pub num_labels: usize,
    pub frequency: FrequencyTable,
    pub empty_shares: Option<BTreeMap<Split, f64>>,
    pub buckets: Vec<BucketSummary>,
    pub token_length_percentiles: BTreeMap<Split, Vec<(f64, usize)>>,
}

/// Compare two in-memory runs (B against A) on their shared test split.
pub fn compare_outcomes(a: &RunOutcome, b: &RunOutcome, params: &CompareParams) -> Result<ComparisonReport> {
    compare_records(&a.report, &a.test_predictions, &b.report, &b.test_predictions, params)
}

fn compare_records(
    report_a: &RunReport,
    preds_a: &[PredictionRecord],
    report_b: &RunReport,
    preds_b: &[PredictionRecord],
    params: &CompareParams,
) -> Result<ComparisonReport> {
    if report_a.test_fingerprint != report_b.test_fingerprint || report_a.labels != report_b.labels {
        return Err(Error::Validation("runs were evaluated on different test splits".into()));
    }
    let ids_match = preds_a.len() == preds_b.len() && preds_a.iter().zip(preds_b).all(|(x, y)| x.id == y.id);
    if !ids_match {
        return Err(Error::Validation("prediction files are not aligned".into()));
    }
    let (gold, pred_a) = split_predictions(preds_a);
    let (_, pred_b) = split_predictions(preds_b);
    let mut params = *params;
    params.mcnemar &= report_a.task == TaskKind::SingleLabel;
    evaluate::compare(&gold, &pred_a, &pred_b, &report_a.labels, Some(&report_a.buckets), &params)
}

/// Compare two run directories written by [`RunOutcome::write`].
pub fn compare_runs(dir_a: &Path, dir_b: &Path, params: &CompareParams) -> Result<ComparisonReport> {
    let (report_a, preds_a) = load_run(dir_a)?;
    let (report_b, preds_b) = load_run(dir_b)?;
    compare_records(&report_a, &preds_a, &report_b, &preds_b, params)
}

fn load_run(dir: &Path) -> Result<(RunReport, Vec<PredictionRecord>)> {
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let report: RunReport = serde_json::from_str(&text)?;
    let preds = read_jsonl(&dir.join("predictions.test.jsonl"))?;
    Ok((report, preds))
}

/// Case-study view of one sample: original text, retrieved clauses with their
/// dense scores, gold labels and each run's prediction.
pub fn inspect(run_dir: &Path, sample_id: &str, other: Option<&Path>) -> Result<String> {
    let mut all: Vec<AugmentedSample> = Vec::new();
    for split in Split::ALL {
        let (_, samples) = read_augmented(run_dir.join("augmented").join(format!("{split}.jsonl")))?;
        all.extend(samples);
    }
    let Some(sample) = all.iter().find(|s| s.base.id == sample_id) else {
        let nearest = nearest_ids(all.iter().map(|s| s.base.id.as_str()), sample_id, 5);
        return Err(Error::InvalidInput(format!(
            "unknown sample id `{sample_id}`; nearest ids: {}",
            nearest.join(", ")
        )));
    };
    let text_of = |id: &str| all.iter().find(|s| s.base.id == id).map(|s| s.base.text.clone());

    let mut out = String::new();
    out.push_str(&format!("id:         {} ({})\n", sample.base.id, sample.base.split));
    out.push_str(&format!("gold:       {}\n", fmt_labels(&sample.base.labels)));
    out.push_str(&format!("original:   {}\n", sample.base.text));
    if sample.was_augmented {
        for (pick, score) in sample.picks.iter().zip(&sample.pick_scores) {
            out.push_str(&format!(
                "retrieved:  [{pick}, similarity {score:.4}] {}\n",
                text_of(pick).unwrap_or_default()
            ));
        }
    } else {
        match sample.skip_reason {
            Some(reason) => out.push_str(&format!("retrieved:  not augmented (skipped: {})\n", reason.as_str())),
            None => out.push_str("retrieved:  not augmented\n"),
        }
    }
    out.push_str(&format!("tokens:     {} (truncation: {:?})\n", sample.token_count, sample.truncation_applied));

    let mut runs = vec![("this run", run_dir)];
    if let Some(o) = other {
        runs.push(("other run", o));
    }
    for (name, dir) in runs {
        let file = dir.join(format!("predictions.{}.jsonl", sample.base.split));
        let line = if sample.base.split == Split::Train {
            "n/a (train split)".to_owned()
        } else {
            let preds: Vec<PredictionRecord> = read_jsonl(&file)?;
            preds
                .iter()
                .find(|p| p.id == sample_id)
                .map(|p| fmt_labels(&p.predicted))
                .unwrap_or_else(|| "missing".into())
        };
        out.push_str(&format!("predicted ({name}): {line}\n"));
    }
    Ok(out)
}

fn fmt_labels(labels: &[String]) -> String {
    if labels.is_empty() {
        "(empty)".into()
    } else {
        labels.join(", ")
    }
}

/// Ids sharing the longest prefix with `query`, best first.
pub fn nearest_ids<'a>(ids: impl Iterator<Item = &'a str>, query: &str, n: usize) -> Vec<String> {
    let mut scored: Vec<(usize, &str)> = ids
        .map(|id| {
            let shared = id.chars().zip(query.chars()).take_while(|(a, b)| a == b).count();
            (shared, id)
        })
        .collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    scored.into_iter().take(n).map(|(_, id)| id.to_owned()).collect()
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_text(path, &text)
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
