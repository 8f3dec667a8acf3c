//! Labeled text datasets, train-split label statistics and length percentiles.
//!
//! Records are line-delimited JSON objects with `id`, `text`, `labels` and
//! `split` fields. Any other fields are carried through untouched so that a
//! load/save cycle never loses data.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::fingerprint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    #[serde(alias = "val", alias = "dev")]
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    SingleLabel,
    MultiLabel,
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single-label" | "single" => Ok(TaskKind::SingleLabel),
            "multi-label" | "multi" => Ok(TaskKind::MultiLabel),
            other => Err(Error::Config(format!(
                "unknown task kind `{other}` (expected single-label or multi-label)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    pub labels: Vec<String>,
    pub split: Split,
    /// Fields not interpreted by the toolkit, preserved on save.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Sample {
    pub fn new(id: impl Into<String>, text: impl Into<String>, labels: &[&str], split: Split) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            labels: labels.iter().map(|l| l.to_string()).collect(),
            split,
            extra: Map::new(),
        }
    }

    pub fn has_label(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }
}

/// A validated dataset. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    task: TaskKind,
    label_vocab: Vec<String>,
    by_id: HashMap<String, usize>,
}

impl Dataset {
    /// Validate `samples` and build the train label vocabulary.
    pub fn new(samples: Vec<Sample>, task: TaskKind) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(samples.len());
        let mut vocab = BTreeSet::new();
        let mut split_sizes = [0usize; 3];

        for (idx, sample) in samples.iter().enumerate() {
            if by_id.insert(sample.id.clone(), idx).is_some() {
                return Err(Error::Validation(format!("duplicate id `{}`", sample.id)));
            }
            if sample.text.trim().is_empty() {
                return Err(Error::Validation(format!("sample `{}` has empty text", sample.id)));
            }
            if task == TaskKind::SingleLabel && sample.labels.len() != 1 {
                return Err(Error::Validation(format!(
                    "single-label sample `{}` has {} labels",
                    sample.id,
                    sample.labels.len()
                )));
            }
            let distinct: BTreeSet<&String> = sample.labels.iter().collect();
            if distinct.len() != sample.labels.len() {
                return Err(Error::Validation(format!("sample `{}` repeats a label", sample.id)));
            }
            if sample.labels.iter().any(|l| l.is_empty()) {
                return Err(Error::Validation(format!("sample `{}` has an empty label", sample.id)));
            }
            split_sizes[split_index(sample.split)] += 1;
            if sample.split == Split::Train {
                vocab.extend(sample.labels.iter().cloned());
            }
        }

        for split in Split::ALL {
            if split_sizes[split_index(split)] == 0 {
                return Err(Error::Validation(format!("split `{split}` is empty")));
            }
        }
        for sample in samples.iter().filter(|s| s.split != Split::Train) {
            if let Some(label) = sample.labels.iter().find(|l| !vocab.contains(*l)) {
                return Err(Error::Validation(format!("label {label} absent from train")));
            }
        }

        Ok(Self {
            samples,
            task,
            label_vocab: vocab.into_iter().collect(),
            by_id,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    /// Train labels in ascending identifier order.
    pub fn label_vocab(&self) -> &[String] {
        &self.label_vocab
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> + '_ {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.by_id.get(id).map(|&i| &self.samples[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.samples.iter().map(|s| s.id.as_str())
    }

    /// Hash over ids, texts and labels of one split, used to check that two
    /// runs were evaluated on the same data.
    pub fn split_fingerprint(&self, split: Split) -> String {
        let rows: Vec<(&str, &str, &[String])> = self
            .split(split)
            .map(|s| (s.id.as_str(), s.text.as_str(), s.labels.as_slice()))
            .collect();
        fingerprint::of(&rows)
    }

    pub fn frequency_table(&self) -> FrequencyTable {
        frequency_table(self)
    }

    /// Share of each split's samples that carry no label.
    pub fn empty_shares(&self) -> BTreeMap<Split, f64> {
        Split::ALL
            .iter()
            .map(|&split| {
                let (empty, total) = self
                    .split(split)
                    .fold((0usize, 0usize), |(e, t), s| (e + s.labels.is_empty() as usize, t + 1));
                (split, empty as f64 / total as f64)
            })
            .collect()
    }
}

fn split_index(split: Split) -> usize {
    match split {
        Split::Train => 0,
        Split::Validation => 1,
        Split::Test => 2,
    }
}

/// Parse line-delimited JSON records. Blank lines are skipped.
pub fn parse_jsonl<R: BufRead>(reader: R, task: TaskKind) -> Result<Dataset> {
    let mut samples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: Sample = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        samples.push(sample);
    }
    Dataset::new(samples, task)
}

pub fn load_dataset(path: impl AsRef<Path>, task: TaskKind) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(BufReader::new(file), task)
}

pub fn write_jsonl<W: Write>(samples: &[Sample], mut writer: W) -> Result<()> {
    for sample in samples {
        serde_json::to_writer(&mut writer, sample)?;
        writer.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    write_jsonl(dataset.samples(), &mut writer)?;
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Per-label train-split counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub task: TaskKind,
    pub counts: BTreeMap<String, u64>,
    /// Train samples with an empty label set (always 0 for single-label tasks).
    pub empty_count: u64,
    pub train_size: u64,
}

impl FrequencyTable {
    pub fn labels(&self) -> impl Iterator<Item = &str> + '_ {
        self.counts.keys().map(String::as_str)
    }

    pub fn num_labels(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, label: &str) -> u64 {
        self.counts.get(label).copied().unwrap_or(0)
    }

    pub fn total_assignments(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn fingerprint(&self) -> String {
        fingerprint::of(self)
    }
}

pub fn frequency_table(dataset: &Dataset) -> FrequencyTable {
    let mut counts: BTreeMap<String, u64> =
        dataset.label_vocab().iter().map(|l| (l.clone(), 0)).collect();
    let mut empty_count = 0;
    let mut train_size = 0;
    for sample in dataset.split(Split::Train) {
        train_size += 1;
        if sample.labels.is_empty() {
            empty_count += 1;
        }
        for label in &sample.labels {
            *counts.get_mut(label).expect("train labels are in the vocabulary") += 1;
        }
    }
    FrequencyTable {
        task: dataset.task(),
        counts,
        empty_count,
        train_size,
    }
}

/// Nearest-rank percentiles: the value at rank `ceil(p * n)` of the sorted
/// lengths (rank 1 for `p = 0`).
pub fn length_percentiles(lengths: &[usize], percentiles: &[f64]) -> Result<Vec<(f64, usize)>> {
    if lengths.is_empty() {
        return Err(Error::InvalidInput("no lengths to summarize".into()));
    }
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    percentiles
        .iter()
        .map(|&p| {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!("percentile {p} outside [0, 1]")));
            }
            Ok((p, sorted[nearest_rank(p, n) - 1]))
        })
        .collect()
}

/// One-based nearest rank for fraction `p` of `n` sorted items.
pub(crate) fn nearest_rank(p: f64, n: usize) -> usize {
    // Tolerance absorbs products like 0.99 * 100 landing a hair above 99.
    let rank = (p * n as f64 - 1e-9).ceil();
    (rank.max(1.0) as usize).min(n)
}
