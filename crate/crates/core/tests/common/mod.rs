//! Brute-force reference implementations shared by the oracle and acceptance targets.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sra_core::classify::{loss_and_gradient, Example, LinearParams};
use sra_core::corpus::TaskKind;
use sra_core::retrieval::SparseVector;

pub fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(String::from)
        .collect()
}

pub fn terms(text: &str) -> Vec<String> {
    let t = tokens(text);
    let mut out = t.clone();
    for w in t.windows(2) {
        out.push(format!("{} {}", w[0], w[1]));
    }
    out
}

/// Dense TF-IDF vectors materialized over a sorted vocabulary.
pub struct DenseTfidf {
    pub vocab: Vec<String>,
    pub idf: Vec<f64>,
}

impl DenseTfidf {
    pub fn fit(docs: &[String], min_df: usize, max_df: f64) -> Self {
        let n = docs.len() as f64;
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for d in docs {
            for t in terms(d).into_iter().collect::<BTreeSet<_>>() {
                *df.entry(t).or_default() += 1;
            }
        }
        let kept: Vec<(String, usize)> = df
            .into_iter()
            .filter(|(_, c)| *c >= min_df && (*c as f64) / n <= max_df)
            .collect();
        Self {
            idf: kept.iter().map(|(_, c)| ((1.0 + n) / (1.0 + *c as f64)).ln() + 1.0).collect(),
            vocab: kept.into_iter().map(|(t, _)| t).collect(),
        }
    }

    pub fn vector(&self, doc: &str) -> Vec<f64> {
        let mut tf: HashMap<String, f64> = HashMap::new();
        for t in terms(doc) {
            *tf.entry(t).or_default() += 1.0;
        }
        let mut v: Vec<f64> = self
            .vocab
            .iter()
            .zip(&self.idf)
            .map(|(t, idf)| tf.get(t).map_or(0.0, |c| (1.0 + c.ln()) * idf))
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

pub fn random_problem(rng: &mut ChaCha8Rng, task: TaskKind) -> (LinearParams, Vec<Example>) {
    let (n_ex, n_feat, n_cls) = (5, 10, 3);
    let mut params = LinearParams::zeros(n_feat, n_cls);
    params.weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
    params.bias.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
    let examples = (0..n_ex)
        .map(|_| {
            let mut indices: Vec<u32> = (0..n_feat as u32).filter(|_| rng.random_bool(0.6)).collect();
            if indices.is_empty() {
                indices.push(0);
            }
            let values = indices.iter().map(|_| rng.random_range(-2.0..2.0)).collect();
            let target = match task {
                TaskKind::SingleLabel => vec![rng.random_range(0..n_cls)],
                TaskKind::MultiLabel => (0..n_cls).filter(|_| rng.random_bool(0.4)).collect(),
            };
            Example {
                features: SparseVector { indices, values },
                target,
            }
        })
        .collect();
    (params, examples)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Per-label confusion counts computed label by label, sample by sample.
pub fn brute_force_f1(gold: &[Vec<String>], pred: &[Vec<String>], vocab: &[String]) -> (f64, f64) {
    let f1 = |tp: f64, fp: f64, fn_: f64| if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) };
    let (mut tp_all, mut fp_all, mut fn_all) = (0.0, 0.0, 0.0);
    let mut per_label = Vec::new();
    for label in vocab {
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for (g, p) in gold.iter().zip(pred) {
            match (g.contains(label), p.contains(label)) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fn_ += 1.0,
                (false, false) => {}
            }
        }
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
        per_label.push(f1(tp, fp, fn_));
    }
    (f1(tp_all, fp_all, fn_all), per_label.iter().sum::<f64>() / vocab.len() as f64)
}

pub fn binomial(n: u64, k: u64) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Largest relative deviation between analytic and central-difference gradients.
pub fn max_gradient_error(params: &LinearParams, examples: &[Example], task: TaskKind) -> f64 {
    let batch: Vec<&Example> = examples.iter().collect();
    let loss = |p: &LinearParams| loss_and_gradient(p, &batch, task).0;
    let (_, grad) = loss_and_gradient(params, &batch, task);
    let analytic = grad.dense_weights(params.n_features, params.n_classes);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..params.weights.len() {
        let (mut plus, mut minus) = (params.clone(), params.clone());
        plus.weights[i] += h;
        minus.weights[i] -= h;
        worst = worst.max(relative_error(analytic[i], (loss(&plus) - loss(&minus)) / (2.0 * h)));
    }
    for k in 0..params.n_classes {
        let (mut plus, mut minus) = (params.clone(), params.clone());
        plus.bias[k] += h;
        minus.bias[k] -= h;
        worst = worst.max(relative_error(grad.bias[k], (loss(&plus) - loss(&minus)) / (2.0 * h)));
    }
    worst
}

/// Sort by (count, label), floor the share, take the prefix.
pub fn low_set_oracle(counts: &BTreeMap<String, u64>, alpha: f64) -> BTreeSet<String> {
    let mut rows: Vec<(u64, &String)> = counts.iter().map(|(l, c)| (*c, l)).collect();
    rows.sort();
    let target = alpha * rows.len() as f64;
    let mut k = 0;
    while k < rows.len() && (k + 1) as f64 <= target + 1e-9 {
        k += 1;
    }
    rows.into_iter().take(k).map(|(_, l)| l.clone()).collect()
}

/// Exact two-sided binomial McNemar p-value by integer enumeration.
pub fn exact_mcnemar(b: u64, c: u64) -> f64 {
    let n = b + c;
    let tail: u128 = (0..=b.min(c)).map(|i| binomial(n, i)).sum();
    (2.0 * tail as f64 / 2f64.powi(n as i32)).min(1.0)
}

pub fn random_labels(rng: &mut ChaCha8Rng, vocab: &[String], task: TaskKind) -> Vec<String> {
    match task {
        TaskKind::SingleLabel => vec![vocab[rng.random_range(0..vocab.len())].clone()],
        TaskKind::MultiLabel => vocab.iter().filter(|_| rng.random_bool(0.3)).cloned().collect(),
    }
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
