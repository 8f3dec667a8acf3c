//! Independent reference implementations checked against the library.

mod common;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sra_core::corpus::TaskKind;
use sra_core::evaluate::{bootstrap_delta_ci, f1_scores, mcnemar_from_counts, McNemarMethod};
use sra_core::retrieval::{build_sparse_index, TfidfParams};

use common::{brute_force_f1, exact_mcnemar, max_gradient_error, random_labels, random_problem, DenseTfidf};

fn random_doc(rng: &mut ChaCha8Rng, words: &[&str]) -> String {
    let len = rng.random_range(1..8);
    (0..len).map(|_| words[rng.random_range(0..words.len())]).collect::<Vec<_>>().join(" ")
}

#[test]
fn sparse_scores_match_materialized_cosine() {
    let words = ["fee", "late", "pay", "law", "court", "venue", "notice", "term"];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    for _ in 0..300 {
        let docs: Vec<String> = (0..rng.random_range(3..12)).map(|_| random_doc(&mut rng, &words)).collect();
        let pairs: Vec<(String, &str)> = docs.iter().enumerate().map(|(i, d)| (format!("d{i:02}"), d.as_str())).collect();
        let Ok(index) = build_sparse_index(&pairs, TfidfParams::default()) else {
            continue;
        };
        let oracle = DenseTfidf::fit(&docs, 2, 0.8);
        assert_eq!(index.vectorizer().terms(), oracle.vocab.as_slice());
        let query = random_doc(&mut rng, &words);
        let q = oracle.vector(&query);
        let mut expected: Vec<(String, f64)> = docs
            .iter()
            .enumerate()
            .map(|(i, d)| (format!("d{i:02}"), q.iter().zip(oracle.vector(d)).map(|(a, b)| a * b).sum::<f64>()))
            .filter(|(_, s)| *s > 1e-12)
            .collect();
        expected.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let got = index.candidates(&query, docs.len());
        assert_eq!(got.len(), expected.len(), "query {query:?} docs {docs:?}");
        let got_map: HashMap<_, _> = got.iter().cloned().collect();
        for (id, s) in &expected {
            assert!((got_map[id] - s).abs() < 1e-9, "{id}: {} vs {s}", got_map[id]);
        }
        checked += 1;
    }
    assert!(checked > 100);
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for task in [TaskKind::SingleLabel, TaskKind::MultiLabel] {
        for _ in 0..5 {
            let (params, examples) = random_problem(&mut rng, task);
            let worst = max_gradient_error(&params, &examples, task);
            assert!(worst < 1e-4, "{task:?}: relative error {worst}");
        }
    }
}

#[test]
fn f1_matches_confusion_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..500 {
        let task = if case % 2 == 0 { TaskKind::SingleLabel } else { TaskKind::MultiLabel };
        let vocab: Vec<String> = (0..rng.random_range(1..8)).map(|i| format!("l{i}")).collect();
        let n = rng.random_range(1..40);
        let gold: Vec<Vec<String>> = (0..n).map(|_| random_labels(&mut rng, &vocab, task)).collect();
        let pred: Vec<Vec<String>> = (0..n).map(|_| random_labels(&mut rng, &vocab, task)).collect();
        let report = f1_scores(&gold, &pred, &vocab).unwrap();
        let (micro, macro_) = brute_force_f1(&gold, &pred, &vocab);
        assert!((report.micro_f1 - micro).abs() < 1e-9);
        assert!((report.macro_f1 - macro_).abs() < 1e-9);
        if task == TaskKind::SingleLabel {
            let accuracy = gold.iter().zip(&pred).filter(|(g, p)| g == p).count() as f64 / n as f64;
            assert!((report.micro_f1 - accuracy).abs() < 1e-9);
        }
    }
}

#[test]
fn exact_mcnemar_matches_enumeration() {
    for n in 0..=24u64 {
        for b in 0..=n {
            let c = n - b;
            let got = mcnemar_from_counts(b, c);
            assert_eq!(got.method, McNemarMethod::Exact);
            let expected = exact_mcnemar(b, c);
            assert!((got.p_value - expected).abs() < 1e-12, "b={b} c={c}: {} vs {expected}", got.p_value);
        }
    }
}

/// Upper tail of the 1-df chi-square, by Simpson quadrature of the normal density.
fn chi2_sf_quadrature(x: f64) -> f64 {
    let z = x.sqrt();
    let steps = 20_000;
    let h = z / steps as f64;
    let phi = |t: f64| (-t * t / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = phi(0.0) + phi(z);
    for i in 1..steps {
        s += phi(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - 2.0 * s * h / 3.0
}

#[test]
fn chi_square_mcnemar_matches_quadrature() {
    for (b, c) in [(10, 40), (12, 13), (20, 30), (0, 25), (30, 5), (100, 140)] {
        let got = mcnemar_from_counts(b, c);
        assert_eq!(got.method, McNemarMethod::ChiSquare);
        let stat = ((b as f64 - c as f64).abs() - 1.0).max(0.0).powi(2) / (b + c) as f64;
        assert!((got.p_value - chi2_sf_quadrature(stat)).abs() < 1e-9, "b={b} c={c}");
    }
}

#[test]
fn bootstrap_matches_direct_resampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let vocab: Vec<String> = (0..4).map(|i| format!("l{i}")).collect();
    let n = 60;
    let gold: Vec<Vec<String>> = (0..n).map(|_| random_labels(&mut rng, &vocab, TaskKind::SingleLabel)).collect();
    let noisy = |rng: &mut ChaCha8Rng, p: f64| -> Vec<Vec<String>> {
        gold.iter()
            .map(|g| if rng.random_bool(p) { g.clone() } else { random_labels(rng, &vocab, TaskKind::SingleLabel) })
            .collect()
    };
    let a = noisy(&mut rng, 0.5);
    let b = noisy(&mut rng, 0.8);
    let (resamples, seed) = (500, 99);

    let mut deltas: Vec<f64> = (0..resamples)
        .map(|r| {
            let mut stream = ChaCha8Rng::seed_from_u64(seed);
            stream.set_stream(r as u64);
            let idx: Vec<usize> = (0..n).map(|_| stream.random_range(0..n)).collect();
            let pick = |v: &[Vec<String>]| idx.iter().map(|&i| v[i].clone()).collect::<Vec<_>>();
            let g = pick(&gold);
            brute_force_f1(&g, &pick(&b), &vocab).1 - brute_force_f1(&g, &pick(&a), &vocab).1
        })
        .collect();
    deltas.sort_by(f64::total_cmp);
    // nearest-rank percentiles at 2.5% and 97.5%
    let rank = |p: f64| ((p * resamples as f64).ceil() as usize).clamp(1, resamples);
    let ci = bootstrap_delta_ci(&gold, &a, &b, &vocab, resamples, 0.95, seed).unwrap();
    assert!((ci.low - deltas[rank(0.025) - 1]).abs() < 1e-12);
    assert!((ci.high - deltas[rank(0.975) - 1]).abs() < 1e-12);
    assert_eq!(ci, bootstrap_delta_ci(&gold, &a, &b, &vocab, resamples, 0.95, seed).unwrap());
    assert_ne!(ci, bootstrap_delta_ci(&gold, &a, &b, &vocab, resamples, 0.95, seed + 1).unwrap());
}
