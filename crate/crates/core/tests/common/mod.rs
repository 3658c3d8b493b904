//! Shared fixtures and independent reference implementations for the
//! integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use batchqc::dataset::{FeatureSchema, FeatureTable, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

/// Builds a table with generic feature names `f0, f1, ...`.
pub fn table(rows: Vec<(String, Option<u8>, Vec<f64>)>) -> FeatureTable {
    let p = rows.first().map_or(1, |r| r.2.len());
    let samples = rows
        .into_iter()
        .enumerate()
        .map(|(i, (site, label, features))| Sample {
            id: format!("s{i:05}"),
            study: "study0".into(),
            site,
            label,
            raw_rating: None,
            features,
        })
        .collect();
    FeatureTable::new(FeatureSchema::generic(p), samples).unwrap()
}

/// Probability that a positive outranks a negative, ties counted half, by
/// enumerating every positive/negative pair.
pub fn auc_pairs(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut good, mut pairs) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    good += 1.0;
                } else if scores[i] == scores[j] {
                    good += 0.5;
                }
            }
        }
    }
    good / pairs
}

/// W1 for equal-size samples: mean distance between order statistics.
pub fn w1_sorted_pairs(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// W1 by integrating |F_a − F_b| between consecutive support points.
pub fn w1_cdf(a: &[f64], b: &[f64]) -> f64 {
    let mut pts: Vec<f64> = a.iter().chain(b).copied().collect();
    pts.sort_by(f64::total_cmp);
    let cdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
    pts.windows(2).map(|w| (cdf(a, w[0]) - cdf(b, w[0])).abs() * (w[1] - w[0])).sum()
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts.filter(|&c| c > 0).map(|c| c as f64 / n).map(|p| -p * p.ln()).sum()
}

/// Homogeneity and completeness from the textbook conditional-entropy formulas.
pub fn hc_entropy(classes: &[usize], clusters: &[usize]) -> (f64, f64) {
    let n = classes.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut by_class: BTreeMap<usize, usize> = BTreeMap::new();
    let mut by_cluster: BTreeMap<usize, usize> = BTreeMap::new();
    for (&c, &k) in classes.iter().zip(clusters) {
        *joint.entry((c, k)).or_default() += 1;
        *by_class.entry(c).or_default() += 1;
        *by_cluster.entry(k).or_default() += 1;
    }
    let h_c = entropy(by_class.values().copied(), n);
    let h_k = entropy(by_cluster.values().copied(), n);
    // H(C|K) = -Σ n_ck/n · ln(n_ck / n_k)
    let h_c_given_k: f64 =
        joint.iter().map(|(&(_, k), &v)| -(v as f64 / n) * (v as f64 / by_cluster[&k] as f64).ln()).sum();
    let h_k_given_c: f64 =
        joint.iter().map(|(&(c, _), &v)| -(v as f64 / n) * (v as f64 / by_class[&c] as f64).ln()).sum();
    let h = if h_c == 0.0 { 1.0 } else { 1.0 - h_c_given_k / h_c };
    let c = if h_k == 0.0 { 1.0 } else { 1.0 - h_k_given_c / h_k };
    (h, c)
}

/// Linear-interpolation quantile at position q·(n−1).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Random scores with injected ties and both classes present.
pub fn scored_instance(r: &mut ChaCha8Rng, max_n: usize) -> (Vec<f64>, Vec<u8>) {
    let n = r.random_range(2..=max_n);
    let tie_heavy = r.random_bool(0.5);
    let scores: Vec<f64> = (0..n)
        .map(|_| if tie_heavy { f64::from(r.random_range(0..5u8)) / 4.0 } else { r.random::<f64>() })
        .collect();
    let mut labels: Vec<u8> = (0..n).map(|_| u8::from(r.random_bool(0.4))).collect();
    labels[0] = 0;
    labels[1] = 1;
    (scores, labels)
}
