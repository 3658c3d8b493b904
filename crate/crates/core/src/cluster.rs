//! Unsupervised batch-effect quantification: K-means with Forgy
//! initialization, homogeneity / completeness against the site or study
//! labels, and averaging over many randomly initialized runs.

use std::collections::HashMap;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureTable, GroupBy};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{self, tag};
use crate::stats::{mean, std_pop};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansConfig {
    /// Number of clusters; `batch_effect_score` overrides it with the group count.
    pub k: usize,
    pub max_iterations: usize,
    pub rel_tolerance: f64,
    pub n_runs: usize,
    pub seed: u64,
    /// Z-score every feature over the whole table before clustering.
    pub standardize: bool,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { k: 2, max_iterations: 300, rel_tolerance: 1e-6, n_runs: 1000, seed: 0, standardize: true }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
    /// Inertia after every assignment step.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid per row (ties to the lower index) and the resulting inertia.
fn assign(x: &Matrix, centroids: &Matrix, out: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (i, slot) in out.iter_mut().enumerate() {
        let row = x.row(i);
        let (mut best, mut best_d) = (0, f64::INFINITY);
        for c in 0..centroids.n_rows() {
            let d = sq_dist(row, centroids.row(c));
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        *slot = best;
        inertia += best_d;
    }
    inertia
}

/// Lloyd's algorithm from `k` distinct uniformly drawn points.
pub fn kmeans(x: &Matrix, cfg: &KMeansConfig, run_seed: u64) -> Result<KMeansResult> {
    let (n, k) = (x.n_rows(), cfg.k);
    if k == 0 || k > n {
        return Err(Error::Config(format!("k = {k} must be in [1, {n}]")));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("k-means input".into()));
    }
    let mut rng = rng::stream(run_seed, &[tag::KMEANS]);
    let mut seeds = index::sample(&mut rng, n, k).into_vec();
    seeds.sort_unstable();
    kmeans_from(x, cfg, &seeds)
}

/// Lloyd's algorithm from the given initial centroid rows.
pub fn kmeans_from(x: &Matrix, cfg: &KMeansConfig, initial_rows: &[usize]) -> Result<KMeansResult> {
    let (n, p, k) = (x.n_rows(), x.n_cols(), initial_rows.len());
    let mut centroids = x.select_rows(initial_rows);
    let mut assignments = vec![0; n];
    let mut trace = Vec::new();
    let mut prev = f64::INFINITY;
    let mut iterations = 0;
    loop {
        let inertia = assign(x, &centroids, &mut assignments);
        trace.push(inertia);
        iterations += 1;
        let converged = inertia == 0.0 || (prev.is_finite() && (prev - inertia) <= cfg.rel_tolerance * prev);
        if converged || iterations >= cfg.max_iterations {
            return Ok(KMeansResult { assignments, centroids, inertia, inertia_trace: trace, iterations });
        }
        prev = inertia;

        let mut sums = Matrix::zeros(k, p);
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            counts[c] += 1;
            for (j, v) in x.row(i).iter().enumerate() {
                sums.set(c, j, sums.get(c, j) + v);
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..p {
                    centroids.set(c, j, sums.get(c, j) / counts[c] as f64);
                }
            }
        }
        // reseed empty clusters on the point farthest from its own centroid
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .map(|i| (i, sq_dist(x.row(i), centroids.row(assignments[i]))))
                .fold((0, f64::NEG_INFINITY), |b, (i, d)| if d > b.1 { (i, d) } else { b });
            counts[assignments[far.0]] -= 1;
            assignments[far.0] = c;
            counts[c] = 1;
            for j in 0..p {
                centroids.set(c, j, x.get(far.0, j));
            }
        }
    }
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `(homogeneity, completeness)` with natural-log entropies.
pub fn homogeneity_completeness(classes: &[usize], clusters: &[usize]) -> (f64, f64) {
    assert_eq!(classes.len(), clusters.len(), "label vectors differ in length");
    let n = classes.len() as f64;
    if classes.is_empty() {
        return (1.0, 1.0);
    }
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut class_n: HashMap<usize, usize> = HashMap::new();
    let mut cluster_n: HashMap<usize, usize> = HashMap::new();
    for (&c, &k) in classes.iter().zip(clusters) {
        *joint.entry((c, k)).or_default() += 1;
        *class_n.entry(c).or_default() += 1;
        *cluster_n.entry(k).or_default() += 1;
    }
    let mut cells: Vec<(&(usize, usize), &usize)> = joint.iter().collect();
    cells.sort();
    let h_c = entropy(sorted_values(&class_n), n);
    let h_k = entropy(sorted_values(&cluster_n), n);
    // H(C|K) = -sum n_ck/n ln(n_ck/n_k), H(K|C) symmetric
    let (mut h_c_given_k, mut h_k_given_c) = (0.0, 0.0);
    for (&(c, k), &nck) in cells {
        let p = nck as f64 / n;
        h_c_given_k -= p * (nck as f64 / cluster_n[&k] as f64).ln();
        h_k_given_c -= p * (nck as f64 / class_n[&c] as f64).ln();
    }
    let h = if h_c == 0.0 { 1.0 } else { 1.0 - h_c_given_k / h_c };
    let c = if h_k == 0.0 { 1.0 } else { 1.0 - h_k_given_c / h_k };
    (h.clamp(0.0, 1.0), c.clamp(0.0, 1.0))
}

fn sorted_values(m: &HashMap<usize, usize>) -> impl Iterator<Item = usize> {
    let mut v: Vec<(usize, usize)> = m.iter().map(|(&k, &v)| (k, v)).collect();
    v.sort_unstable();
    v.into_iter().map(|(_, c)| c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringScore {
    pub group_by: GroupBy,
    pub k: usize,
    pub n_runs: usize,
    pub completeness_mean: f64,
    pub completeness_std: f64,
    pub homogeneity_mean: f64,
    pub homogeneity_std: f64,
}

/// Per-feature z-score; constant features become 0.
pub fn standardize(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for j in 0..x.n_cols() {
        let col = x.column(j);
        let (m, s) = (mean(&col), std_pop(&col));
        for i in 0..x.n_rows() {
            out.set(i, j, if s > 0.0 { (col[i] - m) / s } else { 0.0 });
        }
    }
    out
}

/// Runs K-means `n_runs` times with k = number of groups and averages
/// homogeneity / completeness against the group labels.
pub fn batch_effect_score(table: &FeatureTable, group_by: GroupBy, cfg: &KMeansConfig) -> Result<ClusteringScore> {
    let groups = table.group_indices(group_by);
    if groups.len() < 2 {
        return Err(Error::Config(format!("need at least two distinct {} groups", group_by.as_str())));
    }
    if cfg.n_runs == 0 {
        return Err(Error::Config("n_runs must be at least 1".into()));
    }
    let mut classes = vec![0; table.len()];
    for (g, rows) in groups.values().enumerate() {
        for &i in rows {
            classes[i] = g;
        }
    }
    let x = if cfg.standardize { standardize(&table.matrix()) } else { table.matrix() };
    let run_cfg = KMeansConfig { k: groups.len(), ..cfg.clone() };
    let scores: Vec<(f64, f64)> = (0..cfg.n_runs)
        .into_par_iter()
        .map(|r| {
            let res = kmeans(&x, &run_cfg, rng::derive(cfg.seed, &[tag::KMEANS, r as u64]))?;
            Ok(homogeneity_completeness(&classes, &res.assignments))
        })
        .collect::<Result<_>>()?;
    let h: Vec<f64> = scores.iter().map(|s| s.0).collect();
    let c: Vec<f64> = scores.iter().map(|s| s.1).collect();
    Ok(ClusteringScore {
        group_by,
        k: groups.len(),
        n_runs: cfg.n_runs,
        completeness_mean: mean(&c),
        completeness_std: std_pop(&c),
        homogeneity_mean: mean(&h),
        homogeneity_std: std_pop(&h),
    })
}

/// Table-shaped CSV: `group_by,k,completeness_mean,completeness_std,homogeneity_mean,homogeneity_std`.
pub fn scores_to_csv(scores: &[ClusteringScore]) -> String {
    let mut out = String::from("group_by,k,n_runs,completeness_mean,completeness_std,homogeneity_mean,homogeneity_std\n");
    for s in scores {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.group_by.as_str(),
            s.k,
            s.n_runs,
            s.completeness_mean,
            s.completeness_std,
            s.homogeneity_mean,
            s.homogeneity_std
        ));
    }
    out
}
