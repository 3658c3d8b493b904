use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{ForestParams, SplitMode};
use crate::matrix::Matrix;
use crate::rng::Rng;

/// Flat node record used for (de)serialization:
/// split nodes carry `feature`, `threshold`, `left`, `right`; leaves carry `leaf_freqs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    left: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    right: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    leaf_freqs: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "NodeRecord", try_from = "NodeRecord")]
pub enum Node {
    /// Samples with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { freqs: Vec<f64> },
}

impl From<Node> for NodeRecord {
    fn from(n: Node) -> Self {
        match n {
            Node::Split { feature, threshold, left, right } => NodeRecord {
                feature: Some(feature),
                threshold: Some(threshold),
                left: Some(left),
                right: Some(right),
                leaf_freqs: None,
            },
            Node::Leaf { freqs } => NodeRecord {
                feature: None,
                threshold: None,
                left: None,
                right: None,
                leaf_freqs: Some(freqs),
            },
        }
    }
}

impl TryFrom<NodeRecord> for Node {
    type Error = String;

    fn try_from(r: NodeRecord) -> Result<Self, String> {
        match r {
            NodeRecord { feature: Some(feature), threshold: Some(threshold), left: Some(left), right: Some(right), leaf_freqs: None } => {
                Ok(Node::Split { feature, threshold, left, right })
            }
            NodeRecord { feature: None, threshold: None, left: None, right: None, leaf_freqs: Some(freqs) } => {
                Ok(Node::Leaf { freqs })
            }
            _ => Err("node must be either a split or a leaf".into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Class-frequency vector of the leaf reached by `row`.
    pub fn leaf_for(&self, row: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { freqs } => return freqs,
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Checks child indices and leaf vectors; used when loading models.
    pub(crate) fn validate(&self, n_features: usize, n_classes: usize) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            match n {
                Node::Split { feature, threshold, left, right } => {
                    if *feature >= n_features || !threshold.is_finite() {
                        return Err(format!("node {i}: invalid split"));
                    }
                    if *left <= i || *right <= i || *left >= self.nodes.len() || *right >= self.nodes.len() {
                        return Err(format!("node {i}: child index out of range"));
                    }
                }
                Node::Leaf { freqs } => {
                    if freqs.len() != n_classes {
                        return Err(format!("node {i}: leaf has {} classes, expected {n_classes}", freqs.len()));
                    }
                }
            }
        }
        Ok(())
    }
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Split {
    /// Higher gain wins; equal gains go to the lower feature, then the lower threshold.
    fn beats(&self, other: &Option<Split>) -> bool {
        match other {
            None => true,
            Some(o) => {
                self.gain > o.gain
                    || (self.gain == o.gain
                        && (self.feature < o.feature || (self.feature == o.feature && self.threshold < o.threshold)))
            }
        }
    }
}

fn weighted_gini(counts: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    total - counts.iter().map(|c| c * c).sum::<f64>() / total
}

pub(crate) struct Grower<'a> {
    pub x: &'a Matrix,
    pub y: &'a [usize],
    pub sample_weight: &'a [f64],
    pub n_classes: usize,
    pub params: &'a ForestParams,
    pub n_candidates: usize,
    pub rng: Rng,
    pub nodes: Vec<Node>,
    pub importances: Vec<f64>,
    pub root_weight: f64,
    scratch: Vec<(f64, usize)>,
}

impl<'a> Grower<'a> {
    pub fn new(
        x: &'a Matrix,
        y: &'a [usize],
        sample_weight: &'a [f64],
        n_classes: usize,
        params: &'a ForestParams,
        n_candidates: usize,
        rng: Rng,
    ) -> Self {
        Self {
            x,
            y,
            sample_weight,
            n_classes,
            params,
            n_candidates,
            rng,
            nodes: Vec::new(),
            importances: vec![0.0; x.n_cols()],
            root_weight: 0.0,
            scratch: Vec::new(),
        }
    }

    fn class_counts(&self, idx: &[usize]) -> (Vec<f64>, f64) {
        let mut counts = vec![0.0; self.n_classes];
        for &i in idx {
            counts[self.y[i]] += self.sample_weight[i];
        }
        let total = counts.iter().sum();
        (counts, total)
    }

    /// Grows the subtree for `idx` and returns its node index.
    pub fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let (counts, total) = self.class_counts(idx);
        if depth == 0 {
            self.root_weight = total;
        }
        let n_present = counts.iter().filter(|&&c| c > 0.0).count();
        let at_max_depth = self.params.max_depth.is_some_and(|d| depth >= d);
        let too_small = idx.len() < 2 * self.params.min_samples_leaf;
        let split = if n_present <= 1 || at_max_depth || too_small {
            None
        } else {
            self.find_split(idx, &counts, total)
        };

        let Some(split) = split else {
            let freqs = if total > 0.0 {
                counts.iter().map(|c| c / total).collect()
            } else {
                // only reachable with all-zero weights; fall back to unweighted frequencies
                let mut f = vec![0.0; self.n_classes];
                for &i in idx.iter() {
                    f[self.y[i]] += 1.0 / idx.len() as f64;
                }
                f
            };
            self.nodes.push(Node::Leaf { freqs });
            return self.nodes.len() - 1;
        };

        if self.root_weight > 0.0 {
            self.importances[split.feature] += split.gain / self.root_weight;
        }
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { freqs: Vec::new() });
        let mid = partition(idx, |i| self.x.get(i, split.feature) <= split.threshold);
        let (lo, hi) = idx.split_at_mut(mid);
        let left = self.grow(lo, depth + 1);
        let right = self.grow(hi, depth + 1);
        self.nodes[at] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
        at
    }

    fn find_split(&mut self, idx: &[usize], counts: &[f64], total: f64) -> Option<Split> {
        let parent = weighted_gini(counts, total);
        let mut order: Vec<usize> = (0..self.x.n_cols()).collect();
        order.shuffle(&mut self.rng);
        let mut best: Option<Split> = None;
        let mut evaluated = 0;
        for feature in order {
            if evaluated >= self.n_candidates {
                break;
            }
            let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = self.x.get(i, feature);
                (lo.min(v), hi.max(v))
            });
            if lo >= hi {
                // constant in this node: does not count toward the candidate budget
                continue;
            }
            evaluated += 1;
            let candidate = match self.params.split_mode {
                SplitMode::RfBestSplit => self.best_threshold(idx, feature, parent),
                SplitMode::ExtraRandomSplit => {
                    let threshold = self.rng.random_range(lo..hi);
                    self.score_threshold(idx, feature, threshold, parent)
                }
            };
            if let Some(c) = candidate {
                if c.beats(&best) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn score_threshold(&self, idx: &[usize], feature: usize, threshold: f64, parent: f64) -> Option<Split> {
        let mut left = vec![0.0; self.n_classes];
        let mut right = vec![0.0; self.n_classes];
        let mut n_left = 0;
        for &i in idx {
            let w = self.sample_weight[i];
            if self.x.get(i, feature) <= threshold {
                left[self.y[i]] += w;
                n_left += 1;
            } else {
                right[self.y[i]] += w;
            }
        }
        let n_right = idx.len() - n_left;
        let min_leaf = self.params.min_samples_leaf;
        if n_left < min_leaf || n_right < min_leaf {
            return None;
        }
        let wl: f64 = left.iter().sum();
        let wr: f64 = right.iter().sum();
        let gain = parent - weighted_gini(&left, wl) - weighted_gini(&right, wr);
        Some(Split { feature, threshold, gain })
    }

    fn best_threshold(&mut self, idx: &[usize], feature: usize, parent: f64) -> Option<Split> {
        let mut sorted = std::mem::take(&mut self.scratch);
        sorted.clear();
        sorted.extend(idx.iter().map(|&i| (self.x.get(i, feature), i)));
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut left = vec![0.0; self.n_classes];
        let mut right = vec![0.0; self.n_classes];
        for &(_, i) in &sorted {
            right[self.y[i]] += self.sample_weight[i];
        }
        let min_leaf = self.params.min_samples_leaf;
        let n = sorted.len();
        let mut best: Option<Split> = None;
        for k in 0..n - 1 {
            let (v, i) = sorted[k];
            let w = self.sample_weight[i];
            left[self.y[i]] += w;
            right[self.y[i]] -= w;
            let next = sorted[k + 1].0;
            if v == next || k + 1 < min_leaf || n - k - 1 < min_leaf {
                continue;
            }
            let wl: f64 = left.iter().sum();
            let wr: f64 = right.iter().sum();
            let gain = parent - weighted_gini(&left, wl) - weighted_gini(&right, wr.max(0.0));
            let mut threshold = v + (next - v) / 2.0;
            if threshold >= next {
                threshold = v;
            }
            let cand = Split { feature, threshold, gain };
            if cand.beats(&best) {
                best = Some(cand);
            }
        }
        self.scratch = sorted;
        best
    }
}

/// Stable in-place partition; returns the number of elements satisfying `pred`.
fn partition(idx: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| pred(i));
    let mid = yes.len();
    idx[..mid].copy_from_slice(&yes);
    idx[mid..].copy_from_slice(&no);
    mid
}
