//! Ranking and distribution metrics: tie-aware ROC-AUC, the Youden-optimal
//! threshold and the 1-D Wasserstein distance between score samples.
//!
//! Scores follow the convention "higher = more artifacted" and a sample is
//! classified positive when `score >= threshold`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{mean, std_pop};

/// Scores with binary labels (1 = positive / artifacted).
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredLabels<'a> {
    scores: &'a [f64],
    labels: &'a [u8],
}

impl<'a> ScoredLabels<'a> {
    pub fn new(scores: &'a [f64], labels: &'a [u8]) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Schema(format!("{} scores for {} labels", scores.len(), labels.len())));
        }
        if scores.is_empty() {
            return Err(Error::Empty("no scores".into()));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("scores".into()));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Schema("labels must be 0 or 1".into()));
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        self.scores
    }

    pub fn labels(&self) -> &[u8] {
        self.labels
    }

    fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        (pos, self.labels.len() - pos)
    }

    fn require_both_classes(&self) -> Result<(usize, usize)> {
        let (pos, neg) = self.class_counts();
        if pos == 0 || neg == 0 {
            return Err(Error::Undefined("both classes must be present".into()));
        }
        Ok((pos, neg))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// ROC-AUC as the Mann–Whitney statistic with midranks for ties:
/// `P(s+ > s-) + 0.5 * P(s+ = s-)`.
pub fn roc_auc(data: &ScoredLabels) -> Result<f64> {
    let (pos, neg) = data.require_both_classes()?;
    let mut order: Vec<usize> = (0..data.scores.len()).collect();
    order.sort_by(|&a, &b| data.scores[a].total_cmp(&data.scores[b]));
    // ranks are doubled so that midranks stay integral
    let mut pos_rank_sum2: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && data.scores[order[end]] == data.scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1..=end, doubled midrank = start + 1 + end
        let midrank2 = (start + 1 + end) as u128;
        let n_pos = order[start..end].iter().filter(|&&i| data.labels[i] == 1).count() as u128;
        pos_rank_sum2 += midrank2 * n_pos;
        start = end;
    }
    let p = pos as u128;
    let u2 = pos_rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * neg as u128) as f64)
}

/// ROC points for every distinct score (descending threshold), preceded by
/// the classify-none point at a threshold above the maximum score.
pub fn roc_curve(data: &ScoredLabels) -> Result<Vec<RocPoint>> {
    let (pos, neg) = data.require_both_classes()?;
    let mut order: Vec<usize> = (0..data.scores.len()).collect();
    order.sort_by(|&a, &b| data.scores[b].total_cmp(&data.scores[a]));
    let top = data.scores[order[0]];
    let mut points = vec![RocPoint { threshold: sentinel_above(top), tpr: 0.0, fpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let s = data.scores[order[k]];
        while k < order.len() && data.scores[order[k]] == s {
            if data.labels[order[k]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push(RocPoint { threshold: s, tpr: tp as f64 / pos as f64, fpr: fp as f64 / neg as f64 });
    }
    Ok(points)
}

/// Smallest representable value strictly above `x`.
fn sentinel_above(x: f64) -> f64 {
    x.next_up()
}

/// Threshold maximizing `tpr - fpr` (Youden's J).
///
/// Candidates are the distinct observed scores plus a classify-none sentinel
/// just above the maximum. Ties go to the higher tpr, then the lower
/// threshold. When no candidate reaches a positive J, the sentinel is
/// returned: no cut-off separates the classes better than chance.
pub fn optimal_threshold(data: &ScoredLabels) -> Result<RocPoint> {
    let curve = roc_curve(data)?;
    let mut best = curve[0];
    for p in &curve[1..] {
        let (j, bj) = (p.tpr - p.fpr, best.tpr - best.fpr);
        if j > bj || (j == bj && (p.tpr > best.tpr || (p.tpr == best.tpr && p.threshold < best.threshold))) {
            best = *p;
        }
    }
    if best.tpr - best.fpr <= 0.0 {
        return Ok(curve[0]);
    }
    Ok(best)
}

/// Exact W1 distance between two empirical distributions: the integral of
/// `|F_a - F_b|` over the merged support.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("wasserstein_1d needs two non-empty samples".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("wasserstein_1d input".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as i128, b.len() as i128);
    // CDF difference kept as the integer |i*nb - j*na| over the common denominator na*nb
    let (mut i, mut j) = (0usize, 0usize);
    let mut x = a[0].min(b[0]);
    let mut acc = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        let diff = (i as i128 * nb - j as i128 * na).abs();
        acc += (next - x) * diff as f64;
        x = next;
        while i < a.len() && a[i] == next {
            i += 1;
        }
        while j < b.len() && b[j] == next {
            j += 1;
        }
    }
    Ok(acc / (na * nb) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WassersteinMatrix {
    pub groups: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    /// Mean and population std of the strict upper triangle.
    pub mean: f64,
    pub std: f64,
}

/// All pairwise W1 distances between named samples, in the given order.
pub fn pairwise_wasserstein(groups: &[(String, Vec<f64>)]) -> Result<WassersteinMatrix> {
    if groups.len() < 2 {
        return Err(Error::Config("pairwise_wasserstein needs at least two groups".into()));
    }
    let n = groups.len();
    let mut matrix = vec![vec![0.0; n]; n];
    let mut upper = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let d = wasserstein_1d(&groups[i].1, &groups[j].1)?;
            matrix[i][j] = d;
            matrix[j][i] = d;
            upper.push(d);
        }
    }
    Ok(WassersteinMatrix {
        groups: groups.iter().map(|g| g.0.clone()).collect(),
        matrix,
        mean: mean(&upper),
        std: std_pop(&upper),
    })
}

impl WassersteinMatrix {
    /// CSV with the group ids as header row and first column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group");
        for g in &self.groups {
            out.push(',');
            out.push_str(g);
        }
        out.push('\n');
        for (g, row) in self.groups.iter().zip(&self.matrix) {
            out.push_str(g);
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn auc(s: &[f64], l: &[u8]) -> f64 {
        roc_auc(&ScoredLabels::new(s, l).unwrap()).unwrap()
    }

    fn opt(s: &[f64], l: &[u8]) -> RocPoint {
        optimal_threshold(&ScoredLabels::new(s, l).unwrap()).unwrap()
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]), 1.0);
        assert_eq!(auc(&[0.5; 4], &[1, 0, 1, 0]), 0.5);
        assert_eq!(auc(&[0.8, 0.4, 0.6, 0.2], &[1, 0, 0, 1]), 0.5);
    }

    #[test]
    fn auc_single_class_is_undefined() {
        let d = ScoredLabels::new(&[0.1, 0.2], &[1, 1]).unwrap();
        assert!(matches!(roc_auc(&d), Err(Error::Undefined(_))));
        assert!(optimal_threshold(&d).is_err());
    }

    #[test]
    fn threshold_examples() {
        let p = opt(&[0.9, 0.8, 0.4, 0.3, 0.2], &[1, 1, 1, 0, 0]);
        assert_eq!((p.threshold, p.tpr, p.fpr), (0.4, 1.0, 0.0));
        let p = opt(&[0.9, 0.7, 0.6, 0.3], &[1, 0, 1, 0]);
        assert_eq!((p.threshold, p.tpr, p.fpr), (0.6, 1.0, 0.5));
        let p = opt(&[0.9, 0.8, 0.2, 0.1], &[0, 0, 1, 1]);
        assert!(p.threshold > 0.9);
        assert_eq!((p.tpr, p.fpr), (0.0, 0.0));
    }

    #[test]
    fn roc_curve_monotone() {
        let d = ScoredLabels::new(&[0.3, 0.3, 0.9, 0.1, 0.5], &[1, 0, 1, 0, 0]).unwrap();
        let c = roc_curve(&d).unwrap();
        assert_eq!(c.first().unwrap().tpr, 0.0);
        assert_eq!((c.last().unwrap().tpr, c.last().unwrap().fpr), (1.0, 1.0));
        assert!(c.windows(2).all(|w| w[1].tpr >= w[0].tpr && w[1].fpr >= w[0].fpr && w[1].threshold < w[0].threshold));
    }

    #[test]
    fn wasserstein_examples() {
        assert_eq!(wasserstein_1d(&[0.3, 0.1], &[0.1, 0.3]).unwrap(), 0.0);
        assert_eq!(wasserstein_1d(&[0.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(wasserstein_1d(&[0.0, 1.0], &[0.5]).unwrap(), 0.5);
        assert!(wasserstein_1d(&[], &[0.5]).is_err());
    }

    #[test]
    fn pairwise_examples() {
        let g = |v: &[f64]| v.to_vec();
        let m = pairwise_wasserstein(&[("a".into(), g(&[0.0, 1.0])), ("b".into(), g(&[1.0, 0.0]))]).unwrap();
        assert_eq!(m.matrix, vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
        assert_eq!((m.mean, m.std), (0.0, 0.0));

        let m = pairwise_wasserstein(&[("a".into(), g(&[0.0])), ("b".into(), g(&[1.0])), ("c".into(), g(&[2.0]))])
            .unwrap();
        assert_eq!(m.matrix[0], vec![0.0, 1.0, 2.0]);
        assert!((m.mean - 4.0 / 3.0).abs() < 1e-15);
        assert!((m.std - 2f64.sqrt() / 3.0).abs() < 1e-15);
        assert!(m.to_csv().starts_with("group,a,b,c\na,0,1,2\n"));

        assert!(pairwise_wasserstein(&[("a".into(), g(&[0.0]))]).is_err());
    }
}
