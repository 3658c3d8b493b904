mod common;

use batchqc::cluster::{batch_effect_score, homogeneity_completeness, kmeans, kmeans_from, KMeansConfig};
use batchqc::dataset::GroupBy;
use batchqc::matrix::Matrix;
use common::*;
use proptest::prelude::*;

/// Minimum 2-means inertia over every bipartition of the rows.
fn brute_force_inertia(x: &Matrix) -> (f64, Vec<usize>) {
    let n = x.n_rows();
    let mut best = (f64::INFINITY, Vec::new());
    for mask in 1u32..(1 << (n - 1)) {
        let assign: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
        let mut inertia = 0.0;
        for c in 0..2 {
            let members: Vec<&[f64]> = (0..n).filter(|&i| assign[i] == c).map(|i| x.row(i)).collect();
            for j in 0..x.n_cols() {
                let m = members.iter().map(|r| r[j]).sum::<f64>() / members.len() as f64;
                inertia += members.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>();
            }
        }
        if inertia < best.0 {
            best = (inertia, assign);
        }
    }
    best
}

fn small_instance() -> impl Strategy<Value = Matrix> {
    (3usize..=8).prop_flat_map(|n| {
        prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2), n).prop_map(|rows| Matrix::from_rows(&rows))
    })
}

fn two_clusters() -> KMeansConfig {
    KMeansConfig { k: 2, ..Default::default() }
}

#[test]
fn blobs_recover_brute_force_partition() {
    let mut r = rng(1);
    let rows: Vec<Vec<f64>> = (0..8)
        .map(|i| {
            let c = if i < 4 { 0.0 } else { 10.0 };
            vec![c + 0.3 * normal(&mut r), c + 0.3 * normal(&mut r)]
        })
        .collect();
    let x = Matrix::from_rows(&rows);
    let (_, optimal) = brute_force_inertia(&x);
    for seed in 0..10 {
        let res = kmeans(&x, &two_clusters(), seed).unwrap();
        let (h, c) = homogeneity_completeness(&optimal, &res.assignments);
        assert_eq!((h, c), (1.0, 1.0));
    }
}

proptest! {
    #[test]
    fn inertia_bounded_by_brute_force_and_monotone(x in small_instance(), seed in 0u64..1000) {
        let (optimal, _) = brute_force_inertia(&x);
        let res = kmeans(&x, &two_clusters(), seed).unwrap();
        prop_assert!(res.inertia >= optimal - 1e-9);
        for w in res.inertia_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
        }
        let mut best = f64::INFINITY;
        for a in 0..x.n_rows() {
            for b in a + 1..x.n_rows() {
                best = best.min(kmeans_from(&x, &two_clusters(), &[a, b]).unwrap().inertia);
            }
        }
        prop_assert!((best - optimal).abs() <= 1e-9 * (1.0 + optimal));
    }

    #[test]
    fn hc_in_unit_interval_and_permutation_invariant(
        pairs in prop::collection::vec((0usize..4, 0usize..5), 1..50),
        shift in 1usize..7,
    ) {
        let classes: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let clusters: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let (h, c) = homogeneity_completeness(&classes, &clusters);
        prop_assert!((0.0..=1.0).contains(&h) && (0.0..=1.0).contains(&c));
        let (oh, oc) = hc_entropy(&classes, &clusters);
        prop_assert!((h - oh).abs() <= 1e-12 && (c - oc).abs() <= 1e-12);
        let relabel_k: Vec<usize> = clusters.iter().map(|k| (k + shift) % 5 + 10).collect();
        let relabel_c: Vec<usize> = classes.iter().map(|c| 3 - c).collect();
        let (h2, c2) = homogeneity_completeness(&relabel_c, &relabel_k);
        prop_assert!((h - h2).abs() <= 1e-12 && (c - c2).abs() <= 1e-12);
    }
}

#[test]
fn one_hot_site_features_are_fully_recovered() {
    let rows = (0..60)
        .map(|i| {
            let s = i % 3;
            let f = (0..3).map(|j| f64::from(u8::from(j == s))).collect();
            (format!("site{s}"), Some(0), f)
        })
        .collect();
    let score = batch_effect_score(&table(rows), GroupBy::Site, &KMeansConfig { n_runs: 50, ..Default::default() }).unwrap();
    assert!(score.completeness_mean > 0.95 && score.homogeneity_mean > 0.95, "{score:?}");
}

#[test]
fn independent_noise_scores_near_zero() {
    let mut r = rng(2);
    let rows = (0..200)
        .map(|i| (format!("site{}", i % 2), Some(0), (0..4).map(|_| normal(&mut r)).collect()))
        .collect();
    let score = batch_effect_score(&table(rows), GroupBy::Site, &KMeansConfig { n_runs: 50, ..Default::default() }).unwrap();
    assert!(score.completeness_mean < 0.1 && score.homogeneity_mean < 0.1, "{score:?}");
    assert!(score.completeness_std.is_finite() && score.homogeneity_std.is_finite());
}

#[test]
fn batch_effect_score_is_deterministic_across_threads() {
    let mut r = rng(3);
    let rows: Vec<_> = (0..120)
        .map(|i| (format!("site{}", i % 4), Some(0), (0..5).map(|_| normal(&mut r) + (i % 4) as f64 * 0.5).collect()))
        .collect();
    let t = table(rows);
    let cfg = KMeansConfig { n_runs: 40, seed: 17, ..Default::default() };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| batch_effect_score(&t, GroupBy::Site, &cfg).unwrap())
    };
    assert_eq!(run(1), run(4));
}
