mod common;

use std::collections::BTreeSet;

use batchqc::dataset::FeatureTable;
use batchqc::select::{ft_noise, ft_sites, FtNoiseConfig, FtSitesConfig, SelectionResult};
use common::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn two_site_table(seed: u64, with_copy: bool, n_noise: usize) -> FeatureTable {
    let mut r = rng(seed);
    let rows = (0..400)
        .map(|i| {
            let site = i % 2;
            let mut f: Vec<f64> = if with_copy { vec![site as f64] } else { Vec::new() };
            f.extend((0..n_noise).map(|_| normal(&mut r)));
            (format!("site{site}"), Some(u8::from(r.random_bool(0.3))), f)
        })
        .collect();
    table(rows)
}

fn signal_and_noise(seed: u64) -> (FeatureTable, Vec<u8>) {
    let mut r = rng(seed);
    let rows = (0..1000)
        .map(|_| {
            let label = u8::from(r.random_bool(0.4));
            let f = vec![f64::from(label) + 0.3 * normal(&mut r), normal(&mut r)];
            ("site0".to_string(), Some(label), f)
        })
        .collect();
    let t = table(rows);
    let labels = t.labels().unwrap();
    (t, labels)
}

fn assert_partition(t: &FeatureTable, res: &SelectionResult) {
    assert!(!res.kept.is_empty());
    let kept: BTreeSet<&String> = res.kept.iter().collect();
    let removed: BTreeSet<&String> = res.removed.iter().map(|f| &f.name).collect();
    assert!(kept.is_disjoint(&removed));
    let all: BTreeSet<&String> = t.schema().names().iter().collect();
    assert_eq!(kept.union(&removed).copied().collect::<BTreeSet<_>>(), all);
}

#[test]
fn site_copy_is_removed_and_noise_kept() {
    let hits = (0..10)
        .filter(|&seed| {
            let t = two_site_table(seed, true, 2);
            let res = ft_sites(&t, &FtSitesConfig { seed, ..Default::default() }).unwrap();
            assert_partition(&t, &res);
            res.removed.len() == 1 && res.removed[0].name == "f0"
        })
        .count();
    assert!(hits >= 9, "{hits}/10");
}

#[test]
fn site_independent_features_survive() {
    let hits = (0..10)
        .filter(|&seed| {
            let t = two_site_table(100 + seed, false, 4);
            ft_sites(&t, &FtSitesConfig { seed, ..Default::default() }).unwrap().removed.is_empty()
        })
        .count();
    assert!(hits >= 9, "{hits}/10");
}

#[test]
fn ft_sites_respects_removal_budget() {
    let mut r = rng(3);
    // Every feature leaks the site, so only the budget stops the loop.
    let rows = (0..300)
        .map(|i| {
            let site = i % 3;
            let f = (0..6).map(|j| site as f64 * (j + 1) as f64 + 0.01 * normal(&mut r)).collect();
            (format!("site{site}"), Some(u8::from(i % 4 == 0)), f)
        })
        .collect();
    let t = table(rows);
    for fraction in [0.2, 0.5, 0.8] {
        let res = ft_sites(&t, &FtSitesConfig { max_remove_fraction: fraction, ..Default::default() }).unwrap();
        assert!(res.removed.len() as f64 <= fraction * 6.0, "{} removed at {fraction}", res.removed.len());
        assert_partition(&t, &res);
    }
}

#[test]
fn informative_feature_kept_noise_removed() {
    let hits = (0..10)
        .filter(|&seed| {
            let (t, labels) = signal_and_noise(200 + seed);
            let res = ft_noise(&t, &labels, &FtNoiseConfig { seed, ..Default::default() }).unwrap();
            assert_partition(&t, &res);
            res.kept == ["f0"]
        })
        .count();
    assert!(hits >= 9, "{hits}/10");
}

#[test]
fn shuffled_labels_remove_almost_everything() {
    let mut r = rng(77);
    let rows: Vec<_> = (0..400)
        .map(|_| ("site0".to_string(), Some(u8::from(r.random_bool(0.5))), (0..20).map(|_| normal(&mut r)).collect()))
        .collect();
    let t = table(rows);
    let mut labels = t.labels().unwrap();
    labels.shuffle(&mut r);
    let res = ft_noise(&t, &labels, &FtNoiseConfig { seed: 4, ..Default::default() }).unwrap();
    assert_partition(&t, &res);
    assert!(res.removed.len() >= 18, "only {} of 20 removed", res.removed.len());
    if res.diagnostics.forced_keep {
        assert_eq!(res.kept.len(), 1);
    }
}

#[test]
fn raising_snr_threshold_never_grows_kept_set() {
    for seed in 0..4 {
        let mut r = rng(300 + seed);
        let rows: Vec<_> = (0..300)
            .map(|_| {
                let label = u8::from(r.random_bool(0.5));
                let mut f: Vec<f64> = (1..=4).map(|k| f64::from(label) * 0.25 * f64::from(k) + normal(&mut r)).collect();
                f.extend((0..4).map(|_| normal(&mut r)));
                ("site0".to_string(), Some(label), f)
            })
            .collect();
        let t = table(rows);
        let labels = t.labels().unwrap();
        let kept_at = |snr: f64| -> BTreeSet<String> {
            let cfg = FtNoiseConfig { snr_threshold: snr, seed, ..Default::default() };
            ft_noise(&t, &labels, &cfg).unwrap().kept.into_iter().collect()
        };
        let (a, b, c) = (kept_at(0.5), kept_at(1.0), kept_at(2.0));
        assert!(b.is_subset(&a) && c.is_subset(&b), "seed {seed}: {a:?} {b:?} {c:?}");
    }
}

#[test]
fn filters_are_deterministic_across_thread_counts() {
    let t = two_site_table(9, true, 5);
    let labels = t.labels().unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            let cfg = FtNoiseConfig { n_iterations: 4, seed: 2, ..Default::default() };
            (ft_sites(&t, &FtSitesConfig { seed: 2, ..Default::default() }).unwrap(), ft_noise(&t, &labels, &cfg).unwrap())
        })
    };
    assert_eq!(run(1), run(4));
}
