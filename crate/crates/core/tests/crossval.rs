mod common;

use std::collections::BTreeSet;

use batchqc::crossval::{
    evaluate_external, make_splits, nested_cv_grid_search, GridSpec, PipelineConfig, Preprocessing, SplitScheme,
};
use batchqc::dataset::FeatureTable;
use batchqc::ensemble::ForestParams;
use common::*;
use proptest::prelude::*;
use rand::Rng;

fn separable(seed: u64) -> FeatureTable {
    let mut r = rng(seed);
    let rows = (0..160)
        .map(|i| {
            let label = u8::from(r.random_bool(0.3));
            let f = (0..5).map(|j| if j < 2 { 3.0 * f64::from(label) } else { 0.0 } + normal(&mut r)).collect();
            (format!("site{}", i % 4), Some(label), f)
        })
        .collect();
    table(rows)
}

/// f0 and f1 encode the site and, within each site, the label with a
/// site-dependent sign; f2 carries a weaker site-independent signal; the rest
/// is noise.
fn site_leak(seed: u64) -> FeatureTable {
    let mut r = rng(seed);
    let signs: Vec<[f64; 2]> = (0..6).map(|_| [0, 1].map(|_| if r.random_bool(0.5) { 1.0 } else { -1.0 })).collect();
    let rows = (0..360)
        .map(|i| {
            let site = i % 6;
            let label = f64::from(u8::from(r.random_bool(0.4)));
            let mut f: Vec<f64> =
                (0..2).map(|k| 3.0 * site as f64 + signs[site][k] * label + 0.1 * normal(&mut r)).collect();
            f.push(1.5 * label + normal(&mut r));
            f.extend((0..3).map(|_| normal(&mut r)));
            (format!("site{site}"), Some(label as u8), f)
        })
        .collect();
    table(rows)
}

fn small_forest() -> ForestParams {
    ForestParams::random_forest().with_trees(40)
}

#[test]
fn separable_data_scores_high() {
    let t = separable(1);
    let grid = GridSpec::without_preprocessing(vec![ForestParams::random_forest()]);
    let scheme = SplitScheme::Loso;
    let (_, report) = nested_cv_grid_search(&t, &scheme, &scheme, &grid, &PipelineConfig::default(), 1).unwrap();
    assert!(report.mean.unwrap() >= 0.95, "{:?}", report.mean);
}

#[test]
fn one_cell_grid_always_wins() {
    let t = separable(2);
    let grid = GridSpec { preprocessing: vec![Preprocessing { center: true, ..Preprocessing::NONE }], classifiers: vec![small_forest()] };
    let outer = SplitScheme::StratifiedKfold { k: 3, seed: 5 };
    let (model, report) = nested_cv_grid_search(&t, &outer, &SplitScheme::Loso, &grid, &PipelineConfig::default(), 2).unwrap();
    assert_eq!(report.folds.len(), 3);
    assert!(report.folds.iter().all(|f| f.winner.index == 0));
    let scores: Vec<f64> = report.folds.iter().map(|f| f.outer_score.unwrap()).collect();
    assert!((report.mean.unwrap() - scores.iter().sum::<f64>() / 3.0).abs() <= 1e-12);
    assert_eq!(model.chosen_cell.index, 0);
}

#[test]
fn site_leak_favours_the_site_filter() {
    let grid = GridSpec {
        preprocessing: vec![Preprocessing::NONE, Preprocessing { ft_sites: true, ..Preprocessing::NONE }],
        classifiers: vec![small_forest()],
    };
    let majority_seeds = (0..10)
        .filter(|&seed| {
            let t = site_leak(seed);
            let scheme = SplitScheme::Loso;
            let (_, report) = nested_cv_grid_search(&t, &scheme, &scheme, &grid, &PipelineConfig::default(), seed).unwrap();
            let filtered = report.folds.iter().filter(|f| f.winner.preprocessing.ft_sites).count();
            2 * filtered > report.folds.len()
        })
        .count();
    assert!(majority_seeds >= 9, "ft_sites won a majority of folds in {majority_seeds}/10 seeds");
}

#[test]
fn self_evaluation_matches_direct_scoring() {
    let t = separable(3);
    let grid = GridSpec::without_preprocessing(vec![small_forest()]);
    let scheme = SplitScheme::Loso;
    let (model, _) = nested_cv_grid_search(&t, &scheme, &scheme, &grid, &PipelineConfig::default(), 3).unwrap();
    let eval = evaluate_external(&model, &t).unwrap();
    let p = model.predict_proba(&t).unwrap();
    assert_eq!(eval.probabilities, p);
    assert_eq!(eval.roc_auc.unwrap(), auc_pairs(&p, &t.labels().unwrap()));
    assert!(p.iter().all(|v| (0.0..=1.0).contains(v)) && p.len() == t.len());
}

#[test]
fn cell_scores_follow_cells_when_grid_is_permuted() {
    let t = separable(4);
    let pre = vec![
        Preprocessing::NONE,
        Preprocessing { center: true, scale: true, ..Preprocessing::NONE },
        Preprocessing { ft_noise: true, ..Preprocessing::NONE },
    ];
    let mut cfg = PipelineConfig::default();
    cfg.ft_noise.n_iterations = 3;
    let run = |pre: Vec<Preprocessing>| {
        let grid = GridSpec { preprocessing: pre, classifiers: vec![small_forest()] };
        nested_cv_grid_search(&t, &SplitScheme::Loso, &SplitScheme::Loso, &grid, &cfg, 4).unwrap().1
    };
    let forward = run(pre.clone());
    let reversed = run(pre.into_iter().rev().collect());
    for (a, b) in forward.folds.iter().zip(&reversed.folds) {
        let flipped: Vec<Option<f64>> = b.cell_scores.iter().rev().copied().collect();
        assert_eq!(a.cell_scores, flipped);
        assert_eq!(a.winner.preprocessing, b.winner.preprocessing);
    }
}

#[test]
fn report_is_independent_of_thread_count() {
    let t = site_leak(5);
    let grid = GridSpec {
        preprocessing: vec![Preprocessing::NONE, Preprocessing { ft_sites: true, center: true, ..Preprocessing::NONE }],
        classifiers: vec![small_forest(), ForestParams::extra_trees().with_trees(20)],
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            let outer = SplitScheme::StratifiedKfold { k: 3, seed: 1 };
            nested_cv_grid_search(&t, &outer, &SplitScheme::Loso, &grid, &PipelineConfig::default(), 6).unwrap()
        })
    };
    assert_eq!(run(1), run(4));
}

fn labelled_sites() -> impl Strategy<Value = FeatureTable> {
    prop::collection::vec((0usize..5, 0u8..=1), 6..60).prop_map(|rows| {
        table(rows.into_iter().map(|(s, l)| (format!("site{s}"), Some(l), vec![0.0])).collect())
    })
}

fn assert_partition(n: usize, train: &[usize], test: &[usize]) -> Result<(), TestCaseError> {
    let a: BTreeSet<usize> = train.iter().copied().collect();
    let b: BTreeSet<usize> = test.iter().copied().collect();
    prop_assert!(a.is_disjoint(&b));
    prop_assert_eq!(a.len() + b.len(), n);
    prop_assert!(train.windows(2).all(|w| w[0] < w[1]) && test.windows(2).all(|w| w[0] < w[1]));
    Ok(())
}

proptest! {
    #[test]
    fn loso_folds_hold_out_whole_sites(t in labelled_sites()) {
        prop_assume!(t.sites().len() >= 2);
        let folds = make_splits(&t, &SplitScheme::Loso).unwrap();
        prop_assert_eq!(folds.len(), t.sites().len());
        let site = |i: &usize| t.samples()[*i].site.clone();
        for f in &folds {
            assert_partition(t.len(), &f.train, &f.test)?;
            let test_sites: BTreeSet<String> = f.test.iter().map(site).collect();
            let train_sites: BTreeSet<String> = f.train.iter().map(site).collect();
            prop_assert_eq!(test_sites.len(), 1);
            prop_assert!(test_sites.is_disjoint(&train_sites));
        }
    }

    #[test]
    fn kfold_sizes_differ_by_at_most_one(t in labelled_sites(), k in 2usize..6, seed in any::<u64>(), shuffled in any::<bool>()) {
        prop_assume!(k <= t.len());
        let scheme = SplitScheme::Kfold { k, shuffled, seed };
        let folds = make_splits(&t, &scheme).unwrap();
        prop_assert_eq!(&folds, &make_splits(&t, &scheme).unwrap());
        let sizes: Vec<usize> = folds.iter().map(|f| f.test.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut covered: Vec<usize> = folds.iter().flat_map(|f| f.test.clone()).collect();
        covered.sort_unstable();
        prop_assert_eq!(covered, (0..t.len()).collect::<Vec<_>>());
        for f in &folds {
            assert_partition(t.len(), &f.train, &f.test)?;
        }
    }

    #[test]
    fn stratified_folds_balance_labels(t in labelled_sites(), k in 2usize..6, seed in any::<u64>()) {
        prop_assume!(k <= t.len());
        let folds = make_splits(&t, &SplitScheme::StratifiedKfold { k, seed }).unwrap();
        let labels = t.labels().unwrap();
        let pos: Vec<usize> = folds.iter().map(|f| f.test.iter().filter(|&&i| labels[i] == 1).count()).collect();
        prop_assert!(pos.iter().max().unwrap() - pos.iter().min().unwrap() <= 1);
        for f in &folds {
            assert_partition(t.len(), &f.train, &f.test)?;
        }
    }
}
