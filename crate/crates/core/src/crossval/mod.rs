//! Splitters, nested cross-validated grid search over preprocessing steps and
//! forest hyperparameters, final refit and external evaluation.
//!
//! All preprocessing is fitted on the training portion of each split. The
//! only place a test batch influences its own transform is the unknown-site
//! fallback of site-wise normalization.

mod pipeline;
mod splits;

pub use pipeline::{
    evaluate_external, fit_pipeline, Evaluation, FittedSteps, GridCell, PipelineConfig, Preprocessing,
    TrainedPipeline,
};
pub use splits::{make_splits, Fold, SplitScheme};

use std::collections::BTreeMap;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureTable;
use crate::ensemble::ForestParams;
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::stats::{mean, std_pop};
use pipeline::{fit_classifier, fit_preprocessing, score, transform_with};

/// Grid of preprocessing subsets × classifier settings, scored by ROC-AUC.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "Preprocessing::all_subsets")]
    pub preprocessing: Vec<Preprocessing>,
    #[serde(default = "default_classifiers")]
    pub classifiers: Vec<ForestParams>,
}

fn default_classifiers() -> Vec<ForestParams> {
    vec![ForestParams::random_forest()]
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { preprocessing: Preprocessing::all_subsets(), classifiers: default_classifiers() }
    }
}

impl GridSpec {
    /// Every preprocessing subset crossed with `classifiers`.
    pub fn full(classifiers: Vec<ForestParams>) -> Self {
        Self { preprocessing: Preprocessing::all_subsets(), classifiers }
    }

    /// Only the empty preprocessing subset.
    pub fn without_preprocessing(classifiers: Vec<ForestParams>) -> Self {
        Self { preprocessing: vec![Preprocessing::NONE], classifiers }
    }

    pub fn n_cells(&self) -> usize {
        self.preprocessing.len() * self.classifiers.len()
    }

    /// Cells in grid order: preprocessing-major, classifier-minor.
    pub fn cell(&self, index: usize) -> GridCell {
        let (p, c) = (index / self.classifiers.len(), index % self.classifiers.len());
        GridCell {
            index,
            preprocessing_index: p,
            classifier_index: c,
            preprocessing: self.preprocessing[p],
            steps: self.preprocessing[p].label(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.preprocessing.is_empty() || self.classifiers.is_empty() {
            return Err(Error::Config("grid needs at least one preprocessing cell and one classifier".into()));
        }
        self.classifiers.iter().try_for_each(ForestParams::validate)
    }

    /// Ordering key for tie-breaks: fewer steps, then fewer trees, then grid order.
    fn tie_key(&self, index: usize) -> (usize, usize, usize) {
        let cell = self.cell(index);
        (cell.preprocessing.n_steps(), self.classifiers[cell.classifier_index].n_trees, index)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterFoldRecord {
    pub fold: String,
    pub n_train: usize,
    pub n_test: usize,
    pub winner: GridCell,
    pub inner_mean_score: f64,
    /// `None` when the outer test portion holds a single class.
    pub outer_score: Option<f64>,
    /// Seed of the winner's refit on the outer-train portion.
    pub seed: u64,
    /// Mean inner ROC-AUC of every cell (grid order); `None` = disqualified.
    pub cell_scores: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CVReport {
    pub outer_scheme: SplitScheme,
    pub inner_scheme: SplitScheme,
    pub folds: Vec<OuterFoldRecord>,
    /// Mean and population std of the defined outer scores.
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

/// Mean inner ROC-AUC per cell for one training portion.
fn inner_scores(
    train: &FeatureTable,
    inner: &SplitScheme,
    grid: &GridSpec,
    cfg: &PipelineConfig,
    seed: u64,
    outer_index: u64,
) -> Result<Vec<Option<f64>>> {
    let folds = make_splits(train, inner)?;
    let n_pre = grid.preprocessing.len();
    let tasks: Vec<(usize, usize)> = (0..folds.len()).flat_map(|f| (0..n_pre).map(move |p| (f, p))).collect();
    // per (inner fold, preprocessing): one score per classifier
    let results: Vec<Vec<Option<f64>>> = tasks
        .par_iter()
        .map(|&(f, p)| {
            let fold = &folds[f];
            let fold_seed = rng::derive(seed, &[tag::CV_INNER, outer_index, f as u64]);
            let inner_train = train.subset(&fold.train);
            let inner_test = train.subset(&fold.test);
            let labels = inner_test.require_labels()?;
            let pre = fit_preprocessing(&inner_train, grid.preprocessing[p], cfg, fold_seed)?;
            let x = transform_with(&pre.steps, &pre.features, &inner_test)?.matrix();
            grid.classifiers
                .iter()
                .map(|params| {
                    let forest = fit_classifier(&pre, params, fold_seed)?;
                    score(&crate::ensemble::predict_proba(&forest, &x)?, &labels)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut per_cell: Vec<Vec<f64>> = vec![Vec::new(); grid.n_cells()];
    let mut excluded = 0;
    for (&(_, p), scores) in tasks.iter().zip(&results) {
        for (c, s) in scores.iter().enumerate() {
            match s {
                Some(v) => per_cell[p * grid.classifiers.len() + c].push(*v),
                None => excluded += 1,
            }
        }
    }
    if excluded > 0 {
        warn!("{excluded} inner (fold, cell) scores undefined (single-class test fold); excluded from means");
    }
    Ok(per_cell.iter().map(|s| if s.is_empty() { None } else { Some(mean(s)) }).collect())
}

fn pick_winner(grid: &GridSpec, scores: &[Option<f64>]) -> Option<usize> {
    (0..scores.len()).filter(|&i| scores[i].is_some()).min_by(|&a, &b| {
        let (sa, sb) = (scores[a].unwrap(), scores[b].unwrap());
        sb.total_cmp(&sa).then(grid.tie_key(a).cmp(&grid.tie_key(b)))
    })
}

/// Nested cross-validation: the inner loop picks a cell per outer fold, the
/// outer loop scores that choice, and the cell winning most outer folds is
/// refitted on the whole table.
pub fn nested_cv_grid_search(
    table: &FeatureTable,
    outer: &SplitScheme,
    inner: &SplitScheme,
    grid: &GridSpec,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<(TrainedPipeline, CVReport)> {
    grid.validate()?;
    table.require_labels()?;
    let outer_folds = make_splits(table, outer)?;
    let mut records = Vec::with_capacity(outer_folds.len());
    for (o, fold) in outer_folds.iter().enumerate() {
        let train = table.subset(&fold.train);
        let test = table.subset(&fold.test);
        let cell_scores = inner_scores(&train, inner, grid, cfg, seed, o as u64)?;
        let winner = pick_winner(grid, &cell_scores).ok_or_else(|| {
            Error::Undefined(format!("outer fold `{}`: every grid cell has undefined inner scores", fold.name))
        })?;
        let cell = grid.cell(winner);
        let fold_seed = rng::derive(seed, &[tag::CV_OUTER, o as u64]);
        let model = fit_pipeline(&train, cell.clone(), &grid.classifiers[cell.classifier_index], cfg, fold_seed)?;
        let outer_score = score(&model.predict_proba(&test)?, &test.require_labels()?)?;
        if outer_score.is_none() {
            warn!("outer fold `{}` has a single class; its score is undefined", fold.name);
        }
        records.push(OuterFoldRecord {
            fold: fold.name.clone(),
            n_train: fold.train.len(),
            n_test: fold.test.len(),
            winner: cell,
            inner_mean_score: cell_scores[winner].unwrap(),
            outer_score,
            seed: fold_seed,
            cell_scores,
        });
    }

    // plurality over outer folds; ties by mean outer score of the won folds, then grid order
    let mut wins: BTreeMap<usize, Vec<Option<f64>>> = BTreeMap::new();
    for r in &records {
        wins.entry(r.winner.index).or_default().push(r.outer_score);
    }
    let won_mean = |v: &Vec<Option<f64>>| {
        let defined: Vec<f64> = v.iter().flatten().copied().collect();
        if defined.is_empty() {
            f64::NEG_INFINITY
        } else {
            mean(&defined)
        }
    };
    let final_index = *wins
        .iter()
        .max_by(|a, b| {
            a.1.len()
                .cmp(&b.1.len())
                .then(won_mean(a.1).total_cmp(&won_mean(b.1)))
                .then(b.0.cmp(a.0))
        })
        .map(|(i, _)| i)
        .expect("at least one outer fold");

    let outer_scores: Vec<f64> = records.iter().filter_map(|r| r.outer_score).collect();
    let report = CVReport {
        outer_scheme: outer.clone(),
        inner_scheme: inner.clone(),
        folds: records,
        mean: (!outer_scores.is_empty()).then(|| mean(&outer_scores)),
        std: (!outer_scores.is_empty()).then(|| std_pop(&outer_scores)),
    };
    let cell = grid.cell(final_index);
    let final_seed = rng::derive(seed, &[tag::CV_FINAL]);
    let mut model = fit_pipeline(table, cell.clone(), &grid.classifiers[cell.classifier_index], cfg, final_seed)?;
    model.cv_report = Some(report.clone());
    Ok((model, report))
}
