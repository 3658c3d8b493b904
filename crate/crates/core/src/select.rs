//! Feature filters built on extremely randomized trees.
//!
//! * `ft_sites` repeatedly fits a site classifier and drops the most
//!   important feature while the site is still predictable above chance.
//! * `ft_noise` compares each feature's importance for the quality label with
//!   the importance of permuted copies of real columns, and keeps features
//!   that beat the noise in enough repetitions.

use log::warn;
use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureTable, GroupBy};
use crate::ensemble::{fit_forest, ForestParams, SplitMode};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{self, tag};

fn default_filter_forest() -> ForestParams {
    ForestParams::extra_trees()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FtSitesConfig {
    /// Tolerated excess of balanced accuracy over chance (1 / n_sites).
    pub margin: f64,
    pub max_remove_fraction: f64,
    pub holdout_fraction: f64,
    pub forest: ForestParams,
    pub seed: u64,
}

impl Default for FtSitesConfig {
    fn default() -> Self {
        Self {
            margin: 0.05,
            max_remove_fraction: 0.5,
            holdout_fraction: 0.25,
            forest: default_filter_forest(),
            seed: 0,
        }
    }
}

impl FtSitesConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin >= 0.0) {
            return Err(Error::Config("ft_sites margin must be >= 0".into()));
        }
        if !(self.max_remove_fraction > 0.0 && self.max_remove_fraction < 1.0) {
            return Err(Error::Config("ft_sites max_remove_fraction must be in (0, 1)".into()));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::Config("ft_sites holdout_fraction must be in (0, 1)".into()));
        }
        if self.forest.split_mode != SplitMode::ExtraRandomSplit {
            return Err(Error::Config("ft_sites requires an extra_random_split forest".into()));
        }
        self.forest.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FtNoiseConfig {
    pub n_iterations: usize,
    /// Number of permuted noise columns; `None` means one per real feature.
    pub n_noise_features: Option<usize>,
    pub snr_threshold: f64,
    pub survival_fraction: f64,
    pub forest: ForestParams,
    pub seed: u64,
}

impl Default for FtNoiseConfig {
    fn default() -> Self {
        Self {
            n_iterations: 10,
            n_noise_features: None,
            snr_threshold: 1.0,
            survival_fraction: 0.5,
            forest: default_filter_forest(),
            seed: 0,
        }
    }
}

impl FtNoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iterations == 0 {
            return Err(Error::Config("ft_noise n_iterations must be >= 1".into()));
        }
        if self.n_noise_features == Some(0) {
            return Err(Error::Config("ft_noise n_noise_features must be >= 1".into()));
        }
        if !(self.snr_threshold >= 0.0) {
            return Err(Error::Config("ft_noise snr_threshold must be >= 0".into()));
        }
        if !(self.survival_fraction > 0.0 && self.survival_fraction <= 1.0) {
            return Err(Error::Config("ft_noise survival_fraction must be in (0, 1]".into()));
        }
        if self.forest.split_mode != SplitMode::ExtraRandomSplit {
            return Err(Error::Config("ft_noise requires an extra_random_split forest".into()));
        }
        self.forest.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStep {
    FtSites,
    FtNoise,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemovedFeature {
    pub name: String,
    /// ft_sites: holdout balanced accuracy when the feature was removed.
    /// ft_noise: number of iterations the feature survived.
    pub diagnostic: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionDiagnostics {
    /// ft_sites: balanced accuracy at each loop iteration.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub accuracy_trace: Vec<f64>,
    /// ft_noise: per kept feature, iterations survived (same order as `kept`).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub survival_counts: Vec<usize>,
    /// Set when the filter did not run (e.g. a single site).
    pub skipped: bool,
    /// Set when every feature failed and the best one was kept anyway.
    pub forced_keep: bool,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub step: SelectionStep,
    pub kept: Vec<String>,
    pub removed: Vec<RemovedFeature>,
    pub diagnostics: SelectionDiagnostics,
}

impl SelectionResult {
    fn passthrough(step: SelectionStep, table: &FeatureTable, note: String) -> Self {
        warn!("{step:?} skipped: {note}");
        SelectionResult {
            step,
            kept: table.schema().names().to_vec(),
            removed: Vec::new(),
            diagnostics: SelectionDiagnostics {
                accuracy_trace: Vec::new(),
                survival_counts: Vec::new(),
                skipped: true,
                forced_keep: false,
                note: Some(note),
            },
        }
    }
}

/// Stratified K-fold assignment with `K = round(1 / holdout_fraction)`, so that
/// every sample is scored exactly once as held-out data.
fn holdout_folds(classes: &[usize], n_classes: usize, holdout_fraction: f64, seed: u64) -> Vec<usize> {
    let k = ((1.0 / holdout_fraction).round() as usize).max(2);
    let mut fold = vec![0; classes.len()];
    let mut rng = rng::stream(seed, &[tag::FT_SITES, u64::MAX]);
    let mut next = 0;
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..classes.len()).filter(|&i| classes[i] == c).collect();
        members.shuffle(&mut rng);
        for i in members {
            fold[i] = next % k;
            next += 1;
        }
    }
    fold
}

fn balanced_accuracy(truth: &[usize], pred: &[usize], n_classes: usize) -> f64 {
    let mut hit = vec![0usize; n_classes];
    let mut tot = vec![0usize; n_classes];
    for (&t, &p) in truth.iter().zip(pred) {
        tot[t] += 1;
        if t == p {
            hit[t] += 1;
        }
    }
    let recalls: Vec<f64> = tot
        .iter()
        .zip(&hit)
        .filter(|(&t, _)| t > 0)
        .map(|(&t, &h)| h as f64 / t as f64)
        .collect();
    recalls.iter().sum::<f64>() / recalls.len() as f64
}

/// Drops features that predict the acquisition site.
///
/// Each iteration fits extremely randomized trees to predict the site on the
/// kept features and measures held-out balanced accuracy (out-of-fold over a
/// stratified split into `round(1 / holdout_fraction)` parts). While that
/// accuracy exceeds `1 / n_sites + margin` and the removal budget allows,
/// the most important feature is removed and the site model refitted.
pub fn ft_sites(table: &FeatureTable, cfg: &FtSitesConfig) -> Result<SelectionResult> {
    cfg.validate()?;
    let groups = table.group_indices(GroupBy::Site);
    if groups.len() < 2 {
        return Ok(SelectionResult::passthrough(SelectionStep::FtSites, table, "fewer than two sites".into()));
    }
    if let Some((site, _)) = groups.iter().find(|(_, rows)| rows.len() < 2) {
        return Ok(SelectionResult::passthrough(
            SelectionStep::FtSites,
            table,
            format!("site `{site}` has fewer than two samples"),
        ));
    }
    let n_sites = groups.len();
    let mut site_of = vec![0usize; table.len()];
    for (s, rows) in groups.values().enumerate() {
        for &i in rows {
            site_of[i] = s;
        }
    }
    let folds = holdout_folds(&site_of, n_sites, cfg.holdout_fraction, cfg.seed);
    let n_folds = folds.iter().max().map_or(1, |m| m + 1);
    let chance = 1.0 / n_sites as f64;
    let full = table.matrix();
    let names = table.schema().names();
    let max_removals = cfg.max_remove_fraction * names.len() as f64;

    let mut kept: Vec<usize> = (0..names.len()).collect();
    let mut removed = Vec::new();
    let mut trace = Vec::new();
    for iteration in 0.. {
        if kept.len() <= 1 {
            break;
        }
        let x = full.select_cols(&kept);
        let mut pred = vec![0usize; table.len()];
        let mut importances = vec![0.0; kept.len()];
        for f in 0..n_folds {
            let train: Vec<usize> = (0..table.len()).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..table.len()).filter(|&i| folds[i] == f).collect();
            let y: Vec<usize> = train.iter().map(|&i| site_of[i]).collect();
            let params = cfg.forest.clone().with_seed(rng::derive(cfg.seed, &[tag::FT_SITES, iteration, f as u64]));
            let model = fit_forest(&x.select_rows(&train), &y, &params)?;
            for (&i, p) in test.iter().zip(model.predict(&x.select_rows(&test))?) {
                pred[i] = p;
            }
            for (a, b) in importances.iter_mut().zip(&model.importances) {
                *a += b;
            }
        }
        let acc = balanced_accuracy(&site_of, &pred, n_sites);
        trace.push(acc);
        if acc <= chance + cfg.margin || (removed.len() + 1) as f64 > max_removals {
            break;
        }
        let top = importances
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
            .0;
        let feature = kept.remove(top);
        removed.push(RemovedFeature { name: names[feature].clone(), diagnostic: acc });
    }
    Ok(SelectionResult {
        step: SelectionStep::FtSites,
        kept: kept.iter().map(|&j| names[j].clone()).collect(),
        removed,
        diagnostics: SelectionDiagnostics {
            accuracy_trace: trace,
            survival_counts: Vec::new(),
            skipped: false,
            forced_keep: false,
            note: None,
        },
    })
}

/// Per-iteration real-feature importances and max noise importance.
/// Exposed so that threshold sweeps can share the fitted forests.
pub fn noise_importances(table: &FeatureTable, labels: &[u8], cfg: &FtNoiseConfig) -> Result<Vec<(Vec<f64>, f64)>> {
    cfg.validate()?;
    if labels.len() != table.len() {
        return Err(Error::Schema(format!("{} labels for {} samples", labels.len(), table.len())));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::Undefined("ft_noise needs both classes in the labels".into()));
    }
    let x = table.matrix();
    let p = x.n_cols();
    let n = x.n_rows();
    let n_noise = cfg.n_noise_features.unwrap_or(p);
    let y: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let columns: Vec<usize> = (0..p).collect();
    (0..cfg.n_iterations as u64)
        .map(|it| {
            let mut rng = rng::stream(cfg.seed, &[tag::FT_NOISE, it]);
            let sources: Vec<usize> = if n_noise <= p {
                let mut c = columns.clone();
                c.shuffle(&mut rng);
                c.truncate(n_noise);
                c
            } else {
                (0..n_noise).map(|_| *columns.choose(&mut rng).unwrap()).collect()
            };
            let mut noise = Matrix::zeros(n, n_noise);
            let mut perm: Vec<usize> = (0..n).collect();
            for (k, &src) in sources.iter().enumerate() {
                perm.shuffle(&mut rng);
                for (i, &from) in perm.iter().enumerate() {
                    noise.set(i, k, x.get(from, src));
                }
            }
            // Split ties go to the lowest column index, so a fixed [real | noise]
            // layout would favour real columns. Interleave them at random.
            let mut layout: Vec<usize> = (0..p + n_noise).collect();
            layout.shuffle(&mut rng);
            let stacked = x.hstack(&noise).select_cols(&layout);
            let params = cfg.forest.clone().with_seed(rng::derive(cfg.seed, &[tag::FT_NOISE, it, 1]));
            let model = fit_forest(&stacked, &y, &params)?;
            let mut imp = vec![0.0; p + n_noise];
            for (pos, &col) in layout.iter().enumerate() {
                imp[col] = model.importances[pos];
            }
            let max_noise = imp[p..].iter().cloned().fold(0.0, f64::max);
            imp.truncate(p);
            Ok((imp, max_noise))
        })
        .collect()
}

/// Keeps features whose importance beats `snr_threshold ×` the strongest
/// permuted-noise column in at least `survival_fraction` of the iterations.
pub fn ft_noise(table: &FeatureTable, labels: &[u8], cfg: &FtNoiseConfig) -> Result<SelectionResult> {
    let runs = noise_importances(table, labels, cfg)?;
    Ok(vote(table.schema().names(), &runs, cfg.snr_threshold, cfg.survival_fraction))
}

/// Survival voting over precomputed iterations.
pub fn vote(names: &[String], runs: &[(Vec<f64>, f64)], snr_threshold: f64, survival_fraction: f64) -> SelectionResult {
    let p = names.len();
    let mut survived = vec![0usize; p];
    let mut mean_imp = vec![0.0; p];
    for (real, max_noise) in runs {
        for j in 0..p {
            // equality survives, so a zero threshold keeps everything
            if real[j] >= snr_threshold * max_noise {
                survived[j] += 1;
            }
            mean_imp[j] += real[j] / runs.len() as f64;
        }
    }
    let needed = (survival_fraction * runs.len() as f64).ceil() as usize;
    let mut keep: Vec<bool> = survived.iter().map(|&s| s >= needed).collect();
    let forced = !keep.iter().any(|&k| k);
    if forced {
        let best = mean_imp
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
            .0;
        keep[best] = true;
        warn!("ft_noise: no feature beat the noise; keeping `{}`", names[best]);
    }
    SelectionResult {
        step: SelectionStep::FtNoise,
        kept: (0..p).filter(|&j| keep[j]).map(|j| names[j].clone()).collect(),
        removed: (0..p)
            .filter(|&j| !keep[j])
            .map(|j| RemovedFeature { name: names[j].clone(), diagnostic: survived[j] as f64 })
            .collect(),
        diagnostics: SelectionDiagnostics {
            accuracy_trace: Vec::new(),
            survival_counts: (0..p).filter(|&j| keep[j]).map(|j| survived[j]).collect(),
            skipped: false,
            forced_keep: forced,
            note: forced.then(|| "no feature beat the noise; best mean importance kept".to_string()),
        },
    }
}
