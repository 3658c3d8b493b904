//! Tree ensembles: random forests (best Gini split among a random feature
//! subset, bootstrap resampling) and extremely randomized trees (one uniform
//! random threshold per candidate feature).
//!
//! Every tree draws from its own RNG stream keyed by `(seed, tree index)`, so
//! a fitted forest is a pure function of `(X, y, params)` no matter how many
//! worker threads build it.

mod tree;

pub use tree::{Node, Tree};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{self, tag};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    Fraction(f64),
    All,
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (n_features as f64).sqrt().floor() as usize,
            MaxFeatures::Fraction(f) => (f * n_features as f64).floor() as usize,
            MaxFeatures::All => n_features,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    RfBestSplit,
    ExtraRandomSplit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    None,
    Balanced,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawForestParams {
    #[serde(default = "default_n_trees")]
    n_trees: usize,
    #[serde(default)]
    max_depth: Option<usize>,
    #[serde(default = "default_min_leaf")]
    min_samples_leaf: usize,
    #[serde(default = "default_max_features")]
    max_features: MaxFeatures,
    #[serde(default = "default_split_mode")]
    split_mode: SplitMode,
    #[serde(default)]
    bootstrap: Option<bool>,
    #[serde(default = "default_class_weight")]
    class_weight: ClassWeight,
    #[serde(default)]
    seed: u64,
}

fn default_n_trees() -> usize {
    100
}
fn default_min_leaf() -> usize {
    1
}
fn default_max_features() -> MaxFeatures {
    MaxFeatures::Sqrt
}
fn default_split_mode() -> SplitMode {
    SplitMode::RfBestSplit
}
fn default_class_weight() -> ClassWeight {
    ClassWeight::Balanced
}

impl TryFrom<RawForestParams> for ForestParams {
    type Error = Error;

    fn try_from(r: RawForestParams) -> Result<Self> {
        let p = ForestParams {
            n_trees: r.n_trees,
            max_depth: r.max_depth,
            min_samples_leaf: r.min_samples_leaf,
            max_features: r.max_features,
            split_mode: r.split_mode,
            bootstrap: r.bootstrap.unwrap_or(r.split_mode == SplitMode::RfBestSplit),
            class_weight: r.class_weight,
            seed: r.seed,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Hyperparameters of a forest. Omitted JSON fields take the random-forest
/// defaults; `bootstrap` defaults to on for best splits and off for
/// extremely randomized splits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawForestParams")]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub split_mode: SplitMode,
    pub bootstrap: bool,
    pub class_weight: ClassWeight,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self::random_forest()
    }
}

impl ForestParams {
    pub fn random_forest() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            max_features: MaxFeatures::Sqrt,
            split_mode: SplitMode::RfBestSplit,
            bootstrap: true,
            class_weight: ClassWeight::Balanced,
            seed: 0,
        }
    }

    pub fn extra_trees() -> Self {
        Self { split_mode: SplitMode::ExtraRandomSplit, bootstrap: false, ..Self::random_forest() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_trees(mut self, n_trees: usize) -> Self {
        self.n_trees = n_trees;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("min_samples_leaf must be at least 1".into()));
        }
        if self.max_depth == Some(0) {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        if let MaxFeatures::Fraction(f) = self.max_features {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("max_features fraction {f} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Forest {
    pub params: ForestParams,
    pub n_features: usize,
    pub n_classes: usize,
    pub importances: Vec<f64>,
    pub trees: Vec<Tree>,
}

fn class_weights(y: &[usize], n_classes: usize, mode: ClassWeight) -> Vec<f64> {
    match mode {
        ClassWeight::None => vec![1.0; n_classes],
        ClassWeight::Balanced => {
            let mut counts = vec![0usize; n_classes];
            for &c in y {
                counts[c] += 1;
            }
            let present = counts.iter().filter(|&&c| c > 0).count() as f64;
            counts
                .iter()
                .map(|&c| if c == 0 { 0.0 } else { y.len() as f64 / (present * c as f64) })
                .collect()
        }
    }
}

/// Fits a forest on `x` (samples × features) with class labels `y` in `0..k`.
pub fn fit_forest(x: &Matrix, y: &[usize], params: &ForestParams) -> Result<Forest> {
    params.validate()?;
    if x.n_rows() == 0 || x.n_cols() == 0 {
        return Err(Error::Empty("cannot fit a forest on an empty matrix".into()));
    }
    if y.len() != x.n_rows() {
        return Err(Error::Schema(format!("{} labels for {} samples", y.len(), x.n_rows())));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("forest training matrix".into()));
    }
    let n_classes = y.iter().max().map_or(2, |m| (m + 1).max(2));
    let class_w = class_weights(y, n_classes, params.class_weight);
    let sample_weight: Vec<f64> = y.iter().map(|&c| class_w[c]).collect();
    let n_candidates = params.max_features.resolve(x.n_cols());
    let n = x.n_rows();

    let grown: Vec<(Tree, Vec<f64>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(params.seed, &[tag::TREE, t as u64]);
            let mut idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut g = tree::Grower::new(x, y, &sample_weight, n_classes, params, n_candidates, rng);
            g.grow(&mut idx, 0);
            (Tree { nodes: g.nodes }, g.importances)
        })
        .collect();

    let mut importances = vec![0.0; x.n_cols()];
    for (_, imp) in &grown {
        for (a, b) in importances.iter_mut().zip(imp) {
            *a += b;
        }
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        importances.iter_mut().for_each(|v| *v /= total);
    }
    Ok(Forest {
        params: params.clone(),
        n_features: x.n_cols(),
        n_classes,
        importances,
        trees: grown.into_iter().map(|(t, _)| t).collect(),
    })
}

impl Forest {
    /// Assembles a forest from explicit trees (importances all zero).
    pub fn from_trees(trees: Vec<Tree>, n_features: usize, n_classes: usize, params: ForestParams) -> Result<Self> {
        let f = Forest { params, n_features, n_classes, importances: vec![0.0; n_features], trees };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::Schema("forest has no trees".into()));
        }
        if self.importances.len() != self.n_features {
            return Err(Error::Schema("importance vector length differs from feature count".into()));
        }
        for (t, tree) in self.trees.iter().enumerate() {
            tree.validate(self.n_features, self.n_classes)
                .map_err(|e| Error::Schema(format!("tree {t}: {e}")))?;
        }
        Ok(())
    }

    fn check_dims(&self, x: &Matrix) -> Result<()> {
        if x.n_cols() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, got: x.n_cols() });
        }
        Ok(())
    }

    fn row_proba(&self, row: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_classes];
        for t in &self.trees {
            for (a, f) in acc.iter_mut().zip(t.leaf_for(row)) {
                *a += f;
            }
        }
        let n = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    /// Per-class probabilities: mean over trees of the reached leaf's frequencies.
    pub fn predict_class_proba(&self, x: &Matrix) -> Result<Vec<Vec<f64>>> {
        self.check_dims(x)?;
        Ok((0..x.n_rows()).into_par_iter().map(|i| self.row_proba(x.row(i))).collect())
    }

    /// Most probable class per sample; ties go to the lower class index.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(self
            .predict_class_proba(x)?
            .into_iter()
            .map(|p| {
                p.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |(bi, bp), (i, &v)| if v > bp { (i, v) } else { (bi, bp) })
                    .0
            })
            .collect())
    }
}

/// Probability of class 1 for every row of `x`.
pub fn predict_proba(model: &Forest, x: &Matrix) -> Result<Vec<f64>> {
    model.check_dims(x)?;
    Ok((0..x.n_rows())
        .into_par_iter()
        .map(|i| {
            let row = x.row(i);
            let sum: f64 = model.trees.iter().map(|t| t.leaf_for(row)[1]).sum();
            sum / model.trees.len() as f64
        })
        .collect())
}

/// Normalized mean decrease in weighted Gini impurity per feature.
pub fn feature_importances(model: &Forest) -> Vec<f64> {
    model.importances.clone()
}
