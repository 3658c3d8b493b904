use serde::{Deserialize, Serialize};

use super::CVReport;
use crate::dataset::{FeatureSchema, FeatureTable, LabelRule};
use crate::ensemble::{fit_forest, predict_proba, Forest, ForestParams};
use crate::error::{Error, Result};
use crate::metrics::{roc_auc, ScoredLabels};
use crate::normalize::{apply_norm, fit_norm_with, Fallback, NormMode, SiteNormParams};
use crate::rng::{self, tag};
use crate::select::{ft_noise, ft_sites, FtNoiseConfig, FtSitesConfig, SelectionResult};

/// Which preprocessing steps a grid cell enables.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preprocessing {
    pub center: bool,
    pub scale: bool,
    pub ft_sites: bool,
    pub ft_noise: bool,
}

impl Preprocessing {
    pub const NONE: Preprocessing = Preprocessing { center: false, scale: false, ft_sites: false, ft_noise: false };

    pub fn n_steps(&self) -> usize {
        [self.center, self.scale, self.ft_sites, self.ft_noise].iter().filter(|&&b| b).count()
    }

    /// All 16 subsets, ordered by bitmask (center = bit 0, ..., ft_noise = bit 3).
    pub fn all_subsets() -> Vec<Preprocessing> {
        (0u8..16)
            .map(|m| Preprocessing { center: m & 1 != 0, scale: m & 2 != 0, ft_sites: m & 4 != 0, ft_noise: m & 8 != 0 })
            .collect()
    }

    pub fn norm_mode(&self) -> Option<NormMode> {
        NormMode::from_flags(self.center, self.scale)
    }

    /// Short label such as `[C.; Sc.; Ft_s.]`, `[]` for no step.
    pub fn label(&self) -> String {
        let parts: Vec<&str> = [(self.center, "C."), (self.scale, "Sc."), (self.ft_sites, "Ft_s."), (self.ft_noise, "Ft_n.")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, s)| *s)
            .collect();
        format!("[{}]", parts.join("; "))
    }
}

/// Settings shared by every pipeline fit (seeds inside are replaced by derived ones).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub fallback: Fallback,
    pub ft_sites: FtSitesConfig,
    pub ft_noise: FtNoiseConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub index: usize,
    pub preprocessing_index: usize,
    pub classifier_index: usize,
    pub preprocessing: Preprocessing,
    pub steps: String,
}

/// Fitted preprocessing artifacts in canonical order: normalization, ft_sites, ft_noise.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FittedSteps {
    pub normalization: Option<SiteNormParams>,
    pub ft_sites: Option<SelectionResult>,
    pub ft_noise: Option<SelectionResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainedPipeline {
    pub schema: FeatureSchema,
    pub label_rule: LabelRule,
    pub steps: FittedSteps,
    /// Features consumed by the classifier, in order.
    pub features: Vec<String>,
    pub classifier: Forest,
    pub chosen_cell: GridCell,
    pub cv_report: Option<CVReport>,
    pub seed: u64,
}

/// Output of the preprocessing chain on its own training table.
pub(crate) struct Preprocessed {
    pub steps: FittedSteps,
    pub features: Vec<String>,
    /// Training table after normalization, restricted to `features`.
    pub table: FeatureTable,
}

pub(crate) fn fit_preprocessing(
    table: &FeatureTable,
    pre: Preprocessing,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Preprocessed> {
    let labels = table.require_labels()?;
    let mut steps = FittedSteps::default();
    let mut current = table.clone();
    if let Some(mode) = pre.norm_mode() {
        let subset = table.schema().normalized_subset().to_vec();
        let params = fit_norm_with(table, mode, &subset, cfg.fallback)?;
        current = apply_norm(&params, &current)?;
        steps.normalization = Some(params);
    }
    if pre.ft_sites {
        let c = FtSitesConfig { seed: rng::derive(seed, &[tag::FT_SITES]), ..cfg.ft_sites.clone() };
        let r = ft_sites(&current, &c)?;
        current = current.select_features(&r.kept)?;
        steps.ft_sites = Some(r);
    }
    if pre.ft_noise {
        let c = FtNoiseConfig { seed: rng::derive(seed, &[tag::FT_NOISE]), ..cfg.ft_noise.clone() };
        let r = ft_noise(&current, &labels, &c)?;
        current = current.select_features(&r.kept)?;
        steps.ft_noise = Some(r);
    }
    Ok(Preprocessed { steps, features: current.schema().names().to_vec(), table: current })
}

pub(crate) fn fit_classifier(pre: &Preprocessed, params: &ForestParams, seed: u64) -> Result<Forest> {
    let y: Vec<usize> = pre.table.require_labels()?.into_iter().map(usize::from).collect();
    let params = params.clone().with_seed(rng::derive(seed, &[tag::TREE]));
    fit_forest(&pre.table.matrix(), &y, &params)
}

/// Fits the preprocessing chain and the classifier of one grid cell on `table`.
/// The result is a pure function of its arguments.
pub fn fit_pipeline(
    table: &FeatureTable,
    cell: GridCell,
    classifier: &ForestParams,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<TrainedPipeline> {
    let pre = fit_preprocessing(table, cell.preprocessing, cfg, seed)?;
    let forest = fit_classifier(&pre, classifier, seed)?;
    Ok(TrainedPipeline {
        schema: table.schema().clone(),
        label_rule: LabelRule::default(),
        steps: pre.steps,
        features: pre.features,
        classifier: forest,
        chosen_cell: cell,
        cv_report: None,
        seed,
    })
}

pub(crate) fn transform_with(steps: &FittedSteps, features: &[String], table: &FeatureTable) -> Result<FeatureTable> {
    let normalized = match &steps.normalization {
        Some(p) => apply_norm(p, table)?,
        None => table.clone(),
    };
    normalized.select_features(features)
}

impl TrainedPipeline {
    /// Applies the fitted steps to a batch. Unknown sites are normalized with
    /// statistics of this batch, so pass the whole inference batch at once.
    pub fn transform(&self, table: &FeatureTable) -> Result<FeatureTable> {
        let conformed = table.conform_to(&self.schema)?;
        transform_with(&self.steps, &self.features, &conformed)
    }

    /// Probability of the artifact class for every sample, in input order.
    pub fn predict_proba(&self, table: &FeatureTable) -> Result<Vec<f64>> {
        if table.is_empty() {
            return Ok(Vec::new());
        }
        let x = self.transform(table)?;
        predict_proba(&self.classifier, &x.matrix())
    }

    pub fn validate(&self) -> Result<()> {
        self.classifier.validate()?;
        if self.classifier.n_features != self.features.len() {
            return Err(Error::Schema("classifier width differs from the selected feature list".into()));
        }
        for f in &self.features {
            if self.schema.index_of(f).is_none() {
                return Err(Error::MissingColumn(f.clone()));
            }
        }
        Ok(())
    }

    /// Count of features removed by the selection steps, and how many of
    /// those belong to the normalized subset.
    pub fn discarded_counts(&self) -> (usize, usize) {
        let removed: Vec<&String> = [&self.steps.ft_sites, &self.steps.ft_noise]
            .into_iter()
            .flatten()
            .flat_map(|r| r.removed.iter().map(|f| &f.name))
            .collect();
        let normalized = removed.iter().filter(|n| self.schema.is_normalized(n)).count();
        (removed.len(), normalized)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// `None` when the table holds a single class.
    pub roc_auc: Option<f64>,
    pub probabilities: Vec<f64>,
}

/// Scores a fitted pipeline on an external labeled table.
pub fn evaluate_external(model: &TrainedPipeline, table: &FeatureTable) -> Result<Evaluation> {
    let labels = table.require_labels()?;
    let probabilities = model.predict_proba(table)?;
    let roc_auc = score(&probabilities, &labels)?;
    Ok(Evaluation { roc_auc, probabilities })
}

/// ROC-AUC, or `None` if the labels hold a single class.
pub(crate) fn score(probabilities: &[f64], labels: &[u8]) -> Result<Option<f64>> {
    if labels.is_empty() {
        return Ok(None);
    }
    match roc_auc(&ScoredLabels::new(probabilities, labels)?) {
        Ok(a) => Ok(Some(a)),
        Err(Error::Undefined(_)) => Ok(None),
        Err(e) => Err(e),
    }
}
