//! Site-wise robust centering and scaling.
//!
//! Location is the median and spread the interquartile range (linear
//! interpolation quantiles at `q * (n - 1)`), estimated independently for
//! every site and every feature of the normalized subset. A sample from a site
//! that was not seen at fit time is transformed with statistics estimated on
//! the batch being transformed, so results for unknown sites depend on the
//! whole batch passed to [`apply_norm`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureTable, GroupBy};
use crate::error::{Error, Result};
use crate::stats::{quantile_sorted, sorted_copy};

pub const QUANTILE_LOW: f64 = 0.25;
pub const QUANTILE_HIGH: f64 = 0.75;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    Center,
    Scale,
    CenterAndScale,
}

impl NormMode {
    pub fn from_flags(center: bool, scale: bool) -> Option<Self> {
        match (center, scale) {
            (true, true) => Some(NormMode::CenterAndScale),
            (true, false) => Some(NormMode::Center),
            (false, true) => Some(NormMode::Scale),
            (false, false) => None,
        }
    }

    pub fn centers(self) -> bool {
        matches!(self, NormMode::Center | NormMode::CenterAndScale)
    }

    pub fn scales(self) -> bool {
        matches!(self, NormMode::Scale | NormMode::CenterAndScale)
    }
}

/// How statistics are obtained for sites absent at fit time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// One parameter set fitted on the entire batch being transformed.
    #[default]
    WholeBatch,
    /// Parameters fitted on each unknown site's own rows within the batch.
    PerSite,
}

/// `(location, spread, degenerate)`; serialized as a three-element array.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustStat(pub f64, pub f64, pub bool);

impl RobustStat {
    pub fn location(&self) -> f64 {
        self.0
    }

    pub fn spread(&self) -> f64 {
        self.1
    }

    pub fn degenerate(&self) -> bool {
        self.2
    }

    /// Median and IQR of a non-empty sample; a zero IQR is stored as 1 and flagged.
    pub fn fit(values: &[f64]) -> Self {
        let sorted = sorted_copy(values);
        let location = quantile_sorted(&sorted, 0.5);
        let iqr = quantile_sorted(&sorted, QUANTILE_HIGH) - quantile_sorted(&sorted, QUANTILE_LOW);
        if iqr > 0.0 {
            RobustStat(location, iqr, false)
        } else {
            RobustStat(location, 1.0, true)
        }
    }

    #[inline]
    fn transform(&self, x: f64, mode: NormMode) -> f64 {
        match mode {
            NormMode::Center => x - self.0,
            NormMode::Scale => x / self.1,
            NormMode::CenterAndScale => (x - self.0) / self.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteNormParams {
    pub mode: NormMode,
    pub quantile_bounds: (f64, f64),
    pub feature_subset: Vec<String>,
    #[serde(default)]
    pub fallback: Fallback,
    pub per_site: BTreeMap<String, BTreeMap<String, RobustStat>>,
}

impl SiteNormParams {
    /// `(site, feature)` pairs whose IQR was zero at fit time.
    pub fn degenerate_pairs(&self) -> Vec<(String, String)> {
        self.per_site
            .iter()
            .flat_map(|(site, m)| {
                m.iter().filter(|(_, s)| s.degenerate()).map(move |(f, _)| (site.clone(), f.clone()))
            })
            .collect()
    }
}

fn subset_indices(table: &FeatureTable, subset: &[String]) -> Result<Vec<usize>> {
    subset
        .iter()
        .map(|n| table.schema().index_of(n).ok_or_else(|| Error::MissingColumn(n.clone())))
        .collect()
}

fn fit_rows(table: &FeatureTable, rows: &[usize], subset: &[String], cols: &[usize]) -> BTreeMap<String, RobustStat> {
    let mut values = Vec::with_capacity(rows.len());
    subset
        .iter()
        .zip(cols)
        .map(|(name, &j)| {
            values.clear();
            values.extend(rows.iter().map(|&i| table.samples()[i].features[j]));
            (name.clone(), RobustStat::fit(&values))
        })
        .collect()
}

pub fn fit_norm(table: &FeatureTable, mode: NormMode, feature_subset: &[String]) -> Result<SiteNormParams> {
    fit_norm_with(table, mode, feature_subset, Fallback::WholeBatch)
}

pub fn fit_norm_with(
    table: &FeatureTable,
    mode: NormMode,
    feature_subset: &[String],
    fallback: Fallback,
) -> Result<SiteNormParams> {
    if table.is_empty() {
        return Err(Error::Empty("cannot fit normalization on an empty table".into()));
    }
    if let Some(bad) = feature_subset.iter().find(|f| !table.schema().is_normalized(f)) {
        return Err(Error::Schema(format!("feature `{bad}` is not in the normalized subset")));
    }
    let cols = subset_indices(table, feature_subset)?;
    let per_site = table
        .group_indices(GroupBy::Site)
        .into_iter()
        .map(|(site, rows)| (site, fit_rows(table, &rows, feature_subset, &cols)))
        .collect();
    Ok(SiteNormParams {
        mode,
        quantile_bounds: (QUANTILE_LOW, QUANTILE_HIGH),
        feature_subset: feature_subset.to_vec(),
        fallback,
        per_site,
    })
}

/// Transforms the normalized subset; all other features pass through untouched.
pub fn apply_norm(params: &SiteNormParams, table: &FeatureTable) -> Result<FeatureTable> {
    let cols = subset_indices(table, &params.feature_subset)?;
    let groups = table.group_indices(GroupBy::Site);
    let mut stats_for: BTreeMap<&str, BTreeMap<String, RobustStat>> = BTreeMap::new();
    let mut batch_stats: Option<BTreeMap<String, RobustStat>> = None;
    for (site, rows) in &groups {
        let stats = match params.per_site.get(site) {
            Some(s) => s.clone(),
            None => match params.fallback {
                Fallback::WholeBatch => batch_stats
                    .get_or_insert_with(|| {
                        let all: Vec<usize> = (0..table.len()).collect();
                        fit_rows(table, &all, &params.feature_subset, &cols)
                    })
                    .clone(),
                Fallback::PerSite => fit_rows(table, rows, &params.feature_subset, &cols),
            },
        };
        stats_for.insert(site.as_str(), stats);
    }

    let features = table
        .samples()
        .iter()
        .map(|s| {
            let stats = &stats_for[s.site.as_str()];
            let mut f = s.features.clone();
            for (name, &j) in params.feature_subset.iter().zip(&cols) {
                let st = stats.get(name).ok_or_else(|| Error::MissingColumn(name.clone()))?;
                f[j] = st.transform(f[j], params.mode);
            }
            Ok(f)
        })
        .collect::<Result<Vec<_>>>()?;
    table.with_features(features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeatureSchema, Sample};

    fn table(rows: &[(&str, f64, f64)]) -> FeatureTable {
        let schema = FeatureSchema::new(vec!["a".into(), "b".into()], vec!["a".into()]).unwrap();
        let samples = rows
            .iter()
            .enumerate()
            .map(|(i, (site, a, b))| Sample {
                id: format!("s{i}"),
                site: site.to_string(),
                study: "x".into(),
                label: Some(0),
                raw_rating: None,
                features: vec![*a, *b],
            })
            .collect();
        FeatureTable::new(schema, samples).unwrap()
    }

    fn col(t: &FeatureTable, j: usize) -> Vec<f64> {
        t.samples().iter().map(|s| s.features[j]).collect()
    }

    #[test]
    fn fit_stats_examples() {
        assert_eq!(RobustStat::fit(&[1.0, 2.0, 3.0, 4.0, 5.0]), RobustStat(3.0, 2.0, false));
        assert_eq!(RobustStat::fit(&[1.0, 3.0, 5.0, 7.0]), RobustStat(4.0, 3.0, false));
        assert_eq!(RobustStat::fit(&[2.0, 2.0, 2.0]), RobustStat(2.0, 1.0, true));
    }

    #[test]
    fn centering_known_site() {
        let t = table(&[("A", 1.0, 9.0), ("A", 2.0, 9.0), ("A", 3.0, 9.0), ("A", 4.0, 9.0), ("A", 5.0, 9.0)]);
        let p = fit_norm(&t, NormMode::Center, &["a".into()]).unwrap();
        let out = apply_norm(&p, &t).unwrap();
        assert_eq!(col(&out, 0), vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert_eq!(col(&out, 1), col(&t, 1));
    }

    #[test]
    fn center_and_scale() {
        let t = table(&[("A", 1.0, 0.0), ("A", 3.0, 0.0), ("A", 5.0, 0.0), ("A", 7.0, 0.0)]);
        let p = fit_norm(&t, NormMode::CenterAndScale, &["a".into()]).unwrap();
        let out = col(&apply_norm(&p, &t).unwrap(), 0);
        let expected = [-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0];
        for (o, e) in out.iter().zip(expected) {
            assert!((o - e).abs() < 1e-15, "{o} vs {e}");
        }
    }

    #[test]
    fn unknown_site_uses_whole_batch() {
        let train = table(&[("A", 1.0, 0.0), ("A", 2.0, 0.0)]);
        let p = fit_norm(&train, NormMode::Center, &["a".into()]).unwrap();
        let batch = table(&[("B", 0.0, 0.0), ("B", 10.0, 0.0)]);
        assert_eq!(col(&apply_norm(&p, &batch).unwrap(), 0), vec![-5.0, 5.0]);
    }

    #[test]
    fn unknown_site_output_depends_on_batch() {
        let train = table(&[("A", 1.0, 0.0), ("A", 2.0, 0.0)]);
        let p = fit_norm(&train, NormMode::Center, &["a".into()]).unwrap();
        let batch = table(&[("B", 0.0, 0.0), ("B", 10.0, 0.0), ("C", 4.0, 0.0)]);
        let whole = col(&apply_norm(&p, &batch).unwrap(), 0);
        let first = col(&apply_norm(&p, &batch.subset(&[0, 1])).unwrap(), 0);
        assert_ne!(whole[..2], first[..]);
        // known-site rows are independent of the batch
        let mixed = table(&[("A", 1.0, 0.0), ("B", 100.0, 0.0)]);
        let alone = table(&[("A", 1.0, 0.0)]);
        assert_eq!(col(&apply_norm(&p, &mixed).unwrap(), 0)[0], col(&apply_norm(&p, &alone).unwrap(), 0)[0]);
    }

    #[test]
    fn per_site_fallback_option() {
        let train = table(&[("A", 1.0, 0.0), ("A", 2.0, 0.0)]);
        let p = fit_norm_with(&train, NormMode::Center, &["a".into()], Fallback::PerSite).unwrap();
        let batch = table(&[("B", 0.0, 0.0), ("B", 2.0, 0.0), ("C", 10.0, 0.0)]);
        assert_eq!(col(&apply_norm(&p, &batch).unwrap(), 0), vec![-1.0, 1.0, 0.0]);
    }

    #[test]
    fn degenerate_scale_is_identity() {
        let t = table(&[("A", 2.0, 0.0), ("A", 2.0, 0.0), ("A", 2.0, 0.0)]);
        let p = fit_norm(&t, NormMode::Scale, &["a".into()]).unwrap();
        assert_eq!(p.degenerate_pairs(), vec![("A".to_string(), "a".to_string())]);
        assert_eq!(col(&apply_norm(&p, &t).unwrap(), 0), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn rejects_feature_outside_normalized_subset_and_empty() {
        let t = table(&[("A", 1.0, 0.0)]);
        assert!(fit_norm(&t, NormMode::Center, &["b".into()]).is_err());
        let empty = t.subset(&[]);
        assert!(matches!(fit_norm(&empty, NormMode::Center, &["a".into()]), Err(Error::Empty(_))));
    }

    #[test]
    fn params_json_layout() {
        let t = table(&[("A", 1.0, 0.0), ("A", 3.0, 0.0)]);
        let p = fit_norm(&t, NormMode::Center, &["a".into()]).unwrap();
        let v = serde_json::to_value(&p).unwrap();
        assert_eq!(v["per_site"]["A"]["a"], serde_json::json!([2.0, 1.0, false]));
        assert_eq!(v["quantile_bounds"], serde_json::json!([0.25, 0.75]));
        let back: SiteNormParams = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
    }
}
