//! Feature tables: loading, validation, label binarization and the
//! per-study / site-preserving split rules used to build training sets.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{self, tag};

/// Features that the site-wise centering/scaling step is allowed to touch.
pub const MRIQC_NORMALIZED_FEATURES: [&str; 36] = [
    "cjv", "cnr", "efc", "fber", "fwhm_avg", "fwhm_x", "fwhm_y", "fwhm_z", "snr_csf", "snr_gm",
    "snr_total", "snr_wm", "snrd_csf", "snrd_gm", "snrd_total", "snrd_wm", "summary_csf_mad",
    "summary_csf_mean", "summary_csf_median", "summary_csf_p05", "summary_csf_p95",
    "summary_csf_stdv", "summary_gm_k", "summary_gm_mad", "summary_gm_mean", "summary_gm_median",
    "summary_gm_p05", "summary_gm_p95", "summary_gm_stdv", "summary_wm_k", "summary_wm_mad",
    "summary_wm_mean", "summary_wm_median", "summary_wm_p05", "summary_wm_p95", "summary_wm_stdv",
];

/// Remaining T1w image-quality metrics, not normalized site-wise.
pub const MRIQC_OTHER_FEATURES: [&str; 32] = [
    "icvs_csf", "icvs_gm", "icvs_wm", "inu_med", "inu_range", "qi_1", "qi_2", "rpve_csf",
    "rpve_gm", "rpve_wm", "summary_bg_k", "summary_bg_mad", "summary_bg_mean", "summary_bg_median",
    "summary_bg_n", "summary_bg_p05", "summary_bg_p95", "summary_bg_stdv", "summary_csf_k",
    "summary_csf_n", "summary_gm_n", "summary_wm_n", "tpm_overlap_csf", "tpm_overlap_gm",
    "tpm_overlap_wm", "wm2max", "size_x", "size_y", "size_z", "spacing_x", "spacing_y",
    "spacing_z",
];

/// Reserved (non-feature) CSV columns.
pub const ID_COLUMN: &str = "id";
pub const SITE_COLUMN: &str = "site";
pub const STUDY_COLUMN: &str = "study";
pub const LABEL_COLUMN: &str = "label";
pub const RATING_COLUMN: &str = "rating";

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchema {
    names: Vec<String>,
    #[serde(default)]
    normalized_subset: Vec<String>,
}

/// Ordered feature names plus the subset eligible for site-wise normalization.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema")]
pub struct FeatureSchema {
    names: Vec<String>,
    normalized_subset: Vec<String>,
}

impl TryFrom<RawSchema> for FeatureSchema {
    type Error = Error;

    fn try_from(raw: RawSchema) -> Result<Self> {
        FeatureSchema::new(raw.names, raw.normalized_subset)
    }
}

impl FeatureSchema {
    pub fn new(names: Vec<String>, normalized_subset: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for n in &names {
            if n.is_empty() {
                return Err(Error::Schema("feature names must be non-empty".into()));
            }
            if [ID_COLUMN, SITE_COLUMN, STUDY_COLUMN, LABEL_COLUMN, RATING_COLUMN].contains(&n.as_str()) {
                return Err(Error::Schema(format!("feature name `{n}` is a reserved column")));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name `{n}`")));
            }
        }
        let mut seen_norm = HashSet::new();
        for n in &normalized_subset {
            if !seen.contains(n.as_str()) {
                return Err(Error::Schema(format!("normalized feature `{n}` is not in the schema")));
            }
            if !seen_norm.insert(n.as_str()) {
                return Err(Error::Schema(format!("duplicate normalized feature `{n}`")));
            }
        }
        Ok(Self { names, normalized_subset })
    }

    /// Schema with generic names `f0..f{n-1}`, all eligible for normalization.
    pub fn generic(n: usize) -> Self {
        let names: Vec<String> = (0..n).map(|i| format!("f{i}")).collect();
        Self { normalized_subset: names.clone(), names }
    }

    /// The MRIQC T1w quality metrics, 36 of which are normalized site-wise.
    pub fn mriqc_t1w() -> Self {
        let names = MRIQC_NORMALIZED_FEATURES
            .iter()
            .chain(MRIQC_OTHER_FEATURES.iter())
            .map(|s| s.to_string())
            .collect();
        let normalized = MRIQC_NORMALIZED_FEATURES.iter().map(|s| s.to_string()).collect();
        Self::new(names, normalized).expect("built-in schema is valid")
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn normalized_subset(&self) -> &[String] {
        &self.normalized_subset
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn is_normalized(&self, name: &str) -> bool {
        self.normalized_subset.iter().any(|n| n == name)
    }

    /// Restricts the schema to `keep` (in the given order).
    pub fn restrict(&self, keep: &[String]) -> Result<Self> {
        for k in keep {
            if self.index_of(k).is_none() {
                return Err(Error::MissingColumn(k.clone()));
            }
        }
        let normalized = keep.iter().filter(|k| self.is_normalized(k)).cloned().collect();
        Self::new(keep.to_vec(), normalized)
    }
}

/// One scan: identifiers, optional binary label (1 = artifacted) and features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub site: String,
    pub study: String,
    pub label: Option<u8>,
    pub raw_rating: Option<u8>,
    pub features: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Site,
    Study,
}

impl GroupBy {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupBy::Site => "site",
            GroupBy::Study => "study",
        }
    }
}

/// A validated, immutable table of samples sharing one feature schema.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    schema: FeatureSchema,
    samples: Vec<Sample>,
}

impl FeatureTable {
    pub fn new(schema: FeatureSchema, samples: Vec<Sample>) -> Result<Self> {
        let mut ids = HashSet::with_capacity(samples.len());
        for s in &samples {
            if s.features.len() != schema.len() {
                return Err(Error::InvalidRow {
                    id: s.id.clone(),
                    reason: format!("expected {} features, found {}", schema.len(), s.features.len()),
                });
            }
            if let Some(j) = s.features.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidRow {
                    id: s.id.clone(),
                    reason: format!("non-finite value in `{}`", schema.names[j]),
                });
            }
            if let Some(l) = s.label {
                if l > 1 {
                    return Err(Error::InvalidRow { id: s.id.clone(), reason: format!("label {l} is not binary") });
                }
            }
            if !ids.insert(s.id.as_str()) {
                return Err(Error::InvalidRow { id: s.id.clone(), reason: "duplicate id".into() });
            }
        }
        Ok(Self { schema, samples })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Binary labels, or `None` if any sample is unlabeled.
    pub fn labels(&self) -> Option<Vec<u8>> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn require_labels(&self) -> Result<Vec<u8>> {
        self.labels()
            .ok_or_else(|| Error::Schema("every sample needs a label for this operation".into()))
    }

    pub fn group_of(&self, i: usize, by: GroupBy) -> &str {
        match by {
            GroupBy::Site => &self.samples[i].site,
            GroupBy::Study => &self.samples[i].study,
        }
    }

    /// Row indices per group, groups in lexicographic order.
    pub fn group_indices(&self, by: GroupBy) -> BTreeMap<String, Vec<usize>> {
        let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for i in 0..self.len() {
            out.entry(self.group_of(i, by).to_string()).or_default().push(i);
        }
        out
    }

    pub fn sites(&self) -> Vec<String> {
        self.group_indices(GroupBy::Site).into_keys().collect()
    }

    pub fn studies(&self) -> Vec<String> {
        self.group_indices(GroupBy::Study).into_keys().collect()
    }

    pub fn matrix(&self) -> Matrix {
        let rows: Vec<&[f64]> = self.samples.iter().map(|s| s.features.as_slice()).collect();
        if rows.is_empty() {
            return Matrix::zeros(0, self.schema.len());
        }
        Matrix::from_rows(&rows)
    }

    /// Row subset, in the order given.
    pub fn subset(&self, rows: &[usize]) -> FeatureTable {
        FeatureTable {
            schema: self.schema.clone(),
            samples: rows.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// Column subset by feature name, in the order given.
    pub fn select_features(&self, keep: &[String]) -> Result<FeatureTable> {
        let schema = self.schema.restrict(keep)?;
        let idx: Vec<usize> = keep.iter().map(|k| self.schema.index_of(k).unwrap()).collect();
        let samples = self
            .samples
            .iter()
            .map(|s| Sample { features: idx.iter().map(|&j| s.features[j]).collect(), ..s.clone() })
            .collect();
        Ok(FeatureTable { schema, samples })
    }

    /// Same rows with every feature vector replaced; lengths must match the schema.
    pub fn with_features(&self, features: Vec<Vec<f64>>) -> Result<FeatureTable> {
        if features.len() != self.samples.len() {
            return Err(Error::Schema("feature row count does not match table".into()));
        }
        let samples = self
            .samples
            .iter()
            .zip(features)
            .map(|(s, f)| Sample { features: f, ..s.clone() })
            .collect();
        FeatureTable::new(self.schema.clone(), samples)
    }

    /// Reorders and subsets columns to match `schema` by name.
    pub fn conform_to(&self, schema: &FeatureSchema) -> Result<FeatureTable> {
        let mut t = self.select_features(schema.names())?;
        t.schema = schema.clone();
        Ok(t)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LabelRule {
    /// Rating 0–4; `rating > rating_cutoff` is good quality (label 0).
    Threshold { rating_cutoff: u8 },
    /// Category name to binary label.
    Categorical { map: BTreeMap<String, u8> },
}

impl Default for LabelRule {
    fn default() -> Self {
        LabelRule::Threshold { rating_cutoff: 2 }
    }
}

impl LabelRule {
    /// accept → 0, doubtful → 0, exclude → 1.
    pub fn accept_doubtful_exclude() -> Self {
        let map = [("accept", 0), ("doubtful", 0), ("exclude", 1)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        LabelRule::Categorical { map }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LabelRule::Threshold { rating_cutoff } if *rating_cutoff > 4 => {
                Err(Error::Config(format!("rating cutoff {rating_cutoff} outside [0, 4]")))
            }
            LabelRule::Categorical { map } if map.values().any(|&v| v > 1) => {
                Err(Error::Config("categorical label map values must be 0 or 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Returns `(label, raw_rating)` for a rating cell.
    fn apply(&self, cell: &str) -> std::result::Result<(u8, Option<u8>), String> {
        match self {
            LabelRule::Threshold { rating_cutoff } => {
                let r: u8 = cell.parse().map_err(|_| format!("rating `{cell}` is not an integer in [0, 4]"))?;
                if r > 4 {
                    return Err(format!("rating {r} outside [0, 4]"));
                }
                Ok((if r > *rating_cutoff { 0 } else { 1 }, Some(r)))
            }
            LabelRule::Categorical { map } => map
                .get(cell)
                .map(|&l| (l, None))
                .ok_or_else(|| format!("category `{cell}` has no label mapping")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Exclude invalid rows (counted in the report) instead of failing.
    pub drop_invalid: bool,
    /// Allow files without a `label` / `rating` column (prediction inputs).
    pub allow_unlabeled: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowRejection {
    pub row: usize,
    pub id: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_rejected: usize,
    pub reject_reasons: Vec<RowRejection>,
}

/// Loads a CSV, rejecting any invalid row.
pub fn load_csv(path: impl AsRef<Path>, schema: &FeatureSchema, rule: &LabelRule) -> Result<FeatureTable> {
    load_csv_with(path, schema, rule, LoadOptions::default()).map(|(t, _)| t)
}

pub fn load_csv_with(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
    rule: &LabelRule,
    opts: LoadOptions,
) -> Result<(FeatureTable, LoadReport)> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema, rule, opts)
}

enum LabelSource {
    Label(usize),
    Rating(usize),
    None,
}

pub fn read_csv<R: Read>(
    reader: R,
    schema: &FeatureSchema,
    rule: &LabelRule,
    opts: LoadOptions,
) -> Result<(FeatureTable, LoadReport)> {
    rule.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let need = |name: &str| col(name).ok_or_else(|| Error::MissingColumn(name.to_string()));

    let id_col = need(ID_COLUMN)?;
    let site_col = need(SITE_COLUMN)?;
    let study_col = need(STUDY_COLUMN)?;
    let label_src = match (col(LABEL_COLUMN), col(RATING_COLUMN)) {
        (Some(c), _) => LabelSource::Label(c),
        (None, Some(c)) => LabelSource::Rating(c),
        (None, None) if opts.allow_unlabeled => LabelSource::None,
        (None, None) => return Err(Error::MissingColumn(RATING_COLUMN.into())),
    };
    let feature_cols: Vec<usize> = schema.names().iter().map(|n| need(n)).collect::<Result<_>>()?;

    let mut report = LoadReport::default();
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        report.rows_read += 1;
        let id = record.get(id_col).unwrap_or("").trim().to_string();
        let parsed = parse_row(&record, &id, site_col, study_col, &label_src, &feature_cols, schema, rule)
            .and_then(|s| if seen.contains(&s.id) { Err("duplicate id".to_string()) } else { Ok(s) });
        match parsed {
            Ok(s) => {
                seen.insert(s.id.clone());
                samples.push(s);
            }
            Err(reason) if opts.drop_invalid => {
                report.rows_rejected += 1;
                report.reject_reasons.push(RowRejection { row, id, reason });
            }
            Err(reason) => return Err(Error::InvalidRow { id, reason }),
        }
    }
    Ok((FeatureTable::new(schema.clone(), samples)?, report))
}

#[allow(clippy::too_many_arguments)]
fn parse_row(
    record: &csv::StringRecord,
    id: &str,
    site_col: usize,
    study_col: usize,
    label_src: &LabelSource,
    feature_cols: &[usize],
    schema: &FeatureSchema,
    rule: &LabelRule,
) -> std::result::Result<Sample, String> {
    let cell = |c: usize| record.get(c).unwrap_or("").trim();
    let (label, raw_rating) = match *label_src {
        LabelSource::Label(c) => match cell(c) {
            "" => (None, None),
            "0" => (Some(0), None),
            "1" => (Some(1), None),
            other => return Err(format!("label `{other}` is not 0 or 1")),
        },
        LabelSource::Rating(c) => match cell(c) {
            "" => (None, None),
            v => {
                let (l, r) = rule.apply(v)?;
                (Some(l), r)
            }
        },
        LabelSource::None => (None, None),
    };
    let mut features = Vec::with_capacity(feature_cols.len());
    for (j, &c) in feature_cols.iter().enumerate() {
        let raw = cell(c);
        let v: f64 = raw
            .parse()
            .map_err(|_| format!("value `{raw}` in `{}` is not numeric", schema.names()[j]))?;
        if !v.is_finite() {
            return Err(format!("non-finite value in `{}`", schema.names()[j]));
        }
        features.push(v);
    }
    Ok(Sample {
        id: id.to_string(),
        site: cell(site_col).to_string(),
        study: cell(study_col).to_string(),
        label,
        raw_rating,
        features,
    })
}

/// Writes the table in the loader's CSV layout. Ratings are written when every
/// sample carries one; otherwise the binary `label` column is used (omitted
/// when no sample is labeled).
pub fn write_csv<W: Write>(table: &FeatureTable, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let all_rated = !table.is_empty() && table.samples.iter().all(|s| s.raw_rating.is_some());
    let any_label = table.samples.iter().any(|s| s.label.is_some());
    let mut header = vec![ID_COLUMN, SITE_COLUMN, STUDY_COLUMN];
    if all_rated {
        header.push(RATING_COLUMN);
    } else if any_label {
        header.push(LABEL_COLUMN);
    }
    header.extend(table.schema.names().iter().map(String::as_str));
    wtr.write_record(&header)?;
    for s in &table.samples {
        let mut rec = vec![s.id.clone(), s.site.clone(), s.study.clone()];
        if all_rated {
            rec.push(s.raw_rating.unwrap().to_string());
        } else if any_label {
            rec.push(s.label.map(|l| l.to_string()).unwrap_or_default());
        }
        rec.extend(s.features.iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_csv(table: &FeatureTable, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(table, std::io::BufWriter::new(file))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitKind {
    PerStudyFraction { train_fraction: f64 },
    SitePreservingSubsample { target_size: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub kind: SplitKind,
    pub seed: u64,
}

/// Splits every study independently: `round_half_up(fraction * n)` samples to
/// train, the rest to test. Row order is preserved on both sides.
pub fn split_per_study(table: &FeatureTable, spec: &SplitSpec) -> Result<(FeatureTable, FeatureTable)> {
    let SplitKind::PerStudyFraction { train_fraction } = spec.kind else {
        return Err(Error::Config("split_per_study needs a per_study_fraction split".into()));
    };
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    if table.is_empty() {
        return Err(Error::Empty("cannot split an empty table".into()));
    }
    let mut in_train = vec![false; table.len()];
    for (k, (_, mut rows)) in table.group_indices(GroupBy::Study).into_iter().enumerate() {
        let n = rows.len();
        let n_train = ((train_fraction * n as f64 + 0.5).floor() as usize).min(n);
        let mut rng = rng::stream(spec.seed, &[tag::SPLIT, k as u64]);
        rows.shuffle(&mut rng);
        for &i in &rows[..n_train] {
            in_train[i] = true;
        }
    }
    let (train, test): (Vec<usize>, Vec<usize>) = (0..table.len()).partition(|&i| in_train[i]);
    Ok((table.subset(&train), table.subset(&test)))
}

/// Largest-remainder apportionment of `target` seats over `sizes`.
/// Ties on the remainder go to the larger group, then the earlier key.
pub fn apportion(sizes: &[(String, usize)], target: usize) -> Vec<usize> {
    let total: usize = sizes.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return vec![0; sizes.len()];
    }
    let total128 = total as u128;
    let mut quotas: Vec<usize> = sizes.iter().map(|(_, n)| ((target as u128 * *n as u128) / total128) as usize).collect();
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    // remainder numerators share the denominator `total`, so integer comparison is exact
    let rem = |i: usize| (target as u128 * sizes[i].1 as u128) % total128;
    order.sort_by(|&a, &b| {
        rem(b)
            .cmp(&rem(a))
            .then(sizes[b].1.cmp(&sizes[a].1))
            .then(sizes[a].0.cmp(&sizes[b].0))
    });
    for &i in order.iter().take(target - assigned) {
        quotas[i] += 1;
    }
    quotas
}

/// Draws exactly `target_size` samples while keeping each site's share.
pub fn subsample_site_preserving(table: &FeatureTable, spec: &SplitSpec) -> Result<FeatureTable> {
    let SplitKind::SitePreservingSubsample { target_size } = spec.kind else {
        return Err(Error::Config("subsample_site_preserving needs a site_preserving_subsample split".into()));
    };
    if target_size > table.len() {
        return Err(Error::Config(format!(
            "target size {target_size} exceeds table size {}",
            table.len()
        )));
    }
    let groups = table.group_indices(GroupBy::Site);
    let sizes: Vec<(String, usize)> = groups.iter().map(|(k, v)| (k.clone(), v.len())).collect();
    let quotas = apportion(&sizes, target_size);
    let mut chosen = BTreeSet::new();
    for (k, ((_, mut rows), quota)) in groups.into_iter().zip(quotas).enumerate() {
        let mut rng = rng::stream(spec.seed, &[tag::SUBSAMPLE, k as u64]);
        rows.shuffle(&mut rng);
        chosen.extend(rows.into_iter().take(quota));
    }
    let rows: Vec<usize> = chosen.into_iter().collect();
    Ok(table.subset(&rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema2() -> FeatureSchema {
        FeatureSchema::new(vec!["cjv".into(), "cnr".into()], vec!["cjv".into()]).unwrap()
    }

    fn table_with(groups: &[(&str, &str, usize)]) -> FeatureTable {
        let mut samples = Vec::new();
        for (site, study, n) in groups {
            for i in 0..*n {
                samples.push(Sample {
                    id: format!("{site}-{study}-{i}"),
                    site: site.to_string(),
                    study: study.to_string(),
                    label: Some((i % 2) as u8),
                    raw_rating: None,
                    features: vec![i as f64],
                });
            }
        }
        FeatureTable::new(FeatureSchema::generic(1), samples).unwrap()
    }

    #[test]
    fn threshold_rule_binarizes_ratings() {
        let csv = "id,site,study,rating,cjv,cnr\na,s,t,4,1,2\nb,s,t,2,1,2\nc,s,t,0,1,2\n";
        let (t, _) = read_csv(csv.as_bytes(), &schema2(), &LabelRule::default(), LoadOptions::default()).unwrap();
        assert_eq!(t.labels().unwrap(), vec![0, 1, 1]);
        assert_eq!(t.samples()[0].raw_rating, Some(4));
    }

    #[test]
    fn categorical_rule_maps_categories() {
        let csv = "id,site,study,rating,cnr,cjv\na,s,t,accept,1,2\nb,s,t,exclude,1,2\n";
        let (t, _) =
            read_csv(csv.as_bytes(), &schema2(), &LabelRule::accept_doubtful_exclude(), LoadOptions::default())
                .unwrap();
        assert_eq!(t.labels().unwrap(), vec![0, 1]);
        // columns matched by name, not position
        assert_eq!(t.samples()[0].features, vec![2.0, 1.0]);
    }

    #[test]
    fn missing_feature_column_is_named() {
        let csv = "id,site,study,label,cnr\na,s,t,0,1\n";
        let err = read_csv(csv.as_bytes(), &schema2(), &LabelRule::default(), LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "cjv"), "{err}");
        assert!(err.to_string().contains("cjv"));
    }

    #[test]
    fn invalid_rows_rejected_or_dropped() {
        let csv = "id,site,study,label,cjv,cnr\na,s,t,0,1,2\nb,s,t,1,NaN,2\nc,s,t,1,x,2\n";
        let err = read_csv(csv.as_bytes(), &schema2(), &LabelRule::default(), LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidRow { ref id, .. } if id == "b"));
        let opts = LoadOptions { drop_invalid: true, ..Default::default() };
        let (t, report) = read_csv(csv.as_bytes(), &schema2(), &LabelRule::default(), opts).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(report.rows_read, 3);
        assert_eq!(report.rows_rejected, 2);
        assert_eq!(report.reject_reasons[1].id, "c");
    }

    #[test]
    fn unlabeled_files_need_opt_in() {
        let csv = "id,site,study,cjv,cnr\na,s,t,1,2\n";
        assert!(read_csv(csv.as_bytes(), &schema2(), &LabelRule::default(), LoadOptions::default()).is_err());
        let opts = LoadOptions { allow_unlabeled: true, ..Default::default() };
        let (t, _) = read_csv(csv.as_bytes(), &schema2(), &LabelRule::default(), opts).unwrap();
        assert_eq!(t.samples()[0].label, None);
    }

    #[test]
    fn schema_rejects_duplicates_and_foreign_subset() {
        assert!(FeatureSchema::new(vec!["a".into(), "a".into()], vec![]).is_err());
        assert!(FeatureSchema::new(vec!["a".into()], vec!["b".into()]).is_err());
        assert!(FeatureSchema::new(vec!["".into()], vec![]).is_err());
        assert_eq!(FeatureSchema::mriqc_t1w().len(), 68);
        assert_eq!(FeatureSchema::mriqc_t1w().normalized_subset().len(), 36);
    }

    #[test]
    fn per_study_split_counts() {
        let t = table_with(&[("s", "a", 10)]);
        let spec = SplitSpec { kind: SplitKind::PerStudyFraction { train_fraction: 0.6 }, seed: 1 };
        let (tr, te) = split_per_study(&t, &spec).unwrap();
        assert_eq!((tr.len(), te.len()), (6, 4));

        let t = table_with(&[("s", "a", 1)]);
        let (tr, te) = split_per_study(&t, &spec).unwrap();
        assert_eq!((tr.len(), te.len()), (1, 0));
    }

    #[test]
    fn per_study_split_two_studies_over_seeds() {
        let t = table_with(&[("s", "a", 5), ("s", "b", 5)]);
        for seed in 0..50 {
            let spec = SplitSpec { kind: SplitKind::PerStudyFraction { train_fraction: 0.6 }, seed };
            let (tr, te) = split_per_study(&t, &spec).unwrap();
            let counts = tr.group_indices(GroupBy::Study);
            assert_eq!(counts["a"].len(), 3);
            assert_eq!(counts["b"].len(), 3);
            assert_eq!(te.len(), 4);
        }
    }

    #[test]
    fn empty_table_split_errors() {
        let t = FeatureTable::new(FeatureSchema::generic(1), vec![]).unwrap();
        let spec = SplitSpec { kind: SplitKind::PerStudyFraction { train_fraction: 0.6 }, seed: 1 };
        assert!(matches!(split_per_study(&t, &spec), Err(Error::Empty(_))));
    }

    #[test]
    fn apportionment_tie_breaks() {
        let q = apportion(&[("a".into(), 100), ("b".into(), 100)], 100);
        assert_eq!(q, vec![50, 50]);
        // {1.5, 0.5}: the remaining seat goes to the larger site
        let q = apportion(&[("a".into(), 3), ("b".into(), 1)], 2);
        assert_eq!(q, vec![2, 0]);
        let q = apportion(&[("b".into(), 1), ("a".into(), 3)], 2);
        assert_eq!(q, vec![0, 2]);
        // equal sizes and remainders: lexicographic site id
        let q = apportion(&[("a".into(), 1), ("b".into(), 1)], 1);
        assert_eq!(q, vec![1, 0]);
    }

    #[test]
    fn subsample_exact_size_and_errors() {
        let t = table_with(&[("x", "a", 100), ("y", "a", 100)]);
        let spec = SplitSpec { kind: SplitKind::SitePreservingSubsample { target_size: 100 }, seed: 3 };
        let s = subsample_site_preserving(&t, &spec).unwrap();
        let g = s.group_indices(GroupBy::Site);
        assert_eq!((g["x"].len(), g["y"].len()), (50, 50));
        let spec = SplitSpec { kind: SplitKind::SitePreservingSubsample { target_size: 201 }, seed: 3 };
        assert!(subsample_site_preserving(&t, &spec).is_err());
    }
}
