//! Command-line surface: `synth`, `train`, `evaluate`, `predict`, `diagnose`.
//!
//! Every command reads a JSON run config (`--config`), writes its outputs to
//! `--out`, and is byte-deterministic for a given seed regardless of the
//! worker count. Relative paths inside a config resolve against the config
//! file's directory.
//!
//! Exit codes: 0 success, 2 configuration, 3 data or schema, 4 training or
//! numeric failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::{info, warn};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cluster::{batch_effect_score, scores_to_csv, ClusteringScore, KMeansConfig};
use crate::crossval::{
    evaluate_external, nested_cv_grid_search, GridCell, GridSpec, PipelineConfig, SplitScheme, TrainedPipeline,
};
use crate::dataset::{
    load_csv_with, save_csv, FeatureSchema, FeatureTable, GroupBy, LabelRule, LoadOptions, LoadReport,
    ID_COLUMN, LABEL_COLUMN, MRIQC_NORMALIZED_FEATURES, RATING_COLUMN, SITE_COLUMN, STUDY_COLUMN,
};
use crate::ensemble::ForestParams;
use crate::error::Error;
use crate::metrics::{optimal_threshold, pairwise_wasserstein, roc_auc, RocPoint, ScoredLabels, WassersteinMatrix};
use crate::synth::{generate, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "batchqc", version, about = "Site-effect-aware QC classification of image-quality metrics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run config for the command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory; overrides the config's `out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-site table.
    Synth,
    /// Nested cross-validated grid search and final refit.
    Train,
    /// Score a trained model on one or more labeled tables.
    Evaluate,
    /// Write artifact probabilities for a (possibly unlabeled) table.
    Predict,
    /// Batch-effect clustering scores and per-group prediction diagnostics.
    Diagnose,
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_TRAINING: i32 = 4;

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }

    fn data(message: impl Into<String>) -> Self {
        Self { code: EXIT_DATA, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) => EXIT_CONFIG,
            Error::Undefined(_) | Error::NonFinite(_) => EXIT_TRAINING,
            _ => EXIT_DATA,
        };
        Self { code, message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Where a feature schema comes from: `"mriqc_t1w"`, a path to a schema JSON,
/// or an inline object. Absent means: every CSV column that is not an
/// id/site/study/label/rating column, with MRIQC normalized names marked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemaSource {
    Named(String),
    Inline(FeatureSchema),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Default,
    AbideLike,
    CatiLike,
    Ds030Like,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthRun {
    #[serde(default)]
    pub preset: Preset,
    /// Full generator settings; mutually exclusive with `preset`.
    pub synth: Option<SynthConfig>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRun {
    pub dataset: PathBuf,
    pub feature_schema: Option<SchemaSource>,
    #[serde(default)]
    pub label_rule: LabelRule,
    #[serde(default = "loso")]
    pub inner_scheme: SplitScheme,
    /// Defaults to LoSo for a LoSo inner loop, stratified 5-fold otherwise.
    pub outer_scheme: Option<SplitScheme>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub drop_invalid: bool,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

fn loso() -> SplitScheme {
    SplitScheme::Loso
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateRun {
    pub model: PathBuf,
    pub datasets: Vec<PathBuf>,
    #[serde(default)]
    pub drop_invalid: bool,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRun {
    pub model: PathBuf,
    pub dataset: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseRun {
    pub dataset: PathBuf,
    /// Ignored when a model is given (the model's schema is used).
    pub feature_schema: Option<SchemaSource>,
    #[serde(default)]
    pub label_rule: LabelRule,
    pub model: Option<PathBuf>,
    #[serde(default = "both_groupings")]
    pub group_by: Vec<GroupBy>,
    /// Prediction diagnostics are restricted to the `top_n` largest groups.
    #[serde(default = "five")]
    pub top_n: usize,
    #[serde(default)]
    pub kmeans: KMeansConfig,
    #[serde(default)]
    pub drop_invalid: bool,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

fn both_groupings() -> Vec<GroupBy> {
    vec![GroupBy::Site, GroupBy::Study]
}

fn five() -> usize {
    5
}

/// Parses arguments, sets up the worker pool and runs the command.
pub fn run(cli: &Cli) -> CliResult<()> {
    let base = match &cli.config {
        Some(p) => p.parent().map(Path::to_path_buf).unwrap_or_default(),
        None => PathBuf::new(),
    };
    match cli.command {
        Command::Synth => {
            let cfg: SynthRun = match &cli.config {
                Some(p) => read_config(p)?,
                None => SynthRun::default(),
            };
            let seed = cfg.seed.or(cfg.synth.as_ref().map(|s| s.seed));
            let ctx = Context::new(cli, &base, seed, cfg.out.as_deref(), cfg.workers)?;
            ctx.install(|| cmd_synth(&ctx, &cfg))
        }
        Command::Train => {
            let cfg: TrainRun = read_config(require_config(cli)?)?;
            let ctx = Context::new(cli, &base, cfg.seed, cfg.out.as_deref(), cfg.workers)?;
            ctx.install(|| cmd_train(&ctx, &cfg))
        }
        Command::Evaluate => {
            let cfg: EvaluateRun = read_config(require_config(cli)?)?;
            let ctx = Context::new(cli, &base, cfg.seed, cfg.out.as_deref(), cfg.workers)?;
            ctx.install(|| cmd_evaluate(&ctx, &cfg))
        }
        Command::Predict => {
            let cfg: PredictRun = read_config(require_config(cli)?)?;
            let ctx = Context::new(cli, &base, cfg.seed, cfg.out.as_deref(), cfg.workers)?;
            ctx.install(|| cmd_predict(&ctx, &cfg))
        }
        Command::Diagnose => {
            let cfg: DiagnoseRun = read_config(require_config(cli)?)?;
            let ctx = Context::new(cli, &base, cfg.seed, cfg.out.as_deref(), cfg.workers)?;
            ctx.install(|| cmd_diagnose(&ctx, &cfg))
        }
    }
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

fn require_config(cli: &Cli) -> CliResult<&Path> {
    cli.config.as_deref().ok_or_else(|| CliError::config("this command needs --config <path>"))
}

fn read_config<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("config {}: {e}", path.display())))
}

struct Context {
    base: PathBuf,
    out: PathBuf,
    seed: u64,
    pool: rayon::ThreadPool,
}

impl Context {
    fn new(cli: &Cli, base: &Path, seed: Option<u64>, out: Option<&Path>, workers: Option<usize>) -> CliResult<Self> {
        let out = match (&cli.out, out) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => base.join(o),
            (None, None) => PathBuf::from("out"),
        };
        let workers = cli.workers.or(workers).unwrap_or(0);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CliError::config(format!("cannot start {workers} workers: {e}")))?;
        fs::create_dir_all(&out).map_err(|e| CliError::data(format!("cannot create {}: {e}", out.display())))?;
        Ok(Self { base: base.to_path_buf(), out, seed: cli.seed.or(seed).unwrap_or(0), pool })
    }

    fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }

    fn input(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    fn write_text(&self, name: &str, text: &str) -> CliResult<()> {
        let path = self.out.join(name);
        fs::write(&path, text).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
        info!("wrote {}", path.display());
        Ok(())
    }
}

/// Schema made of every non-metadata column of the CSV header.
pub fn schema_from_header(path: &Path) -> crate::Result<FeatureSchema> {
    let mut rdr = csv::Reader::from_path(path)?;
    let meta = [ID_COLUMN, SITE_COLUMN, STUDY_COLUMN, LABEL_COLUMN, RATING_COLUMN];
    let names: Vec<String> =
        rdr.headers()?.iter().map(|h| h.trim().to_string()).filter(|h| !meta.contains(&h.as_str())).collect();
    let normalized = names.iter().filter(|n| MRIQC_NORMALIZED_FEATURES.contains(&n.as_str())).cloned().collect();
    FeatureSchema::new(names, normalized)
}

fn resolve_schema(ctx: &Context, source: Option<&SchemaSource>, dataset: &Path) -> CliResult<FeatureSchema> {
    match source {
        None => Ok(schema_from_header(dataset)?),
        Some(SchemaSource::Inline(s)) => Ok(s.clone()),
        Some(SchemaSource::Named(n)) if n == "mriqc_t1w" => Ok(FeatureSchema::mriqc_t1w()),
        Some(SchemaSource::Named(p)) => read_config(&ctx.input(Path::new(p))),
    }
}

fn load_model(path: &Path) -> CliResult<TrainedPipeline> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::data(format!("cannot read model {}: {e}", path.display())))?;
    let model: TrainedPipeline =
        serde_json::from_str(&text).map_err(|e| CliError::data(format!("model {}: {e}", path.display())))?;
    model.validate()?;
    Ok(model)
}

fn load(path: &Path, schema: &FeatureSchema, rule: &LabelRule, opts: LoadOptions) -> CliResult<(FeatureTable, LoadReport)> {
    let (t, r) = load_csv_with(path, schema, rule, opts).map_err(|e| match e {
        // an invalid label rule stays a config error; anything else is the file's fault
        Error::Config(m) => CliError::config(m),
        other => CliError::data(format!("{}: {other}", path.display())),
    })?;
    if r.rows_rejected > 0 {
        warn!("{}: {} of {} rows rejected", path.display(), r.rows_rejected, r.rows_read);
    }
    Ok((t, r))
}

/// An AUC that is either a number or the string `"undefined"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Auc {
    Defined(f64),
    Undefined(UndefinedTag),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UndefinedTag {
    Undefined,
}

impl From<Option<f64>> for Auc {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Auc::Undefined(UndefinedTag::Undefined), Auc::Defined)
    }
}

impl Auc {
    pub fn value(self) -> Option<f64> {
        match self {
            Auc::Defined(v) => Some(v),
            Auc::Undefined(_) => None,
        }
    }
}

fn cmd_synth(ctx: &Context, run: &SynthRun) -> CliResult<()> {
    let mut cfg = match (&run.synth, &run.preset) {
        (Some(c), Preset::Default) => c.clone(),
        (Some(_), _) => return Err(CliError::config("give either `preset` or `synth`, not both")),
        (None, Preset::Default) => SynthConfig::default(),
        (None, Preset::AbideLike) => SynthConfig::abide_like(0),
        (None, Preset::CatiLike) => SynthConfig::cati_like(0),
        (None, Preset::Ds030Like) => SynthConfig::ds030_like(0),
    };
    cfg.seed = ctx.seed;
    let (table, manifest) = generate(&cfg)?;
    save_csv(&table, ctx.out.join("dataset.csv"))?;
    ctx.write_json("schema.json", table.schema())?;
    ctx.write_json("manifest.json", &manifest)?;
    info!("generated {} samples over {} sites", table.len(), table.sites().len());
    Ok(())
}

/// Table-shaped training summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub dataset: String,
    pub n_samples: usize,
    pub n_features: usize,
    pub inner_scheme: String,
    pub outer_scheme: String,
    pub steps: String,
    pub chosen_cell: GridCell,
    pub classifier: ForestParams,
    pub n_discarded: usize,
    pub n_discarded_normalized: usize,
    pub features: Vec<String>,
    pub cv_mean: Auc,
    pub cv_std: Auc,
    /// ROC-AUC of the final model on its own training table.
    pub self_evaluation: Auc,
    pub seed: u64,
}

fn cmd_train(ctx: &Context, run: &TrainRun) -> CliResult<()> {
    run.label_rule.validate()?;
    run.grid.validate()?;
    run.inner_scheme.validate()?;
    let path = ctx.input(&run.dataset);
    let schema = resolve_schema(ctx, run.feature_schema.as_ref(), &path)?;
    let opts = LoadOptions { drop_invalid: run.drop_invalid, allow_unlabeled: false };
    let (table, report) = load(&path, &schema, &run.label_rule, opts)?;
    ctx.write_json("load_report.json", &report)?;
    let outer = run.outer_scheme.clone().unwrap_or_else(|| SplitScheme::default_outer_for(&run.inner_scheme, ctx.seed));
    info!(
        "training on {} samples: {} cells, outer {}, inner {}",
        table.len(),
        run.grid.n_cells(),
        outer.describe(),
        run.inner_scheme.describe()
    );
    let (mut model, report) = nested_cv_grid_search(&table, &outer, &run.inner_scheme, &run.grid, &run.pipeline, ctx.seed)?;
    model.label_rule = run.label_rule.clone();
    let self_eval = evaluate_external(&model, &table)?;
    let (n_discarded, n_discarded_normalized) = model.discarded_counts();
    let summary = TrainSummary {
        dataset: run.dataset.display().to_string(),
        n_samples: table.len(),
        n_features: table.schema().len(),
        inner_scheme: run.inner_scheme.describe(),
        outer_scheme: outer.describe(),
        steps: model.chosen_cell.steps.clone(),
        chosen_cell: model.chosen_cell.clone(),
        classifier: run.grid.classifiers[model.chosen_cell.classifier_index].clone(),
        n_discarded,
        n_discarded_normalized,
        features: model.features.clone(),
        cv_mean: report.mean.into(),
        cv_std: report.std.into(),
        self_evaluation: self_eval.roc_auc.into(),
        seed: ctx.seed,
    };
    ctx.write_json("model.json", &model)?;
    ctx.write_json("cv_report.json", &report)?;
    ctx.write_json("summary.json", &summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub dataset: String,
    pub n: usize,
    pub roc_auc: Auc,
    /// Sites holding both classes.
    pub per_site: BTreeMap<String, f64>,
    pub rows_rejected: usize,
    /// Artifact probability per sample, in input order.
    pub probabilities: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: String,
    pub steps: String,
    pub rows: Vec<EvaluationRow>,
}

fn cmd_evaluate(ctx: &Context, run: &EvaluateRun) -> CliResult<()> {
    let model = load_model(&ctx.input(&run.model))?;
    let opts = LoadOptions { drop_invalid: run.drop_invalid, allow_unlabeled: false };
    let mut rows = Vec::with_capacity(run.datasets.len());
    for d in &run.datasets {
        let (table, report) = load(&ctx.input(d), &model.schema, &model.label_rule, opts)?;
        let eval = evaluate_external(&model, &table)?;
        if eval.roc_auc.is_none() {
            warn!("{}: single class, ROC-AUC undefined", d.display());
        }
        let labels = table.require_labels()?;
        let mut per_site = BTreeMap::new();
        for (site, idx) in table.group_indices(GroupBy::Site) {
            let p: Vec<f64> = idx.iter().map(|&i| eval.probabilities[i]).collect();
            let l: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            if let Ok(a) = roc_auc(&ScoredLabels::new(&p, &l)?) {
                per_site.insert(site, a);
            }
        }
        rows.push(EvaluationRow {
            dataset: d.display().to_string(),
            n: table.len(),
            roc_auc: eval.roc_auc.into(),
            per_site,
            rows_rejected: report.rows_rejected,
            probabilities: eval.probabilities,
        });
    }
    let report = EvaluationReport {
        model: run.model.display().to_string(),
        steps: model.chosen_cell.steps.clone(),
        rows,
    };
    ctx.write_json("evaluation.json", &report)
}

fn cmd_predict(ctx: &Context, run: &PredictRun) -> CliResult<()> {
    let model = load_model(&ctx.input(&run.model))?;
    let opts = LoadOptions { drop_invalid: false, allow_unlabeled: true };
    let (table, _) = load(&ctx.input(&run.dataset), &model.schema, &model.label_rule, opts)?;
    let probabilities = model.predict_proba(&table)?;
    let mut out = String::from("id,probability\n");
    for (s, p) in table.samples().iter().zip(&probabilities) {
        out.push_str(&format!("{},{p}\n", csv_field(&s.id)));
    }
    ctx.write_text("predictions.csv", &out)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupPredictions {
    pub group: String,
    pub n: usize,
    /// Labeled artifact count, absent for unlabeled data.
    pub n_artifact: Option<usize>,
    pub mean_probability: f64,
    /// Youden-optimal threshold. `None` when the group lacks a class or
    /// when no cut-off beats chance (the classify-none point).
    pub optimal_threshold: Option<RocPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupingDiagnostics {
    pub group_by: GroupBy,
    pub n_groups: usize,
    pub batch_effect: ClusteringScore,
    /// Present when a model was given: the `top_n` largest groups.
    pub predictions: Option<Vec<GroupPredictions>>,
    pub wasserstein: Option<WassersteinMatrix>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub dataset: String,
    pub n: usize,
    pub top_n: usize,
    pub groupings: Vec<GroupingDiagnostics>,
    /// Requested groupings with fewer than two groups.
    pub skipped: Vec<GroupBy>,
}

/// The `n` largest groups, ties broken by group id.
fn largest_groups(groups: &BTreeMap<String, Vec<usize>>, n: usize) -> Vec<(&String, &Vec<usize>)> {
    let mut v: Vec<_> = groups.iter().collect();
    v.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(b.0)));
    v.truncate(n);
    v
}

fn cmd_diagnose(ctx: &Context, run: &DiagnoseRun) -> CliResult<()> {
    run.label_rule.validate()?;
    if run.group_by.is_empty() {
        return Err(CliError::config("group_by must name at least one grouping"));
    }
    if run.top_n < 2 {
        return Err(CliError::config("top_n must be at least 2"));
    }
    let path = ctx.input(&run.dataset);
    let model = run.model.as_ref().map(|m| load_model(&ctx.input(m))).transpose()?;
    let (schema, rule) = match &model {
        Some(m) => (m.schema.clone(), m.label_rule.clone()),
        None => (resolve_schema(ctx, run.feature_schema.as_ref(), &path)?, run.label_rule.clone()),
    };
    let opts = LoadOptions { drop_invalid: run.drop_invalid, allow_unlabeled: true };
    let (table, _) = load(&path, &schema, &rule, opts)?;
    let probabilities = model.as_ref().map(|m| m.predict_proba(&table)).transpose()?;
    let labels = table.labels();
    let kcfg = KMeansConfig { seed: ctx.seed, ..run.kmeans.clone() };

    let mut groupings = Vec::new();
    let mut skipped = Vec::new();
    let mut batch_scores = Vec::new();
    for &by in &run.group_by {
        let groups = table.group_indices(by);
        if groups.len() < 2 {
            warn!("only {} {} group(s); skipping", groups.len(), by.as_str());
            skipped.push(by);
            continue;
        }
        let batch_effect = batch_effect_score(&table, by, &kcfg)?;
        batch_scores.push(batch_effect.clone());
        let (predictions, wasserstein) = match &probabilities {
            None => (None, None),
            Some(p) => {
                let top = largest_groups(&groups, run.top_n);
                let mut dump = String::from("group,id,label,probability\n");
                let mut rows = Vec::with_capacity(top.len());
                let mut named = Vec::with_capacity(top.len());
                for (g, idx) in top {
                    let scores: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
                    for &i in idx {
                        let l = labels.as_ref().map(|l| l[i].to_string()).unwrap_or_default();
                        dump.push_str(&format!("{},{},{l},{}\n", csv_field(g), csv_field(&table.samples()[i].id), p[i]));
                    }
                    let group_labels: Option<Vec<u8>> = labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect());
                    let optimal = match &group_labels {
                        Some(l) => optimal_threshold(&ScoredLabels::new(&scores, l)?).ok().filter(|p| p.tpr > p.fpr),
                        None => None,
                    };
                    rows.push(GroupPredictions {
                        group: g.clone(),
                        n: idx.len(),
                        n_artifact: group_labels.as_ref().map(|l| l.iter().filter(|&&v| v == 1).count()),
                        mean_probability: crate::stats::mean(&scores),
                        optimal_threshold: optimal,
                    });
                    named.push((g.clone(), scores));
                }
                let w = pairwise_wasserstein(&named)?;
                ctx.write_text(&format!("scores_{}.csv", by.as_str()), &dump)?;
                ctx.write_text(&format!("wasserstein_{}.csv", by.as_str()), &w.to_csv())?;
                (Some(rows), Some(w))
            }
        };
        groupings.push(GroupingDiagnostics { group_by: by, n_groups: groups.len(), batch_effect, predictions, wasserstein });
    }
    if groupings.is_empty() {
        return Err(CliError::data("diagnose needs at least two groups in one requested grouping"));
    }
    ctx.write_text("batch_effect.csv", &scores_to_csv(&batch_scores))?;
    let report = DiagnosticsReport {
        dataset: run.dataset.display().to_string(),
        n: table.len(),
        top_n: run.top_n,
        groupings,
        skipped,
    };
    ctx.write_json("diagnostics.json", &report)
}
