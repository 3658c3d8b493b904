//! Per-site prediction diagnostics: Youden-optimal thresholds and pairwise
//! Wasserstein distances between predicted-probability distributions.
use batchqc::crossval::{fit_pipeline, GridSpec, PipelineConfig};
use batchqc::dataset::GroupBy;
use batchqc::ensemble::ForestParams;
use batchqc::metrics::{optimal_threshold, pairwise_wasserstein, ScoredLabels};
use batchqc::synth::{generate, SynthConfig};

fn main() -> batchqc::Result<()> {
    let cfg = SynthConfig { n_sites: 5, samples_per_site: 80, n_features: 20, artifact_prevalence: 0.3, ..Default::default() };
    let (train, _) = generate(&SynthConfig { seed: 6, ..cfg.clone() })?;
    let (test, _) = generate(&SynthConfig { seed: 7, site_prefix: "new".into(), ..cfg })?;
    let grid = GridSpec::without_preprocessing(vec![ForestParams::random_forest()]);
    let model = fit_pipeline(&train, grid.cell(0), &grid.classifiers[0], &PipelineConfig::default(), 6)?;
    let p = model.predict_proba(&test)?;
    let labels = test.require_labels()?;

    let mut groups = Vec::new();
    for (site, rows) in test.group_indices(GroupBy::Site) {
        let s: Vec<f64> = rows.iter().map(|&i| p[i]).collect();
        let l: Vec<u8> = rows.iter().map(|&i| labels[i]).collect();
        let best = optimal_threshold(&ScoredLabels::new(&s, &l)?)?;
        println!("{site}: threshold {:.3} (tpr {:.2}, fpr {:.2})", best.threshold, best.tpr, best.fpr);
        groups.push((site, s));
    }
    let w = pairwise_wasserstein(&groups)?;
    println!("pairwise W1 mean {:.4} ± {:.4}", w.mean, w.std);
    print!("{}", w.to_csv());
    Ok(())
}
