//! Nested cross-validated grid search over preprocessing subsets, with a
//! leave-one-site-out inner loop.
use batchqc::crossval::{nested_cv_grid_search, GridSpec, PipelineConfig, SplitScheme};
use batchqc::ensemble::ForestParams;
use batchqc::synth::{generate, SynthConfig};

fn main() -> batchqc::Result<()> {
    let (table, _) = generate(&SynthConfig {
        n_sites: 5,
        samples_per_site: 60,
        n_features: 16,
        n_informative: 4,
        artifact_prevalence: 0.3,
        seed: 4,
        ..Default::default()
    })?;
    let grid = GridSpec::full(vec![ForestParams::random_forest().with_trees(30)]);
    let mut cfg = PipelineConfig::default();
    cfg.ft_noise.n_iterations = 3;
    let outer = SplitScheme::StratifiedKfold { k: 3, seed: 4 };
    let (model, report) = nested_cv_grid_search(&table, &outer, &SplitScheme::Loso, &grid, &cfg, 4)?;

    for fold in &report.folds {
        println!(
            "{:<7} winner {:<26} inner {:.3}  outer {:?}",
            fold.fold,
            fold.winner.steps,
            fold.inner_mean_score,
            fold.outer_score.map(|s| (s * 1000.0).round() / 1000.0)
        );
    }
    println!("outer mean {:.3} ± {:.3}", report.mean.unwrap_or(f64::NAN), report.std.unwrap_or(f64::NAN));
    let (discarded, normalized) = model.discarded_counts();
    println!("final model: {} ({} features discarded, {} of them normalized)", model.chosen_cell.steps, discarded, normalized);
    Ok(())
}
