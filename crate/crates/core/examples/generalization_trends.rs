//! The two generalization trends on unseen sites: skipping site-wise
//! normalization, and training on heterogeneous (many-study) data.
//!
//! Takes a few seconds in release mode.
use batchqc::crossval::{evaluate_external, fit_pipeline, GridSpec, PipelineConfig, Preprocessing};
use batchqc::dataset::FeatureTable;
use batchqc::ensemble::ForestParams;
use batchqc::synth::{generate, SynthConfig};

fn held_out_auc(train: &FeatureTable, test: &FeatureTable, pre: Preprocessing, seed: u64) -> batchqc::Result<f64> {
    let grid = GridSpec { preprocessing: vec![pre], classifiers: vec![ForestParams::random_forest()] };
    let model = fit_pipeline(train, grid.cell(0), &grid.classifiers[0], &PipelineConfig::default(), seed)?;
    Ok(evaluate_external(&model, test)?.roc_auc.unwrap_or(f64::NAN))
}

fn main() -> batchqc::Result<()> {
    let center_scale = Preprocessing { center: true, scale: true, ..Preprocessing::NONE };
    println!("seed  none  center+scale | cati-trained  abide-trained (tested on ds030-like)");
    for seed in 0..5 {
        let (t, _) = generate(&SynthConfig { population_seed: seed, ..SynthConfig::cati_like(seed) })?;
        let sites = t.sites();
        let (a, b): (Vec<usize>, Vec<usize>) = (0..t.len()).partition(|&i| sites[..30].contains(&t.samples()[i].site));
        let (train, test) = (t.subset(&a), t.subset(&b));
        let none = held_out_auc(&train, &test, Preprocessing::NONE, seed)?;
        let cs = held_out_auc(&train, &test, center_scale, seed)?;

        let pop = 1000 + seed;
        let make = |cfg: SynthConfig| generate(&SynthConfig { population_seed: pop, ..cfg }).map(|g| g.0);
        let third = make(SynthConfig::ds030_like(3 * seed + 2))?;
        let cati = held_out_auc(&make(SynthConfig::cati_like(3 * seed))?, &third, Preprocessing::NONE, seed)?;
        let abide = held_out_auc(&make(SynthConfig::abide_like(3 * seed + 1))?, &third, Preprocessing::NONE, seed)?;
        println!("{seed:>4}  {none:.3}  {cs:.3}        | {cati:.3}         {abide:.3}");
    }
    Ok(())
}
