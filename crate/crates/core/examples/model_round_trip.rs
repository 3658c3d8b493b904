//! Fit a full pipeline, save it as JSON, reload it and check the predictions
//! are bit-identical.
use batchqc::crossval::{fit_pipeline, GridSpec, PipelineConfig, Preprocessing, TrainedPipeline};
use batchqc::ensemble::ForestParams;
use batchqc::synth::{generate, SynthConfig};

fn main() -> batchqc::Result<()> {
    let (table, _) = generate(&SynthConfig { n_features: 30, seed: 8, ..Default::default() })?;
    let grid = GridSpec {
        preprocessing: vec![Preprocessing { center: true, scale: true, ft_sites: true, ft_noise: true }],
        classifiers: vec![ForestParams::random_forest().with_trees(50)],
    };
    let model = fit_pipeline(&table, grid.cell(0), &grid.classifiers[0], &PipelineConfig::default(), 8)?;
    let json = serde_json::to_string_pretty(&model)?;
    let reloaded: TrainedPipeline = serde_json::from_str(&json)?;
    reloaded.validate()?;

    let (a, b) = (model.predict_proba(&table)?, reloaded.predict_proba(&table)?);
    let identical = a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits());
    println!("{} bytes of JSON, {} features used, predictions bit-identical: {identical}", json.len(), reloaded.features.len());
    Ok(())
}
