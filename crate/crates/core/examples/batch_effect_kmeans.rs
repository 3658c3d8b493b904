//! Detecting a site effect without labels: K-means with one cluster per site,
//! scored by completeness and homogeneity against the site labels.
use batchqc::cluster::{batch_effect_score, scores_to_csv, KMeansConfig};
use batchqc::dataset::GroupBy;
use batchqc::synth::{generate, SynthConfig};

fn main() -> batchqc::Result<()> {
    let mut scores = Vec::new();
    for alpha in [0.1, 0.5, 1.0, 2.0] {
        let (table, _) = generate(&SynthConfig { site_effect_strength: alpha, seed: 5, ..Default::default() })?;
        let s = batch_effect_score(&table, GroupBy::Site, &KMeansConfig { n_runs: 100, ..Default::default() })?;
        println!("alpha {alpha:.1}: completeness {:.3}, homogeneity {:.3}", s.completeness_mean, s.homogeneity_mean);
        scores.push(s);
    }
    print!("{}", scores_to_csv(&scores));
    Ok(())
}
