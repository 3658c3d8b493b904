//! Site-wise robust centering and scaling, including a site unseen at fit time.
use batchqc::dataset::GroupBy;
use batchqc::normalize::{apply_norm, fit_norm, RobustStat};
use batchqc::normalize::NormMode;
use batchqc::synth::{generate, SynthConfig};

fn main() -> batchqc::Result<()> {
    let (table, _) = generate(&SynthConfig { site_effect_strength: 3.0, seed: 2, ..Default::default() })?;
    let subset = table.schema().normalized_subset().to_vec();
    let feature = &subset[0];
    let j = table.schema().index_of(feature).unwrap();

    // Fit on four sites, then apply to all five: the fifth falls back to batch statistics.
    let sites = table.sites();
    let fit_rows: Vec<usize> = (0..table.len()).filter(|&i| table.samples()[i].site != sites[4]).collect();
    let params = fit_norm(&table.subset(&fit_rows), NormMode::CenterAndScale, &subset)?;
    let normalized = apply_norm(&params, &table)?;

    println!("feature `{feature}`: per-site median / IQR before -> after");
    for (site, rows) in table.group_indices(GroupBy::Site) {
        let stat = |t: &batchqc::dataset::FeatureTable| {
            RobustStat::fit(&rows.iter().map(|&i| t.samples()[i].features[j]).collect::<Vec<_>>())
        };
        let (before, after) = (stat(&table), stat(&normalized));
        let known = if params.per_site.contains_key(&site) { "" } else { "  (unseen site)" };
        println!(
            "  {site}: {:>7.3} / {:.3} -> {:>6.3} / {:.3}{known}",
            before.location(),
            before.spread(),
            after.location(),
            after.spread()
        );
    }
    Ok(())
}
