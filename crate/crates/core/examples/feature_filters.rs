//! The two feature filters: drop site-predictive features, then drop
//! features no more important than permuted noise.
use batchqc::select::{ft_noise, ft_sites, FtNoiseConfig, FtSitesConfig};
use batchqc::synth::{generate, SynthConfig};

fn main() -> batchqc::Result<()> {
    let cfg = SynthConfig {
        n_sites: 4,
        samples_per_site: 150,
        n_features: 20,
        n_informative: 3,
        artifact_prevalence: 0.3,
        site_effect_strength: 1.5,
        seed: 3,
        ..Default::default()
    };
    let (table, manifest) = generate(&cfg)?;
    let names = table.schema().names();
    let informative: Vec<&String> = manifest.informative.iter().map(|&j| &names[j]).collect();
    println!("informative features: {informative:?}");

    let sites = ft_sites(&table, &FtSitesConfig::default())?;
    println!("ft_sites removed {} features, site accuracy trace {:.3?}", sites.removed.len(), sites.diagnostics.accuracy_trace);
    for f in &sites.removed {
        println!("  - {} (site balanced accuracy {:.3})", f.name, f.diagnostic);
    }

    let kept = table.select_features(&sites.kept)?;
    let noise = ft_noise(&kept, &kept.require_labels()?, &FtNoiseConfig::default())?;
    println!("ft_noise kept {:?}", noise.kept);
    Ok(())
}
