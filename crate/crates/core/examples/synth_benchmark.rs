//! Generate the synthetic presets and write one to CSV with its manifest.
//!
//! `cargo run --example synth_benchmark -- [out_dir]`
use batchqc::dataset::save_csv;
use batchqc::synth::{generate, SynthConfig};

fn main() -> batchqc::Result<()> {
    for (name, cfg) in [
        ("default", SynthConfig::default()),
        ("abide-like", SynthConfig::abide_like(1)),
        ("cati-like", SynthConfig::cati_like(1)),
        ("ds030-like", SynthConfig::ds030_like(1)),
    ] {
        let (table, manifest) = generate(&cfg)?;
        let positives = table.labels().unwrap().iter().filter(|&&l| l == 1).count();
        println!(
            "{name:<11} {:>5} samples, {:>2} sites, {:>2} studies, {:>3} features, {:.1}% artifacted (informative: {:?})",
            table.len(),
            table.sites().len(),
            table.studies().len(),
            table.schema().len(),
            100.0 * positives as f64 / table.len() as f64,
            &manifest.informative[..3],
        );
    }
    if let Some(dir) = std::env::args().nth(1) {
        let (table, manifest) = generate(&SynthConfig::cati_like(1))?;
        std::fs::create_dir_all(&dir)?;
        save_csv(&table, format!("{dir}/dataset.csv"))?;
        std::fs::write(format!("{dir}/manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        println!("wrote {dir}/dataset.csv");
    }
    Ok(())
}
