//! Synthetic multi-site / multi-study quality-metric tables.
//!
//! Each feature vector is
//! `base + α·site_offset + β·study_offset + γ·class·(±informative) + σ·noise`
//! with site and study offsets drawn once per group from a standard normal,
//! and noise drawn independently per sample. Artifact prevalence can
//! vary between sites (`prevalence_spread`), in which case a site's median
//! carries part of the label signal. The shared structure (`base`,
//! the informative features and their shift directions) comes from
//! `population_seed`, so tables generated with different `seed`s but the same
//! population describe the same underlying artifact signal on different
//! sites.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureSchema, FeatureTable, Sample, MRIQC_NORMALIZED_FEATURES};
use crate::error::{Error, Result};
use crate::rng::{self, tag};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_sites: usize,
    pub n_studies: usize,
    pub samples_per_site: usize,
    pub n_features: usize,
    /// Number of features shifted by the artifact class.
    pub n_informative: usize,
    pub artifact_prevalence: f64,
    /// Standard deviation of the per-site artifact prevalence on the logit
    /// scale: site `s` draws `z ~ N(0, 1)` and uses
    /// `logistic(logit(artifact_prevalence) + spread·z)`. 0 disables it.
    pub prevalence_spread: f64,
    pub site_effect_strength: f64,
    pub study_effect_strength: f64,
    pub artifact_shift: f64,
    /// Study-specific part η of the artifact signature: in study `s` an
    /// artifact adds `γ·(±informative + η·u_s)` with `u_s ~ N(0, I)` over all
    /// features. 0 gives every study the same signature.
    pub artifact_heterogeneity: f64,
    pub noise_scale: f64,
    pub seed: u64,
    pub population_seed: u64,
    /// Prefix of generated site / study ids, e.g. `site007`.
    pub site_prefix: String,
    pub study_prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_sites: 5,
            n_studies: 1,
            samples_per_site: 100,
            n_features: 69,
            n_informative: 10,
            artifact_prevalence: 0.13,
            prevalence_spread: 0.0,
            site_effect_strength: 1.0,
            study_effect_strength: 0.0,
            artifact_shift: 1.0,
            artifact_heterogeneity: 0.0,
            noise_scale: 1.0,
            seed: 0,
            population_seed: 0,
            site_prefix: "site".into(),
            study_prefix: "study".into(),
        }
    }
}

impl SynthConfig {
    /// Few sites, a single study, strong site effect (K-means site scores
    /// around 0.55).
    pub fn abide_like(seed: u64) -> Self {
        Self {
            n_sites: 17,
            n_studies: 1,
            samples_per_site: 65,
            site_effect_strength: 0.4,
            study_effect_strength: 0.0,
            artifact_heterogeneity: 0.5,
            seed,
            site_prefix: "abide_site".into(),
            study_prefix: "abide_study".into(),
            ..Self::default()
        }
    }

    /// Two sites, one study, high artifact prevalence.
    pub fn ds030_like(seed: u64) -> Self {
        Self {
            n_sites: 2,
            n_studies: 1,
            samples_per_site: 130,
            artifact_prevalence: 0.28,
            site_effect_strength: 0.3,
            artifact_heterogeneity: 0.5,
            seed,
            site_prefix: "ds030_site".into(),
            study_prefix: "ds030_study".into(),
            ..Self::default()
        }
    }

    /// Many sites spread over many studies with weak site and study effects
    /// (K-means scores below 0.2) and site-dependent artifact prevalence.
    pub fn cati_like(seed: u64) -> Self {
        Self {
            n_sites: 40,
            n_studies: 20,
            samples_per_site: 50,
            prevalence_spread: 1.0,
            site_effect_strength: 0.25,
            study_effect_strength: 0.2,
            artifact_heterogeneity: 0.5,
            seed,
            site_prefix: "cati_site".into(),
            study_prefix: "cati_study".into(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_sites == 0 || self.n_studies == 0 || self.samples_per_site == 0 || self.n_features == 0 {
            return bad("n_sites, n_studies, samples_per_site and n_features must be positive");
        }
        if self.n_informative == 0 || self.n_informative > self.n_features {
            return bad("n_informative must be in [1, n_features]");
        }
        if !(self.artifact_prevalence > 0.0 && self.artifact_prevalence < 1.0) {
            return bad("artifact_prevalence must be in (0, 1)");
        }
        if !(self.site_effect_strength >= 0.0
            && self.study_effect_strength >= 0.0
            && self.artifact_shift >= 0.0
            && self.prevalence_spread >= 0.0
            && self.artifact_heterogeneity >= 0.0)
        {
            return bad("effect strengths, artifact_shift, prevalence_spread and artifact_heterogeneity must be >= 0");
        }
        if !(self.noise_scale > 0.0) {
            return bad("noise_scale must be > 0");
        }
        Ok(())
    }

    pub fn schema(&self) -> FeatureSchema {
        let names: Vec<String> = (0..self.n_features)
            .map(|j| match MRIQC_NORMALIZED_FEATURES.get(j) {
                Some(n) => n.to_string(),
                None => format!("iqm_{j:02}"),
            })
            .collect();
        let normalized = names.iter().take(MRIQC_NORMALIZED_FEATURES.len()).cloned().collect();
        FeatureSchema::new(names, normalized).expect("generated names are unique")
    }

    /// Evenly spaced informative feature indices.
    pub fn informative_features(&self) -> Vec<usize> {
        (0..self.n_informative).map(|k| k * self.n_features / self.n_informative).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleTruth {
    pub id: String,
    pub site: String,
    pub study: String,
    pub class: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationManifest {
    pub config: SynthConfig,
    pub base: Vec<f64>,
    pub informative: Vec<usize>,
    /// Signed artifact direction per informative feature.
    pub artifact_direction: Vec<f64>,
    /// Full artifact shift vector of each study.
    pub study_artifact_shift: BTreeMap<String, Vec<f64>>,
    pub site_offsets: BTreeMap<String, Vec<f64>>,
    pub site_prevalence: BTreeMap<String, f64>,
    pub study_offsets: BTreeMap<String, Vec<f64>>,
    pub samples: Vec<SampleTruth>,
}

fn normal_vec(rng: &mut rng::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn generate(cfg: &SynthConfig) -> Result<(FeatureTable, GenerationManifest)> {
    cfg.validate()?;
    let p = cfg.n_features;
    let mut pop = rng::stream(cfg.population_seed, &[tag::SYNTH, 0]);
    let base = normal_vec(&mut pop, p);
    let informative = cfg.informative_features();
    let direction: Vec<f64> = informative.iter().map(|_| if pop.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    let mut shift = vec![0.0; p];
    for (&j, &d) in informative.iter().zip(&direction) {
        shift[j] = d * cfg.artifact_shift;
    }

    let site_name = |s: usize| format!("{}{s:03}", cfg.site_prefix);
    let study_name = |s: usize| format!("{}{s:02}", cfg.study_prefix);
    let site_offsets: Vec<Vec<f64>> =
        (0..cfg.n_sites).map(|s| normal_vec(&mut rng::stream(cfg.seed, &[tag::SYNTH, 1, s as u64]), p)).collect();
    let site_logit_shift: Vec<f64> = (0..cfg.n_sites)
        .map(|s| {
            let z: f64 = StandardNormal.sample(&mut rng::stream(cfg.seed, &[tag::SYNTH, 4, s as u64]));
            cfg.prevalence_spread * z
        })
        .collect();
    let logit = (cfg.artifact_prevalence / (1.0 - cfg.artifact_prevalence)).ln();
    let site_prevalence: Vec<f64> = site_logit_shift
        .iter()
        .map(|&q| if q == 0.0 { cfg.artifact_prevalence } else { 1.0 / (1.0 + (-(logit + q)).exp()) })
        .collect();
    let study_offsets: Vec<Vec<f64>> =
        (0..cfg.n_studies).map(|s| normal_vec(&mut rng::stream(cfg.seed, &[tag::SYNTH, 2, s as u64]), p)).collect();

    let study_shift: Vec<Vec<f64>> = (0..cfg.n_studies)
        .map(|s| {
            if cfg.artifact_heterogeneity == 0.0 {
                return shift.clone();
            }
            let u = normal_vec(&mut rng::stream(cfg.seed, &[tag::SYNTH, 5, s as u64]), p);
            shift.iter().zip(u).map(|(&v, u)| v + cfg.artifact_shift * cfg.artifact_heterogeneity * u).collect()
        })
        .collect();

    let n = cfg.n_sites * cfg.samples_per_site;
    let samples: Vec<Sample> = (0..n)
        .into_par_iter()
        .map(|i| {
            let site = i / cfg.samples_per_site;
            let study = site % cfg.n_studies;
            let mut r = rng::stream(cfg.seed, &[tag::SYNTH, 3, i as u64]);
            let class = u8::from(r.random_bool(site_prevalence[site]));
            let noise = normal_vec(&mut r, p);
            let features = (0..p)
                .map(|j| {
                    base[j]
                        + cfg.site_effect_strength * site_offsets[site][j]
                        + cfg.study_effect_strength * study_offsets[study][j]
                        + f64::from(class) * study_shift[study][j]
                        + cfg.noise_scale * noise[j]
                })
                .collect();
            Sample {
                id: format!("{}-{i:05}", site_name(site)),
                site: site_name(site),
                study: study_name(study),
                label: Some(class),
                raw_rating: None,
                features,
            }
        })
        .collect();

    let manifest = GenerationManifest {
        config: cfg.clone(),
        base,
        informative,
        artifact_direction: direction,
        study_artifact_shift: study_shift.into_iter().enumerate().map(|(s, v)| (study_name(s), v)).collect(),
        site_offsets: site_offsets.into_iter().enumerate().map(|(s, v)| (site_name(s), v)).collect(),
        site_prevalence: site_prevalence.into_iter().enumerate().map(|(s, v)| (site_name(s), v)).collect(),
        study_offsets: study_offsets.into_iter().enumerate().map(|(s, v)| (study_name(s), v)).collect(),
        samples: samples
            .iter()
            .map(|s| SampleTruth { id: s.id.clone(), site: s.site.clone(), study: s.study.clone(), class: s.label.unwrap() })
            .collect(),
    };
    Ok((FeatureTable::new(cfg.schema(), samples)?, manifest))
}
