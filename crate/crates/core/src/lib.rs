//! Site-effect-aware quality control for tabular MRI image-quality metrics.
//!
//! The crate covers the full training and evaluation protocol of a random
//! forest QC classifier together with the diagnostics used to study how
//! acquisition sites and studies shape its behavior:
//!
//! * [`dataset`]: feature tables, CSV I/O, label rules, per-study and
//!   site-preserving splits;
//! * [`normalize`]: site-wise median / IQR centering and scaling;
//! * [`ensemble`]: random forests and extremely randomized trees;
//! * [`select`]: the `ft_sites` and `ft_noise` feature filters;
//! * [`crossval`]: LoSo / k-fold splitters and nested grid search;
//! * [`metrics`]: ROC-AUC, Youden-optimal thresholds, Wasserstein distances;
//! * [`cluster`]: K-means homogeneity / completeness batch-effect scores;
//! * [`synth`]: synthetic multi-site data with controllable effects;
//! * [`cli`]: the `batchqc` command surface.
//!
//! Every random choice is derived from an explicit seed, and results do not
//! depend on the number of worker threads.

pub mod cli;
pub mod cluster;
pub mod crossval;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod normalize;
pub mod rng;
pub mod select;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
