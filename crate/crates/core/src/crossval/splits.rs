use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureTable, GroupBy};
use crate::error::{Error, Result};
use crate::rng::{self, tag};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitScheme {
    /// Leave-one-site-out: one fold per site.
    Loso,
    Kfold {
        k: usize,
        #[serde(default = "yes")]
        shuffled: bool,
        #[serde(default)]
        seed: u64,
    },
    StratifiedKfold {
        k: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn yes() -> bool {
    true
}

impl SplitScheme {
    /// Outer scheme used when none is configured: LoSo mirrors LoSo,
    /// anything else gets a stratified 5-fold.
    pub fn default_outer_for(inner: &SplitScheme, seed: u64) -> SplitScheme {
        match inner {
            SplitScheme::Loso => SplitScheme::Loso,
            _ => SplitScheme::StratifiedKfold { k: 5, seed },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SplitScheme::Kfold { k, .. } | SplitScheme::StratifiedKfold { k, .. } if *k < 2 => {
                Err(Error::Config(format!("k = {k}: k-fold needs k >= 2")))
            }
            _ => Ok(()),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            SplitScheme::Loso => "LoSo".into(),
            SplitScheme::Kfold { k, .. } => format!("{k}-Fold"),
            SplitScheme::StratifiedKfold { k, .. } => format!("stratified {k}-Fold"),
        }
    }
}

/// One train/test partition of a table's row indices (both ascending).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub name: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn folds_from_assignment(assign: &[usize], k: usize, name: impl Fn(usize) -> String) -> Vec<Fold> {
    (0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..assign.len()).partition(|&i| assign[i] == f);
            Fold { name: name(f), train, test }
        })
        .collect()
}

pub fn make_splits(table: &FeatureTable, scheme: &SplitScheme) -> Result<Vec<Fold>> {
    scheme.validate()?;
    let n = table.len();
    match scheme {
        SplitScheme::Loso => {
            let groups = table.group_indices(GroupBy::Site);
            if groups.len() < 2 {
                return Err(Error::Config("leave-one-site-out needs at least two sites".into()));
            }
            let names: Vec<String> = groups.keys().cloned().collect();
            let mut assign = vec![0; n];
            for (f, rows) in groups.values().enumerate() {
                for &i in rows {
                    assign[i] = f;
                }
            }
            Ok(folds_from_assignment(&assign, names.len(), |f| names[f].clone()))
        }
        SplitScheme::Kfold { k, shuffled, seed } => {
            if *k > n {
                return Err(Error::Config(format!("k = {k} exceeds the {n} samples")));
            }
            let mut order: Vec<usize> = (0..n).collect();
            if *shuffled {
                order.shuffle(&mut rng::stream(*seed, &[tag::FOLDS]));
            }
            // first n % k folds get one extra sample
            let (base, extra) = (n / k, n % k);
            let mut assign = vec![0; n];
            let mut pos = 0;
            for f in 0..*k {
                let size = base + usize::from(f < extra);
                for &i in &order[pos..pos + size] {
                    assign[i] = f;
                }
                pos += size;
            }
            Ok(folds_from_assignment(&assign, *k, |f| format!("fold{f}")))
        }
        SplitScheme::StratifiedKfold { k, seed } => {
            if *k > n {
                return Err(Error::Config(format!("k = {k} exceeds the {n} samples")));
            }
            let labels = table.require_labels()?;
            let mut rng = rng::stream(*seed, &[tag::FOLDS]);
            let mut assign = vec![0; n];
            // deal each class round-robin, continuing the fold pointer across classes
            let mut next = 0;
            for class in [0u8, 1] {
                let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
                members.shuffle(&mut rng);
                for i in members {
                    assign[i] = next % k;
                    next += 1;
                }
            }
            Ok(folds_from_assignment(&assign, *k, |f| format!("fold{f}")))
        }
    }
}
