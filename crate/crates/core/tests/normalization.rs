mod common;

use batchqc::dataset::{FeatureSchema, FeatureTable, GroupBy, Sample};
use batchqc::normalize::{apply_norm, fit_norm, NormMode};
use common::*;
use proptest::prelude::*;

/// Sites of varied size; values on a coarse grid so ties and constant sites occur.
fn multi_site() -> impl Strategy<Value = FeatureTable> {
    prop::collection::vec((1usize..12, -3i32..3, 0u8..4), 1..5).prop_flat_map(|sites| {
        let n: usize = sites.iter().map(|s| s.0).sum();
        prop::collection::vec(prop::collection::vec(-4i32..5, 3), n).prop_map(move |vals| {
            let mut rows = Vec::new();
            let mut it = vals.into_iter();
            for (s, (size, shift, scale)) in sites.iter().enumerate() {
                for _ in 0..*size {
                    let v = it.next().unwrap();
                    let f = v.iter().map(|&x| f64::from(shift * 10) + f64::from(x) * f64::from(*scale)).collect();
                    rows.push((format!("site{s}"), Some(0), f));
                }
            }
            table(rows)
        })
    })
}

fn column(t: &FeatureTable, rows: &[usize], j: usize) -> Vec<f64> {
    rows.iter().map(|&i| t.samples()[i].features[j]).collect()
}

proptest! {
    #[test]
    fn centering_zeroes_every_site_median(t in multi_site()) {
        let names = t.schema().names().to_vec();
        let out = apply_norm(&fit_norm(&t, NormMode::Center, &names).unwrap(), &t).unwrap();
        for rows in t.group_indices(GroupBy::Site).values() {
            for j in 0..names.len() {
                prop_assert!(quantile(&column(&out, rows, j), 0.5).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn scaling_gives_unit_iqr_unless_degenerate(t in multi_site()) {
        let names = t.schema().names().to_vec();
        let params = fit_norm(&t, NormMode::CenterAndScale, &names).unwrap();
        let out = apply_norm(&params, &t).unwrap();
        for (site, rows) in t.group_indices(GroupBy::Site) {
            for (j, name) in names.iter().enumerate() {
                let v = column(&out, &rows, j);
                prop_assert!(v.iter().all(|x| x.is_finite()));
                let stat = &params.per_site[&site][name];
                let raw_iqr = quantile(&column(&t, &rows, j), 0.75) - quantile(&column(&t, &rows, j), 0.25);
                prop_assert_eq!(stat.degenerate(), raw_iqr == 0.0);
                prop_assert!(stat.spread() > 0.0);
                if !stat.degenerate() {
                    prop_assert!((quantile(&v, 0.75) - quantile(&v, 0.25) - 1.0).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn known_sites_are_independent_of_batch_composition(t in multi_site(), keep in prop::collection::vec(any::<bool>(), 60)) {
        let names = t.schema().names().to_vec();
        let params = fit_norm(&t, NormMode::CenterAndScale, &names).unwrap();
        let full = apply_norm(&params, &t).unwrap();
        let rows: Vec<usize> = (0..t.len()).filter(|&i| keep[i % keep.len()]).collect();
        prop_assume!(!rows.is_empty());
        let part = apply_norm(&params, &t.subset(&rows)).unwrap();
        for (k, &i) in rows.iter().enumerate() {
            prop_assert_eq!(&part.samples()[k].features, &full.samples()[i].features);
        }
    }
}

#[test]
fn features_outside_subset_are_untouched() {
    let mut r = rng(5);
    let schema = FeatureSchema::new(vec!["a".into(), "b".into(), "c".into()], vec!["b".into()]).unwrap();
    let samples = (0..30)
        .map(|i| Sample {
            id: format!("s{i}"),
            site: format!("site{}", i % 3),
            study: "x".into(),
            label: Some(0),
            raw_rating: None,
            features: vec![normal(&mut r) * 1e3, normal(&mut r), std::f64::consts::PI * normal(&mut r)],
        })
        .collect();
    let t = FeatureTable::new(schema, samples).unwrap();
    let out = apply_norm(&fit_norm(&t, NormMode::CenterAndScale, &["b".to_string()]).unwrap(), &t).unwrap();
    for (a, b) in t.samples().iter().zip(out.samples()) {
        assert_eq!(a.features[0].to_bits(), b.features[0].to_bits());
        assert_eq!(a.features[2].to_bits(), b.features[2].to_bits());
    }
}
