//! Loading a ratings CSV with a label rule, the per-study 60/40 split and the
//! site-preserving subsample.
use batchqc::dataset::{
    read_csv, split_per_study, subsample_site_preserving, FeatureSchema, GroupBy, LabelRule, LoadOptions, SplitKind,
    SplitSpec,
};

const CSV: &str = "\
id,site,study,rating,cjv,cnr,snr_total
a1,siteA,s1,4,0.41,3.2,11.0
a2,siteA,s1,1,0.62,2.1,7.5
a3,siteA,s1,3,0.44,3.0,10.2
b1,siteB,s1,2,0.58,2.4,8.1
b2,siteB,s2,4,0.39,3.4,12.3
b3,siteB,s2,0,0.71,1.7,6.0
c1,siteC,s2,3,0.45,2.9,9.9
c2,siteC,s2,4,0.40,3.1,10.8
c3,siteC,s2,not-a-number,0.40,3.1,10.8
";

fn main() -> batchqc::Result<()> {
    let schema = FeatureSchema::new(
        vec!["cjv".into(), "cnr".into(), "snr_total".into()],
        vec!["cjv".into(), "cnr".into()],
    )?;
    // Ratings above 2 are good (label 0); the rest are artifacted (label 1).
    let rule = LabelRule::default();
    let opts = LoadOptions { drop_invalid: true, ..Default::default() };
    let (table, report) = read_csv(CSV.as_bytes(), &schema, &rule, opts)?;
    println!("loaded {} rows, rejected {}: {:?}", table.len(), report.rows_rejected, report.reject_reasons);
    println!("labels {:?}", table.labels().unwrap());

    let split = SplitSpec { kind: SplitKind::PerStudyFraction { train_fraction: 0.6 }, seed: 1 };
    let (train, test) = split_per_study(&table, &split)?;
    println!("per-study split: {} train / {} test", train.len(), test.len());

    let sub = SplitSpec { kind: SplitKind::SitePreservingSubsample { target_size: 5 }, seed: 1 };
    let small = subsample_site_preserving(&table, &sub)?;
    let sizes: Vec<(String, usize)> = small.group_indices(GroupBy::Site).into_iter().map(|(k, v)| (k, v.len())).collect();
    println!("site-preserving subsample of 5: {sizes:?}");
    Ok(())
}
