//! Random forest and extremely randomized trees on a two-blob problem.
use batchqc::ensemble::{feature_importances, fit_forest, predict_proba, ForestParams};
use batchqc::matrix::Matrix;
use batchqc::metrics::{roc_auc, ScoredLabels};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn blobs(seed: u64, n: usize) -> (Matrix, Vec<usize>) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<usize> = (0..n).map(|_| usize::from(r.random_bool(0.3))).collect();
    let rows: Vec<Vec<f64>> = y
        .iter()
        .map(|&c| {
            let z = |r: &mut ChaCha8Rng| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, r);
            vec![c as f64 * 1.5 + z(&mut r), c as f64 * 0.5 + z(&mut r), z(&mut r)]
        })
        .collect();
    (Matrix::from_rows(&rows), y)
}

fn main() -> batchqc::Result<()> {
    let (x, y) = blobs(1, 600);
    let (x_test, y_test) = blobs(2, 400);
    let labels: Vec<u8> = y_test.iter().map(|&c| c as u8).collect();
    for (name, params) in [("random forest", ForestParams::random_forest()), ("extra trees", ForestParams::extra_trees())] {
        let forest = fit_forest(&x, &y, &params.with_seed(7))?;
        let p = predict_proba(&forest, &x_test)?;
        let auc = roc_auc(&ScoredLabels::new(&p, &labels)?)?;
        let imp: Vec<String> = feature_importances(&forest).iter().map(|v| format!("{v:.3}")).collect();
        println!("{name:<13} held-out AUC {auc:.3}, importances [{}]", imp.join(", "));
    }
    Ok(())
}
