//! Random forest on two Gaussian blobs: out-of-bag accuracy and nested leave-one-out AUC.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use radiomics::classifier::{loocv_detailed, rf_predict, rf_train, Dataset, HyperparamGrid, Hyperparams};

fn blobs(n: usize, d: usize, sep: f64, seed: u64) -> radiomics::Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let features = labels
        .iter()
        .map(|&l| (0..d).map(|j| rng.sample::<f64, _>(StandardNormal) + if j < 2 { sep * l as f64 } else { 0.0 }).collect())
        .collect();
    Dataset::from_rows(features, labels)
}

fn main() -> radiomics::Result<()> {
    let train = blobs(200, 6, 3.0, 1)?;
    let model = rf_train(&train, &Hyperparams { n_trees: 200, ..Default::default() }, 11)?;
    println!("OOB accuracy: {:.3}", model.oob_accuracy(&train).unwrap_or(f64::NAN));
    println!("score for a point near class 1: {:.3}", rf_predict(&model, &[3.0, 3.0, 0.0, 0.0, 0.0, 0.0])?);

    let small = blobs(30, 6, 2.0, 2)?;
    let grid = HyperparamGrid { n_trees: vec![50, 100], min_leaf: vec![1, 3], mtry: None };
    let outcome = loocv_detailed(&small, &grid, 5)?;
    let r = &outcome.report;
    println!("LOOCV AUC {:.3}, accuracy {:.3}, confusion {:?}", r.auc, r.accuracy, <[[usize; 2]; 2]>::from(r.confusion));
    let f = &outcome.folds[0];
    println!("fold 0 held out {} chose {:?} (validation AUC {:.3})", f.held_out, f.chosen, f.validation_auc);
    Ok(())
}
