use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::DecisionTree;
use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub n_trees: usize,
    pub min_leaf: usize,
    /// Candidate features per node; `None` means `floor(sqrt(d))`.
    #[serde(default)]
    pub mtry: Option<usize>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self { n_trees: 100, min_leaf: 1, mtry: None }
    }
}

impl Hyperparams {
    pub fn resolved_mtry(&self, d: usize) -> usize {
        self.mtry.unwrap_or_else(|| (d as f64).sqrt().floor() as usize).clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfModel {
    pub trees: Vec<DecisionTree>,
    pub hyperparams: Hyperparams,
    pub seed: u64,
    n_features: usize,
    /// Per tree, the training rows left out of its bootstrap sample.
    out_of_bag: Vec<Vec<usize>>,
}

/// Tree `t` uses the stream seeded with `seed + t`, so a forest of `n` trees is a prefix of any
/// larger forest grown with the same seed and data.
pub(crate) fn tree_seed(seed: u64, tree: usize) -> u64 {
    seed.wrapping_add(tree as u64)
}

/// Grows the forest without class checks; single-class data yields single-leaf trees.
pub(crate) fn grow_forest(train: &Dataset, hp: &Hyperparams, seed: u64) -> RfModel {
    let n = train.len();
    let mtry = hp.resolved_mtry(train.n_features());
    let grown: Vec<(DecisionTree, Vec<usize>)> = (0..hp.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(seed, t));
            let mut in_bag = vec![false; n];
            let rows: Vec<usize> = (0..n)
                .map(|_| {
                    let r = rng.random_range(0..n);
                    in_bag[r] = true;
                    r
                })
                .collect();
            let tree = DecisionTree::grow(&train.features, &train.labels, &rows, hp.min_leaf, mtry, &mut rng);
            let oob = (0..n).filter(|&i| !in_bag[i]).collect();
            (tree, oob)
        })
        .collect();
    let (trees, out_of_bag) = grown.into_iter().unzip();
    RfModel { trees, hyperparams: *hp, seed, n_features: train.n_features(), out_of_bag }
}

/// Bootstrap-aggregated CART forest with `floor(sqrt(d))` candidate features per node.
pub fn rf_train(train: &Dataset, hp: &Hyperparams, seed: u64) -> Result<RfModel> {
    if train.is_empty() {
        return Err(Error::EmptyTraining);
    }
    if train.len() < 2 || !train.has_both_classes() {
        return Err(Error::SingleClassTraining);
    }
    if hp.n_trees == 0 {
        return Err(Error::InvalidConfig("n_trees must be positive".into()));
    }
    Ok(grow_forest(train, hp, seed))
}

fn vote(tree: &DecisionTree, row: &[f64]) -> f64 {
    let [p0, p1] = tree.predict_proba(row);
    if p1 > p0 {
        1.0
    } else if p1 == p0 {
        0.5
    } else {
        0.0
    }
}

/// Fraction of trees whose leaf majority is class 1 (leaf ties count one half).
pub fn rf_predict(m: &RfModel, row: &[f64]) -> Result<f64> {
    if row.len() != m.n_features {
        return Err(Error::DimMismatch { expected: vec![m.n_features], actual: vec![row.len()] });
    }
    Ok(votes(&m.trees, row))
}

fn votes(trees: &[DecisionTree], row: &[f64]) -> f64 {
    trees.iter().map(|t| vote(t, row)).sum::<f64>() / trees.len() as f64
}

impl RfModel {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Score using only the first `n` trees.
    pub(crate) fn predict_prefix(&self, n: usize, row: &[f64]) -> f64 {
        votes(&self.trees[..n.min(self.trees.len())], row)
    }

    /// Out-of-bag accuracy at threshold 0.5 on the training data; rows never out of bag are skipped.
    pub fn oob_accuracy(&self, train: &Dataset) -> Option<f64> {
        let n = train.len();
        let mut sum = vec![0.0; n];
        let mut count = vec![0usize; n];
        for (tree, oob) in self.trees.iter().zip(&self.out_of_bag) {
            for &i in oob {
                sum[i] += vote(tree, &train.features[i]);
                count[i] += 1;
            }
        }
        let (mut correct, mut total) = (0usize, 0usize);
        for i in 0..n {
            if count[i] > 0 {
                let pred = u8::from(sum[i] / count[i] as f64 >= 0.5);
                correct += usize::from(pred == train.labels[i]);
                total += 1;
            }
        }
        (total > 0).then(|| correct as f64 / total as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> Dataset {
        let xs: Vec<f64> = (1..=10).flat_map(|i| [-(i as f64), i as f64]).collect();
        let labels = xs.iter().map(|&x| u8::from(x > 0.0)).collect();
        Dataset::from_rows(xs.into_iter().map(|x| vec![x]).collect(), labels).unwrap()
    }

    #[test]
    fn separable_training_accuracy() {
        let data = separable();
        let m = rf_train(&data, &Hyperparams { n_trees: 25, ..Default::default() }, 3).unwrap();
        for (row, &label) in data.features.iter().zip(&data.labels) {
            let s = rf_predict(&m, row).unwrap();
            assert_eq!(u8::from(s >= 0.5), label);
        }
    }

    #[test]
    fn constant_features_give_single_leaves() {
        let data = Dataset::from_rows(vec![vec![2.0, 2.0]; 8], vec![0, 1, 0, 1, 1, 1, 0, 1]).unwrap();
        let m = rf_train(&data, &Hyperparams { n_trees: 10, ..Default::default() }, 0).unwrap();
        assert!(m.trees.iter().all(DecisionTree::is_single_leaf));
    }

    #[test]
    fn pure_class_forest_scores_one() {
        let data = Dataset::from_rows((0..6).map(|i| vec![i as f64]).collect(), vec![1; 6]).unwrap();
        assert!(matches!(rf_train(&data, &Hyperparams::default(), 0), Err(Error::SingleClassTraining)));
        let m = grow_forest(&data, &Hyperparams { n_trees: 7, ..Default::default() }, 0);
        assert_eq!(rf_predict(&m, &[100.0]).unwrap(), 1.0);
    }

    #[test]
    fn single_tree_vote_granularity() {
        let data = Dataset::from_rows(
            vec![vec![0.0], vec![0.0], vec![1.0], vec![1.0], vec![2.0], vec![2.0]],
            vec![0, 1, 0, 1, 1, 1],
        )
        .unwrap();
        let m = rf_train(&data, &Hyperparams { n_trees: 1, ..Default::default() }, 11).unwrap();
        for x in [-1.0, 0.0, 0.5, 1.0, 1.5, 3.0] {
            let s = rf_predict(&m, &[x]).unwrap();
            assert!(s == 0.0 || s == 0.5 || s == 1.0);
        }
    }

    #[test]
    fn errors() {
        let empty = Dataset::from_rows(vec![], vec![]).unwrap();
        assert!(matches!(rf_train(&empty, &Hyperparams::default(), 0), Err(Error::EmptyTraining)));
        let m = rf_train(&separable(), &Hyperparams { n_trees: 3, ..Default::default() }, 0).unwrap();
        assert!(matches!(rf_predict(&m, &[1.0, 2.0]), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn forests_are_prefix_consistent() {
        let data = separable();
        let small = rf_train(&data, &Hyperparams { n_trees: 5, ..Default::default() }, 77).unwrap();
        let big = rf_train(&data, &Hyperparams { n_trees: 12, ..Default::default() }, 77).unwrap();
        assert_eq!(small.trees[..], big.trees[..5]);
    }
}
