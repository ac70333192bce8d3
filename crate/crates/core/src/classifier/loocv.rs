use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forest::{grow_forest, rf_predict, Hyperparams, RfModel};
use super::metrics::{compute_auc, EvalReport, PatientScore};
use super::Dataset;
use crate::error::{Error, Result};

/// Fraction of each fold's training rows held back for hyper-parameter selection.
pub const VALIDATION_FRACTION: f64 = 0.2;
const FOLD_SEED_STRIDE: u64 = 10_007;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperparamGrid {
    pub n_trees: Vec<usize>,
    pub min_leaf: Vec<usize>,
    #[serde(default)]
    pub mtry: Option<usize>,
}

impl Default for HyperparamGrid {
    fn default() -> Self {
        Self { n_trees: vec![100, 300, 500], min_leaf: vec![1, 3, 5], mtry: None }
    }
}

impl HyperparamGrid {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees.is_empty() || self.min_leaf.is_empty() {
            return Err(Error::InvalidConfig("hyper-parameter grid is empty".into()));
        }
        if self.n_trees.contains(&0) || self.min_leaf.contains(&0) {
            return Err(Error::InvalidConfig("grid values must be positive".into()));
        }
        Ok(())
    }
}

/// What one LOOCV fold saw and chose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub held_out: String,
    pub inner_train: Vec<String>,
    pub validation: Vec<String>,
    pub chosen: Hyperparams,
    pub validation_auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoocvOutcome {
    pub report: EvalReport,
    pub folds: Vec<FoldRecord>,
}

pub(crate) fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_add((fold as u64).wrapping_mul(FOLD_SEED_STRIDE))
}

/// Seeded stratified split of `rows` into (train, validation). Every class with at least two rows
/// contributes at least one validation row and always keeps one training row.
fn stratified_split(rows: &[usize], labels: &[u8], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in [0u8, 1] {
        let mut members: Vec<usize> = rows.iter().copied().filter(|&r| labels[r] == class).collect();
        members.shuffle(&mut rng);
        let n = members.len();
        let n_val = if n >= 2 { ((VALIDATION_FRACTION * n as f64).round() as usize).clamp(1, n - 1) } else { 0 };
        val.extend_from_slice(&members[..n_val]);
        train.extend_from_slice(&members[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn candidates(grid: &HyperparamGrid) -> Vec<Hyperparams> {
    let mut trees = grid.n_trees.clone();
    trees.sort_unstable();
    trees.dedup();
    let mut leaves = grid.min_leaf.clone();
    leaves.sort_unstable_by(|a, b| b.cmp(a));
    leaves.dedup();
    // Preference order for ties: fewer trees, then larger min_leaf.
    trees
        .iter()
        .flat_map(|&n_trees| leaves.iter().map(move |&min_leaf| Hyperparams { n_trees, min_leaf, mtry: grid.mtry }))
        .collect()
}

fn select(data: &Dataset, inner: &[usize], val: &[usize], grid: &HyperparamGrid, seed: u64) -> (Hyperparams, f64) {
    let inner_set = data.subset(inner);
    let max_trees = grid.n_trees.iter().copied().max().unwrap_or(1);
    // Forests are prefix-consistent in tree count, so one forest per min_leaf serves every n_trees.
    let forests: Vec<(usize, RfModel)> = grid
        .min_leaf
        .iter()
        .map(|&min_leaf| {
            let hp = Hyperparams { n_trees: max_trees, min_leaf, mtry: grid.mtry };
            (min_leaf, grow_forest(&inner_set, &hp, seed))
        })
        .collect();
    let mut best: Option<(Hyperparams, f64)> = None;
    for hp in candidates(grid) {
        let forest = &forests.iter().find(|(l, _)| *l == hp.min_leaf).expect("forest per min_leaf").1;
        let scored: Vec<(f64, u8)> =
            val.iter().map(|&r| (forest.predict_prefix(hp.n_trees, &data.features[r]), data.labels[r])).collect();
        // A validation set with one class cannot rank; every candidate then ties.
        let auc = compute_auc(&scored).unwrap_or(0.5);
        if best.is_none_or(|(_, b)| auc > b) {
            best = Some((hp, auc));
        }
    }
    best.expect("grid validated nonempty")
}

fn run_fold(data: &Dataset, grid: &HyperparamGrid, seed: u64, i: usize) -> Result<(PatientScore, FoldRecord)> {
    let fseed = fold_seed(seed, i);
    let rest: Vec<usize> = (0..data.len()).filter(|&r| r != i).collect();
    let (inner, val) = stratified_split(&rest, &data.labels, fseed);
    let (chosen, validation_auc) = select(data, &inner, &val, grid, fseed);
    let model = grow_forest(&data.subset(&rest), &chosen, fseed);
    let score = rf_predict(&model, &data.features[i])?;
    let ids = |rows: &[usize]| rows.iter().map(|&r| data.ids[r].clone()).collect();
    Ok((
        PatientScore { id: data.ids[i].clone(), score, label: data.labels[i] },
        FoldRecord { held_out: data.ids[i].clone(), inner_train: ids(&inner), validation: ids(&val), chosen, validation_auc },
    ))
}

/// Leave-one-out evaluation with an inner 80/20 stratified split for grid search in every fold.
pub fn loocv_detailed(data: &Dataset, grid: &HyperparamGrid, seed: u64) -> Result<LoocvOutcome> {
    if data.len() < 3 {
        return Err(Error::TooFewRows { needed: 3, got: data.len() });
    }
    if !data.has_both_classes() {
        return Err(Error::SingleClass);
    }
    grid.validate()?;
    let results: Vec<(PatientScore, FoldRecord)> =
        (0..data.len()).into_par_iter().map(|i| run_fold(data, grid, seed, i)).collect::<Result<_>>()?;
    let (scores, folds): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(LoocvOutcome { report: EvalReport::from_scores(scores)?, folds })
}

pub fn loocv(data: &Dataset, grid: &HyperparamGrid, seed: u64) -> Result<EvalReport> {
    loocv_detailed(data, grid, seed).map(|o| o.report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stratified_split_keeps_classes() {
        let labels = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1];
        let rows: Vec<usize> = (0..15).collect();
        let (train, val) = stratified_split(&rows, &labels, 5);
        assert_eq!(train.len() + val.len(), 15);
        assert_eq!(val.iter().filter(|&&r| labels[r] == 0).count(), 1);
        assert_eq!(val.iter().filter(|&&r| labels[r] == 1).count(), 2);
        assert!(train.iter().all(|r| !val.contains(r)));
    }

    #[test]
    fn singleton_class_stays_in_training() {
        let labels = [0, 0, 0, 1];
        let (train, val) = stratified_split(&[0, 1, 2, 3], &labels, 0);
        assert!(train.contains(&3));
        assert!(!val.contains(&3));
    }

    #[test]
    fn candidate_order() {
        let c = candidates(&HyperparamGrid::default());
        assert_eq!(c[0], Hyperparams { n_trees: 100, min_leaf: 5, mtry: None });
        assert_eq!(c[8], Hyperparams { n_trees: 500, min_leaf: 1, mtry: None });
    }

    #[test]
    fn input_validation() {
        let tiny = Dataset::from_rows(vec![vec![0.0], vec![1.0]], vec![0, 1]).unwrap();
        assert!(matches!(loocv(&tiny, &HyperparamGrid::default(), 0), Err(Error::TooFewRows { .. })));
        let one = Dataset::from_rows(vec![vec![0.0]; 4], vec![1; 4]).unwrap();
        assert!(matches!(loocv(&one, &HyperparamGrid::default(), 0), Err(Error::SingleClass)));
    }
}
