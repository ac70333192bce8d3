//! Random-forest classification with leave-one-out evaluation.

mod forest;
mod loocv;
mod metrics;
mod tree;

pub use forest::{rf_predict, rf_train, Hyperparams, RfModel};
pub use loocv::{loocv, loocv_detailed, FoldRecord, HyperparamGrid, LoocvOutcome};
pub use metrics::{compute_auc, confusion_matrix, roc_curve, Confusion, EvalReport, PatientScore};
pub use tree::{DecisionTree, Node};

use crate::error::{Error, Result};

/// Row-major design matrix with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn new(ids: Vec<String>, feature_names: Vec<String>, features: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        if ids.len() != features.len() || ids.len() != labels.len() {
            return Err(Error::LengthMismatch(ids.len(), features.len().min(labels.len())));
        }
        let d = feature_names.len();
        if let Some(row) = features.iter().find(|r| r.len() != d) {
            return Err(Error::DimMismatch { expected: vec![d], actual: vec![row.len()] });
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::ShapeMismatch("labels must be 0 or 1".into()));
        }
        Ok(Self { ids, feature_names, features, labels })
    }

    /// Unnamed features `x0, x1, …` and ids `r0, r1, …`.
    pub fn from_rows(features: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        let d = features.first().map_or(0, Vec::len);
        Self::new(
            (0..features.len()).map(|i| format!("r{i}")).collect(),
            (0..d).map(|j| format!("x{j}")).collect(),
            features,
            labels,
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn has_both_classes(&self) -> bool {
        self.labels.contains(&0) && self.labels.contains(&1)
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}
