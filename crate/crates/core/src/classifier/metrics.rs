use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mann-Whitney AUC: the fraction of (positive, negative) pairs ranked correctly, ties counting
/// one half. Computed from mid-ranks in `O(n log n)`.
pub fn compute_auc(scores: &[(f64, u8)]) -> Result<f64> {
    let n_pos = scores.iter().filter(|s| s.1 == 1).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].0.total_cmp(&scores[b].0));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]].0 == scores[order[i]].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid_rank = (i + j + 2) as f64 / 2.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| scores[k].1 == 1).count();
        rank_sum_pos += mid_rank * pos_in_group as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// 2×2 counts, serialized as `[[tn, fp], [fn, tp]]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "[[usize; 2]; 2]", into = "[[usize; 2]; 2]")]
pub struct Confusion {
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tp: usize,
}

impl From<[[usize; 2]; 2]> for Confusion {
    fn from(m: [[usize; 2]; 2]) -> Self {
        Confusion { tn: m[0][0], fp: m[0][1], fn_: m[1][0], tp: m[1][1] }
    }
}

impl From<Confusion> for [[usize; 2]; 2] {
    fn from(c: Confusion) -> Self {
        [[c.tn, c.fp], [c.fn_, c.tp]]
    }
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tn + self.fp + self.fn_ + self.tp
    }

    pub fn accuracy(&self) -> f64 {
        (self.tn + self.tp) as f64 / self.total().max(1) as f64
    }
}

/// A score at or above `threshold` predicts the positive class.
pub fn confusion_matrix(scores: &[(f64, u8)], threshold: f64) -> Confusion {
    let mut c = Confusion::default();
    for &(s, label) in scores {
        match (s >= threshold, label == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// ROC points `(fpr, tpr)` from `(0,0)` to `(1,1)`, one point per distinct score.
pub fn roc_curve(scores: &[(f64, u8)]) -> Result<Vec<(f64, f64)>> {
    let n_pos = scores.iter().filter(|s| s.1 == 1).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (i, &(s, label)) in sorted.iter().enumerate() {
        if label == 1 {
            tp += 1;
        } else {
            fp += 1;
        }
        if sorted.get(i + 1).is_none_or(|next| next.0 != s) {
            points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
        }
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientScore {
    pub id: String,
    pub score: f64,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub accuracy: f64,
    pub confusion: Confusion,
    pub scores: Vec<PatientScore>,
}

impl EvalReport {
    pub fn from_scores(scores: Vec<PatientScore>) -> Result<Self> {
        let pairs: Vec<(f64, u8)> = scores.iter().map(|s| (s.score, s.label)).collect();
        let auc = compute_auc(&pairs)?;
        let confusion = confusion_matrix(&pairs, 0.5);
        Ok(Self { auc, accuracy: confusion.accuracy(), confusion, scores })
    }

    pub fn pairs(&self) -> Vec<(f64, u8)> {
        self.scores.iter().map(|s| (s.score, s.label)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    /// `fpr,tpr` CSV of the ROC curve.
    pub fn roc_csv(&self) -> Result<String> {
        let mut out = String::from("fpr,tpr\n");
        for (fpr, tpr) in roc_curve(&self.pairs())? {
            out.push_str(&format!("{fpr},{tpr}\n"));
        }
        Ok(out)
    }
}
