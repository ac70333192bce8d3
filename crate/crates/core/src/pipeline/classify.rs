use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{write_text, CohortManifest, FeatureSet, RunConfig, Target};
use crate::classifier::{loocv, Dataset, EvalReport};
use crate::error::{Error, Result};
use crate::gmm::FeatureMatrix;
use crate::survival::{impute_censored, median_split, PatientRecord};

const IMMUNE_NAMES: [&str; 3] = ["macrophage_m1", "neutrophils", "tfh"];

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyOutcome {
    pub target: Target,
    pub reports: Vec<(FeatureSet, EvalReport)>,
    pub summary_path: PathBuf,
}

fn records<'a>(manifest: &'a CohortManifest, ids: &[String]) -> Result<Vec<&'a PatientRecord>> {
    ids.iter()
        .map(|id| manifest.get(id).map(|r| &r.record).ok_or_else(|| Error::UnknownPatient(id.clone())))
        .collect()
}

/// Median-split labels for `ids`. Survival times are imputed for censoring first; label 1 means
/// long survival or above-median marker.
pub fn make_labels(manifest: &CohortManifest, ids: &[String], target: Target) -> Result<Vec<u8>> {
    let recs = records(manifest, ids)?;
    let values = match target.immune_index() {
        Some(j) => recs.iter().map(|r| r.immune[j]).collect(),
        None => impute_censored(&recs.iter().map(|r| (r.os_months, r.event)).collect::<Vec<_>>())?,
    };
    let (labels, _) = median_split(&values)?;
    if !(labels.contains(&0) && labels.contains(&1)) {
        return Err(Error::DegenerateLabels(target.to_string()));
    }
    Ok(labels)
}

/// Column-concatenated design matrix for one feature set, rows in `features` order. The immune
/// block leaves out the marker being predicted.
pub fn design_matrix(
    features: &FeatureMatrix,
    manifest: &CohortManifest,
    set: FeatureSet,
    target: Target,
) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let ids: Vec<String> = features.rows.iter().map(|(id, _)| id.clone()).collect();
    let recs = records(manifest, &ids)?;
    let immune_cols: Vec<usize> = (0..3).filter(|&j| Some(j) != target.immune_index()).collect();
    let mut names = Vec::new();
    if set.radiomic {
        names.extend(features.names.iter().cloned());
    }
    if set.clinical {
        names.extend(["age".to_string(), "gender".to_string()]);
    }
    if set.immune {
        names.extend(immune_cols.iter().map(|&j| IMMUNE_NAMES[j].to_string()));
    }
    let rows = features
        .rows
        .iter()
        .zip(&recs)
        .map(|((_, r), rec)| {
            let mut row = Vec::with_capacity(names.len());
            if set.radiomic {
                row.extend_from_slice(r);
            }
            if set.clinical {
                row.extend([rec.age, f64::from(rec.gender)]);
            }
            if set.immune {
                row.extend(immune_cols.iter().map(|&j| rec.immune[j]));
            }
            row
        })
        .collect();
    Ok((names, rows))
}

pub(crate) fn report_path(out_dir: &Path, target: Target, set: FeatureSet) -> PathBuf {
    out_dir.join(format!("classify_{target}_{set}.json"))
}

/// LOOCV per configured feature set; writes one report JSON and ROC CSV per set plus a summary table.
pub fn cmd_classify(
    features: &FeatureMatrix,
    manifest: &CohortManifest,
    target: Target,
    config: &RunConfig,
    out_dir: &Path,
) -> Result<ClassifyOutcome> {
    config.validate()?;
    let ids: Vec<String> = features.rows.iter().map(|(id, _)| id.clone()).collect();
    let labels = make_labels(manifest, &ids, target)?;
    let mut reports = Vec::new();
    let mut summary = String::from("feature_set,n_features,auc,accuracy,tn,fp,fn,tp\n");
    for &set in &config.feature_sets {
        let (names, rows) = design_matrix(features, manifest, set, target)?;
        let n_features = names.len();
        let data = Dataset::new(ids.clone(), names, rows, labels.clone())?;
        let report = loocv(&data, &config.grid, config.seed)?;
        write_text(&report_path(out_dir, target, set), report.to_json()?)?;
        write_text(&out_dir.join(format!("roc_{target}_{set}.csv")), report.roc_csv()?)?;
        let c = report.confusion;
        let _ = writeln!(summary, "{set},{n_features},{},{},{},{},{},{}", report.auc, report.accuracy, c.tn, c.fp, c.fn_, c.tp);
        log::info!("{target} {set}: auc {:.3}", report.auc);
        reports.push((set, report));
    }
    let summary_path = out_dir.join(format!("classify_{target}_summary.csv"));
    write_text(&summary_path, summary)?;
    Ok(ClassifyOutcome { target, reports, summary_path })
}
