use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::classify::report_path;
use super::{cmd_classify, write_text, CohortManifest, FeatureSet, RunConfig, Target};
use crate::classifier::EvalReport;
use crate::error::{Error, Result};
use crate::gmm::FeatureMatrix;
use crate::report::{fmt_opt, km_svg};
use crate::survival::{km_estimate, logrank_test, Observation};

/// Per feature set comparison of the predicted short- and long-survival groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalSummary {
    pub feature_set: FeatureSet,
    pub n_short: usize,
    pub n_long: usize,
    pub median_short: Option<f64>,
    pub median_long: Option<f64>,
    /// Log-rank statistics are absent when a predicted group is empty or no deaths occurred.
    pub chi2: Option<f64>,
    pub p_value: Option<f64>,
    /// Hazard of the short group relative to the long group.
    pub hr: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurviveOutcome {
    pub rows: Vec<SurvivalSummary>,
    pub table_path: PathBuf,
}

fn summarize(set: FeatureSet, report: &EvalReport, manifest: &CohortManifest, out_dir: &Path) -> Result<SurvivalSummary> {
    let mut short: Vec<Observation> = Vec::new();
    let mut long: Vec<Observation> = Vec::new();
    for s in &report.scores {
        let rec = &manifest.get(&s.id).ok_or_else(|| Error::UnknownPatient(s.id.clone()))?.record;
        // Groups come from predicted LOOCV scores, not from the true labels.
        let group = if s.score >= 0.5 { &mut long } else { &mut short };
        group.push((rec.os_months, rec.event));
    }
    let km_short = km_estimate(&short);
    let km_long = km_estimate(&long);
    write_text(&out_dir.join(format!("km_{set}_short.csv")), km_short.to_csv())?;
    write_text(&out_dir.join(format!("km_{set}_long.csv")), km_long.to_csv())?;
    let title = format!("{set}: predicted survival groups");
    write_text(&out_dir.join(format!("km_{set}.svg")), km_svg(&title, &[("short", &km_short), ("long", &km_long)]))?;

    let test = match logrank_test(&short, &long) {
        Ok(t) => Some(t),
        Err(e @ (Error::EmptySamples | Error::NoEvents)) => {
            log::warn!("{set}: no log-rank test ({e})");
            None
        }
        Err(e) => return Err(e),
    };
    Ok(SurvivalSummary {
        feature_set: set,
        n_short: short.len(),
        n_long: long.len(),
        median_short: km_short.median_survival,
        median_long: km_long.median_survival,
        chi2: test.as_ref().map(|t| t.chi2),
        p_value: test.as_ref().map(|t| t.p_value),
        hr: test.as_ref().and_then(|t| t.hazard_ratio),
        ci_low: test.as_ref().and_then(|t| t.ci95).map(|c| c.0),
        ci_high: test.as_ref().and_then(|t| t.ci95).map(|c| c.1),
        auc: report.auc,
    })
}

/// Kaplan-Meier and log-rank comparison of predicted groups for every configured feature set.
/// Survival classification reports are read from `out_dir`; when any is missing and `features`
/// is given, the survival classification is run first.
pub fn cmd_survive(
    manifest: &CohortManifest,
    features: Option<&FeatureMatrix>,
    config: &RunConfig,
    out_dir: &Path,
) -> Result<SurviveOutcome> {
    config.validate()?;
    let missing = config.feature_sets.iter().any(|&s| !report_path(out_dir, Target::Survival, s).exists());
    if missing {
        match features {
            Some(f) => {
                cmd_classify(f, manifest, Target::Survival, config, out_dir)?;
            }
            None => {
                let s = config.feature_sets.iter().find(|&&s| !report_path(out_dir, Target::Survival, s).exists());
                return Err(Error::MissingFile(report_path(out_dir, Target::Survival, *s.expect("some set is missing"))));
            }
        }
    }
    let mut table = String::from("feature_set,median_short,median_long,hr,ci_low,ci_high,p_value,auc\n");
    let mut rows = Vec::new();
    for &set in &config.feature_sets {
        let report = EvalReport::read_json(report_path(out_dir, Target::Survival, set))?;
        let row = summarize(set, &report, manifest, out_dir)?;
        let mut json = serde_json::to_string_pretty(&row)?;
        json.push('\n');
        write_text(&out_dir.join(format!("survival_{set}.json")), json)?;
        let _ = writeln!(
            table,
            "{set},{},{},{},{},{},{},{}",
            fmt_opt(row.median_short),
            fmt_opt(row.median_long),
            fmt_opt(row.hr),
            fmt_opt(row.ci_low),
            fmt_opt(row.ci_high),
            fmt_opt(row.p_value),
            row.auc
        );
        rows.push(row);
    }
    let table_path = out_dir.join("survival_table.csv");
    write_text(&table_path, table)?;
    Ok(SurviveOutcome { rows, table_path })
}
