use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{CohortManifest, ManifestRow, RunConfig};
use crate::cnn::{forward, load_weights, CnnWeights};
use crate::error::{Error, Result};
use crate::gmm::{build_feature_vector, reduce_modalities, FeatureMatrix, FeatureVector};
use crate::volume::{load_mask, load_volume, prepare_cnn_input, Modality};

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractSummary {
    pub features_path: PathBuf,
    pub n_extracted: usize,
    /// `(patient_id, error message)` for every skipped patient, in manifest order.
    pub failures: Vec<(String, String)>,
}

impl ExtractSummary {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }
}

/// All four modalities of one patient through preprocessing, the network and the mixture fits.
pub fn extract_patient(row: &ManifestRow, weights: &CnnWeights, config: &RunConfig) -> Result<FeatureVector> {
    let (mask, mask_spacing) = load_mask(&row.mask)?;
    let mut per_modality = Vec::with_capacity(4);
    for (i, modality) in Modality::MRI.into_iter().enumerate() {
        let v = load_volume(&row.volumes[i])?;
        if v.dims() != mask.dims() {
            return Err(Error::DimMismatch { expected: mask.dims().to_vec(), actual: v.dims().to_vec() });
        }
        let input = prepare_cnn_input(&v, &mask, mask_spacing)?;
        let acts = forward(&input.volume, &input.mask, weights)?;
        let mut fv = build_feature_vector(&acts, config.k, config.seed)?;
        fv.modality = Some(modality);
        per_modality.push(fv);
    }
    let mut fv = reduce_modalities(&per_modality, config.modality_reduction)?;
    fv.patient_id = row.id().to_string();
    Ok(fv)
}

/// Writes `features.csv` under `out_dir`. Patients that fail are logged and skipped; the summary
/// lists them so the caller can signal a partial run.
pub fn cmd_extract(
    manifest: &CohortManifest,
    weights_path: &Path,
    config: &RunConfig,
    out_dir: &Path,
) -> Result<ExtractSummary> {
    config.validate()?;
    if !weights_path.exists() {
        return Err(Error::WeightsMissing(weights_path.to_path_buf()));
    }
    let weights = load_weights(weights_path)?;
    let results: Vec<Result<FeatureVector>> =
        manifest.rows.par_iter().map(|row| extract_patient(row, &weights, config)).collect();

    let mut vectors = Vec::new();
    let mut failures = Vec::new();
    for (row, res) in manifest.rows.iter().zip(results) {
        match res {
            Ok(v) => vectors.push(v),
            Err(e) => {
                log::warn!("skipping {}: {e}", row.id());
                failures.push((row.id().to_string(), e.to_string()));
            }
        }
    }
    if vectors.is_empty() {
        return Err(Error::ManifestInvalid(format!("all {} patients failed extraction", manifest.len())));
    }
    std::fs::create_dir_all(out_dir)?;
    let features_path = out_dir.join("features.csv");
    FeatureMatrix::from_vectors(&vectors)?.write_csv(&features_path)?;
    Ok(ExtractSummary { features_path, n_extracted: vectors.len(), failures })
}
