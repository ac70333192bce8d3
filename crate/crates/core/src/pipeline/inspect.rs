use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{write_text, CohortManifest, RunConfig};
use crate::cnn::{forward, load_weights, N_MAPS};
use crate::error::{Error, Result};
use crate::gmm::{collect_samples, em_fit, GmmFit};
use crate::report::{central_slice_pgm, histogram_svg, Histogram};
use crate::volume::{load_mask, load_volume, prepare_cnn_input, RoiMask, Volume3D};

pub const HISTOGRAM_BINS: usize = 64;

/// In-memory inspection products for one activation map.
#[derive(Debug, Clone, PartialEq)]
pub struct InspectArtifacts {
    pub fit: GmmFit,
    pub histogram: Histogram,
    pub svg: String,
    pub pgm: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InspectOutcome {
    pub artifacts: InspectArtifacts,
    pub svg_path: PathBuf,
    pub pgm_path: PathBuf,
    pub json_path: PathBuf,
}

#[derive(Serialize)]
struct InspectJson<'a> {
    patient_id: &'a str,
    map_index: usize,
    n_samples: usize,
    fit: &'a GmmFit,
    histogram: &'a Histogram,
}

/// Histogram of the in-ROI values with the fitted mixture overlaid, plus the central slice.
pub fn inspect_activation(map: &Volume3D, mask: &RoiMask, k: usize, seed: u64, title: &str) -> Result<InspectArtifacts> {
    let samples = collect_samples(map, mask)?;
    let fit = em_fit(&samples, k, seed)?;
    let histogram = Histogram::new(&samples, HISTOGRAM_BINS);
    let svg = histogram_svg(title, &histogram, &fit);
    Ok(InspectArtifacts { fit, histogram, svg, pgm: central_slice_pgm(map) })
}

pub fn cmd_inspect(
    manifest: &CohortManifest,
    weights_path: &Path,
    patient_id: &str,
    map_index: usize,
    config: &RunConfig,
    out_dir: &Path,
) -> Result<InspectOutcome> {
    if map_index >= N_MAPS {
        return Err(Error::BadMapIndex(map_index));
    }
    let row = manifest.get(patient_id).ok_or_else(|| Error::UnknownPatient(patient_id.to_string()))?;
    if !weights_path.exists() {
        return Err(Error::WeightsMissing(weights_path.to_path_buf()));
    }
    let weights = load_weights(weights_path)?;
    let (mask, mask_spacing) = load_mask(&row.mask)?;
    let path = row.volume(config.inspect_modality).ok_or_else(|| {
        Error::InvalidConfig(format!("inspect_modality {} is not a manifest column", config.inspect_modality))
    })?;
    let volume = load_volume(path)?;
    let input = prepare_cnn_input(&volume, &mask, mask_spacing)?;
    let acts = forward(&input.volume, &input.mask, &weights)?;
    let (map, map_mask) = acts.map(map_index).ok_or(Error::BadMapIndex(map_index))?;
    let title = format!("{patient_id} {} map {map_index}", config.inspect_modality);
    let artifacts = inspect_activation(map, map_mask, config.k, config.seed, &title)?;

    let stem = format!("inspect_{patient_id}_map{map_index:02}");
    let svg_path = out_dir.join(format!("{stem}.svg"));
    let pgm_path = out_dir.join(format!("{stem}.pgm"));
    let json_path = out_dir.join(format!("{stem}.json"));
    write_text(&svg_path, &artifacts.svg)?;
    write_text(&pgm_path, &artifacts.pgm)?;
    let summary = InspectJson {
        patient_id,
        map_index,
        n_samples: artifacts.histogram.counts.iter().sum(),
        fit: &artifacts.fit,
        histogram: &artifacts.histogram,
    };
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    write_text(&json_path, json)?;
    Ok(InspectOutcome { artifacts, svg_path, pgm_path, json_path })
}
