//! Command-level orchestration: manifests, run configuration and the four pipeline stages.

mod classify;
mod config;
mod extract;
mod inspect;
mod manifest;
mod survive;

pub use classify::{cmd_classify, design_matrix, make_labels, ClassifyOutcome};
pub use config::{FeatureSet, RunConfig, Target};
pub use extract::{cmd_extract, extract_patient, ExtractSummary};
pub use inspect::{cmd_inspect, inspect_activation, InspectArtifacts, InspectOutcome, HISTOGRAM_BINS};
pub use manifest::{CohortManifest, ManifestRow, MANIFEST_COLUMNS};
pub use survive::{cmd_survive, SurvivalSummary, SurviveOutcome};

use std::path::Path;

use crate::error::Result;

pub(crate) fn write_text(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}
