//! Synthetic cohort through extract, classify and survive, as the CLI runs it.
//!
//! `cargo run --release --example end_to_end -- [n_patients] [out_dir]`

use std::path::PathBuf;

use radiomics::classifier::HyperparamGrid;
use radiomics::gmm::FeatureMatrix;
use radiomics::pipeline::{cmd_classify, cmd_extract, cmd_survive, CohortManifest, RunConfig, Target};
use radiomics::synthetic::{write_cohort, CohortSpec};

fn main() -> radiomics::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(12);
    let dir: PathBuf = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("radiomics_e2e"));

    let files = write_cohort(&dir, &CohortSpec { n_patients: n, ..Default::default() })?;
    let manifest = CohortManifest::read(&files.manifest)?;
    manifest.validate_files()?;
    let config = RunConfig {
        grid: HyperparamGrid { n_trees: vec![100, 300], min_leaf: vec![1, 3], mtry: None },
        output_dir: dir.join("out"),
        ..Default::default()
    };

    let summary = cmd_extract(&manifest, &files.weights, &config, &config.output_dir)?;
    println!("extracted {} patients -> {}", summary.n_extracted, summary.features_path.display());
    let features = FeatureMatrix::read_csv(&summary.features_path)?;

    let classified = cmd_classify(&features, &manifest, Target::Survival, &config, &config.output_dir)?;
    for (set, r) in &classified.reports {
        println!("{set:6} AUC {:.3}", r.auc);
    }
    let survived = cmd_survive(&manifest, Some(&features), &config, &config.output_dir)?;
    print!("{}", std::fs::read_to_string(&survived.table_path)?);
    Ok(())
}
