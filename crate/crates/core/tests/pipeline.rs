use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::Command;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use radiomics::classifier::{EvalReport, HyperparamGrid, PatientScore};
use radiomics::gmm::{collect_samples, em_fit, FeatureMatrix};
use radiomics::pipeline::{
    cmd_classify, cmd_extract, cmd_inspect, cmd_survive, design_matrix, inspect_activation, CohortManifest, FeatureSet,
    RunConfig, Target,
};
use radiomics::synthetic::{write_cohort, CohortSpec};
use radiomics::volume::{Modality, RoiMask, Volume3D};
use radiomics::Error;

fn thin_cohort(dir: &Path, n: usize) -> radiomics::synthetic::CohortFiles {
    let spec = CohortSpec { n_patients: n, dims: [32, 16, 12], radii_mm: [12.0, 4.0, 4.0], ..Default::default() };
    write_cohort(dir, &spec).unwrap()
}

fn quick_config(out: &Path) -> RunConfig {
    RunConfig {
        grid: HyperparamGrid { n_trees: vec![20, 40], min_leaf: vec![1, 3], mtry: None },
        output_dir: out.to_path_buf(),
        ..Default::default()
    }
}

/// Manifest with placeholder image paths; only the tabular columns matter for classify/survive.
fn tabular_manifest(dir: &Path, rows: &[(f64, bool, [f64; 3])]) -> CohortManifest {
    let mut s = String::from("patient_id,t1wi,t1ce,t2wi,flair,mask,age,gender,os_months,event,macrophage_m1,neutrophils,tfh\n");
    for (i, (t, e, imm)) in rows.iter().enumerate() {
        let _ = writeln!(s, "P{i:02},a,b,c,d,m,{},{},{t},{},{},{},{}", 40 + i % 30, i % 2, u8::from(*e), imm[0], imm[1], imm[2]);
    }
    let p = dir.join("manifest.csv");
    fs::write(&p, s).unwrap();
    CohortManifest::read(p).unwrap()
}

fn planted_features(n: usize, seed: u64) -> (FeatureMatrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let x0: Vec<f64> = order.iter().map(|&o| o as f64).collect();
    let rows = (0..n).map(|i| (format!("P{i:02}"), vec![x0[i], ((i * 7) % 5) as f64, ((i * 3) % 11) as f64])).collect();
    (FeatureMatrix { names: vec!["f000_mu1".into(), "f000_s1".into(), "f000_w1".into()], rows }, x0)
}

fn csv_round_trips(path: &Path) -> bool {
    let bytes = fs::read(path).unwrap();
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(bytes.as_slice());
    let mut w = csv::Writer::from_writer(Vec::new());
    for rec in rdr.records() {
        w.write_record(&rec.unwrap()).unwrap();
    }
    w.into_inner().unwrap() == bytes
}

#[test]
fn extract_shape_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let files = thin_cohort(dir.path(), 3);
    let manifest = CohortManifest::read(&files.manifest).unwrap();
    manifest.validate_files().unwrap();
    let cfg = quick_config(&dir.path().join("a"));
    let s1 = cmd_extract(&manifest, &files.weights, &cfg, &dir.path().join("a")).unwrap();
    let s2 = cmd_extract(&manifest, &files.weights, &cfg, &dir.path().join("b")).unwrap();
    assert!(!s1.is_partial());
    let m = FeatureMatrix::read_csv(&s1.features_path).unwrap();
    assert_eq!(m.rows.len(), 3);
    assert_eq!(m.names.len(), 126);
    assert_eq!(fs::read(&s1.features_path).unwrap(), fs::read(&s2.features_path).unwrap());
    assert!(csv_round_trips(&s1.features_path));

    let err = cmd_extract(&manifest, &dir.path().join("nope.bin"), &cfg, dir.path()).unwrap_err();
    assert!(matches!(err, Error::WeightsMissing(_)));
}

#[test]
fn cli_missing_mask_is_partial_failure() {
    let dir = tempfile::tempdir().unwrap();
    let files = thin_cohort(dir.path(), 2);
    fs::remove_file(dir.path().join("volumes/P002_mask.vol.raw")).unwrap();
    let out = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_radiomics"))
        .args(["extract", "--manifest"])
        .arg(&files.manifest)
        .arg("--weights")
        .arg(&files.weights)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2), "{}", String::from_utf8_lossy(&status.stderr));
    let m = FeatureMatrix::read_csv(out.join("features.csv")).unwrap();
    assert_eq!(m.rows.iter().map(|r| r.0.as_str()).collect::<Vec<_>>(), ["P001"]);
}

#[test]
fn cli_fatal_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let files = thin_cohort(dir.path(), 1);
    let run = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_radiomics")).args(args).arg("--out").arg(dir.path().join("o")).output().unwrap()
    };
    let manifest = files.manifest.to_str().unwrap();
    let weights = files.weights.to_str().unwrap();
    let bad_map = run(&["inspect", "--manifest", manifest, "--weights", weights, "--patient", "P001", "--map", "21"]);
    assert_eq!(bad_map.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_map.stderr).contains("map index 21"));
    let no_weights = run(&["extract", "--manifest", manifest, "--weights", "/nonexistent.bin"]);
    assert_eq!(no_weights.status.code(), Some(1));
}

#[test]
fn classify_recovers_planted_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let n = 24;
    let (features, x0) = planted_features(n, 1);
    // survival time increases with feature 0, so the median split is a threshold on it
    let rows: Vec<(f64, bool, [f64; 3])> = x0.iter().map(|&x| (5.0 + 2.0 * x, true, [0.1, 0.2, 0.05])).collect();
    let manifest = tabular_manifest(dir.path(), &rows);
    let cfg = RunConfig { feature_sets: vec![FeatureSet::R], ..quick_config(dir.path()) };
    let out = cmd_classify(&features, &manifest, Target::Survival, &cfg, dir.path()).unwrap();
    assert!(out.reports[0].1.auc >= 0.95, "auc {}", out.reports[0].1.auc);
    assert!(dir.path().join("classify_survival_R.json").exists());
    assert!(csv_round_trips(&dir.path().join("roc_survival_R.csv")));
}

#[test]
fn classify_emits_every_feature_set() {
    let dir = tempfile::tempdir().unwrap();
    let (features, x0) = planted_features(16, 2);
    let rows: Vec<(f64, bool, [f64; 3])> =
        x0.iter().enumerate().map(|(i, &x)| (3.0 + x, i % 4 != 0, [0.01 * i as f64, 0.02, 0.3 - 0.01 * i as f64])).collect();
    let manifest = tabular_manifest(dir.path(), &rows);
    let out = cmd_classify(&features, &manifest, Target::Survival, &quick_config(dir.path()), dir.path()).unwrap();
    let labels: Vec<String> = out.reports.iter().map(|(s, _)| s.to_string()).collect();
    assert_eq!(labels, ["R", "C", "I", "I+C", "R+C", "R+I", "R+C+I"]);
    let summary = fs::read_to_string(&out.summary_path).unwrap();
    assert_eq!(summary.lines().count(), 8);
    assert!(csv_round_trips(&out.summary_path));

    let rci: FeatureSet = "R+C+I".parse().unwrap();
    let (names, m) = design_matrix(&features, &manifest, rci, Target::Survival).unwrap();
    assert_eq!(names.len(), features.names.len() + 2 + 3);
    assert!(m.iter().all(|r| r.len() == names.len()));
    let (names, _) = design_matrix(&features, &manifest, FeatureSet::I, Target::Tfh).unwrap();
    assert_eq!(names, ["macrophage_m1", "neutrophils"]);
}

#[test]
fn classify_shuffled_labels_is_near_chance() {
    let dir = tempfile::tempdir().unwrap();
    let mut aucs = Vec::new();
    for seed in 0..5 {
        let (features, _) = planted_features(30, 100 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut markers: Vec<f64> = (0..30).map(|i| i as f64 / 100.0).collect();
        markers.shuffle(&mut rng);
        let rows: Vec<(f64, bool, [f64; 3])> = markers.iter().map(|&m| (10.0, true, [m, 0.1, 0.1])).collect();
        let manifest = tabular_manifest(dir.path(), &rows);
        let cfg = RunConfig { feature_sets: vec![FeatureSet::R], seed, ..quick_config(dir.path()) };
        aucs.push(cmd_classify(&features, &manifest, Target::M1, &cfg, dir.path()).unwrap().reports[0].1.auc);
    }
    let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
    assert!((0.3..=0.7).contains(&mean), "{aucs:?}");
}

#[test]
fn classify_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (features, _) = planted_features(6, 3);
    let flat = tabular_manifest(dir.path(), &[(10.0, true, [0.2, 0.2, 0.2]); 6]);
    let err = cmd_classify(&features, &flat, Target::Neutrophils, &quick_config(dir.path()), dir.path()).unwrap_err();
    assert!(matches!(err, Error::DegenerateLabels(_)));
    assert!(matches!("cd8".parse::<Target>(), Err(Error::MissingColumn(_))));
    let short = tabular_manifest(dir.path(), &[(10.0, true, [0.2, 0.2, 0.2]); 3]);
    let err = cmd_classify(&features, &short, Target::Survival, &quick_config(dir.path()), dir.path()).unwrap_err();
    assert!(matches!(err, Error::UnknownPatient(_)));
}

fn write_survival_report(out: &Path, scores: &[(f64, u8)]) {
    let ps = scores
        .iter()
        .enumerate()
        .map(|(i, &(score, label))| PatientScore { id: format!("P{i:02}"), score, label })
        .collect();
    fs::create_dir_all(out).unwrap();
    fs::write(out.join("classify_survival_R.json"), EvalReport::from_scores(ps).unwrap().to_json().unwrap()).unwrap();
}

#[test]
fn survive_identical_groups_give_p_one() {
    let dir = tempfile::tempdir().unwrap();
    let times = [4.0, 9.0, 15.0, 20.0];
    let rows: Vec<(f64, bool, [f64; 3])> = times.iter().chain(&times).map(|&t| (t, t != 15.0, [0.1; 3])).collect();
    let manifest = tabular_manifest(dir.path(), &rows);
    write_survival_report(dir.path(), &[(0.1, 0), (0.2, 1), (0.3, 0), (0.4, 1), (0.6, 0), (0.7, 1), (0.8, 0), (0.9, 1)]);
    let cfg = RunConfig { feature_sets: vec![FeatureSet::R], ..quick_config(dir.path()) };
    let out = cmd_survive(&manifest, None, &cfg, dir.path()).unwrap();
    let r = &out.rows[0];
    assert_eq!(r.p_value, Some(1.0));
    assert_eq!(r.hr, Some(1.0));
    assert_eq!((r.n_short, r.n_long), (4, 4));
    assert!(csv_round_trips(&out.table_path));
    assert!(dir.path().join("km_R.svg").exists());
    assert!(csv_round_trips(&dir.path().join("km_R_short.csv")));
}

#[test]
fn survive_separated_groups_are_significant() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<(f64, bool, [f64; 3])> = (0..20).map(|i| (if i < 10 { 2.0 + i as f64 } else { 30.0 + i as f64 }, true, [0.1; 3])).collect();
    let manifest = tabular_manifest(dir.path(), &rows);
    let scores: Vec<(f64, u8)> = (0..20).map(|i| if i < 10 { (0.2, 0) } else { (0.8, 1) }).collect();
    write_survival_report(dir.path(), &scores);
    let cfg = RunConfig { feature_sets: vec![FeatureSet::R], ..quick_config(dir.path()) };
    let r = &cmd_survive(&manifest, None, &cfg, dir.path()).unwrap().rows[0];
    assert!(r.p_value.unwrap() < 0.05);
    assert!(r.hr.unwrap() > 1.0);
    assert!(r.median_short.unwrap() < r.median_long.unwrap());
}

#[test]
fn survive_needs_reports_or_features() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = tabular_manifest(dir.path(), &[(10.0, true, [0.1; 3]), (20.0, true, [0.1; 3])]);
    let err = cmd_survive(&manifest, None, &quick_config(dir.path()), dir.path()).unwrap_err();
    assert!(matches!(err, Error::MissingFile(_)));
}

#[test]
fn inspect_bounds_and_unknown_patient() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = tabular_manifest(dir.path(), &[(10.0, true, [0.1; 3])]);
    let cfg = quick_config(dir.path());
    let w = dir.path().join("w.bin");
    assert!(matches!(cmd_inspect(&manifest, &w, "P00", 21, &cfg, dir.path()), Err(Error::BadMapIndex(21))));
    assert!(matches!(cmd_inspect(&manifest, &w, "P99", 0, &cfg, dir.path()), Err(Error::UnknownPatient(_))));
}

#[test]
fn inspect_constant_map_draws_one_bar() {
    let map = Volume3D::filled([8; 3], [1.0; 3], 3.5, Modality::DERIVED).unwrap();
    let a = inspect_activation(&map, &RoiMask::full([8; 3]), 2, 0, "constant").unwrap();
    assert_eq!(a.histogram.counts.iter().filter(|&&c| c > 0).count(), 1);
    assert_eq!(a.svg.matches("<rect x=").count(), 1);
    assert!(a.fit.components.iter().all(|c| c.mu == 3.5));
}

#[test]
fn inspect_bimodal_overlay_matches_fit() {
    let map = Volume3D::from_fn([16; 3], [1.0; 3], Modality::DERIVED, |x, y, z| {
        let jitter = ((x * 7 + y * 13 + z * 29) % 17) as f64 / 17.0 - 0.5;
        if x < 8 { 20.0 + 2.0 * jitter } else { 60.0 + 2.0 * jitter }
    })
    .unwrap();
    let mask = RoiMask::full([16; 3]);
    let a = inspect_activation(&map, &mask, 2, 1, "bimodal").unwrap();
    assert_eq!(a.fit, em_fit(&collect_samples(&map, &mask).unwrap(), 2, 1).unwrap());
    assert!((a.fit.components[0].mu - 20.0).abs() < 0.5 && (a.fit.components[1].mu - 60.0).abs() < 0.5);
    // the overlay density has exactly two local maxima on a fine grid
    let ys: Vec<f64> = (0..=800).map(|i| a.fit.density(10.0 + 60.0 * i as f64 / 800.0)).collect();
    let peaks = ys.windows(3).filter(|w| w[1] > w[0] && w[1] > w[2]).count();
    assert_eq!(peaks, 2);
    assert_eq!(a.histogram.counts.len(), 64);
    assert!(a.pgm.starts_with(b"P5\n16 16\n255\n"));
}
