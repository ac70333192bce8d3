//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use radiomics::classifier::{loocv_detailed, Dataset, HyperparamGrid};
use radiomics::cnn::{conv3d, forward, generate_test_weights, maxpool3d, ConvLayer, Padding, Tensor4};
use radiomics::gmm::{build_feature_vector, em_fit, em_fit_traced, FeatureMatrix};
use radiomics::pipeline::{cmd_classify, cmd_extract, cmd_survive, CohortManifest, FeatureSet, RunConfig, Target};
use radiomics::survival::{chi2_sf, impute_censored, km_estimate, logrank_test};
use radiomics::synthetic::{sphere_input64, write_cohort, CohortSpec, TextureFamily};
use radiomics::volume::{Modality, RoiMask, Volume3D};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(start: Instant, limit: Duration) -> Check {
    let t = start.elapsed();
    ensure!(t < limit, "took {:.1}s, limit {}s", t.as_secs_f64(), limit.as_secs());
    Ok(format!("{:.1}s", t.as_secs_f64()))
}

// 1 ----------------------------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
fn naive_conv(input: &[f64], c_in: usize, d: [usize; 3], w: &[f64], b: &[f64], c_out: usize, k: usize, same: bool) -> Vec<f64> {
    let od = if same { d } else { d.map(|n| n - k + 1) };
    let pad = if same { (k as i64 - 1) / 2 } else { 0 };
    let vox = d[0] * d[1] * d[2];
    let mut out = Vec::new();
    for o in 0..c_out {
        for z in 0..od[2] {
            for y in 0..od[1] {
                for x in 0..od[0] {
                    let mut s = b[o];
                    for c in 0..c_in {
                        for dz in 0..k {
                            for dy in 0..k {
                                for dx in 0..k {
                                    let p = [x + dx, y + dy, z + dz];
                                    let q: Vec<i64> = (0..3).map(|a| p[a] as i64 - pad).collect();
                                    if (0..3).any(|a| q[a] < 0 || q[a] >= d[a] as i64) {
                                        continue;
                                    }
                                    let src = (q[2] as usize * d[1] + q[1] as usize) * d[0] + q[0] as usize;
                                    s += w[(((o * c_in + c) * k + dz) * k + dy) * k + dx] * input[c * vox + src];
                                }
                            }
                        }
                    }
                    out.push(s);
                }
            }
        }
    }
    out
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let d = [rng.random_range(2..=8), rng.random_range(2..=8), rng.random_range(2..=8)];
        let (c_in, c_out) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let k = rng.random_range(1..=2);
        let same = case % 2 == 1;
        let x: Vec<f64> = (0..c_in * d[0] * d[1] * d[2]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..c_out * c_in * k * k * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..c_out).map(|_| rng.random_range(-1.0..1.0)).collect();
        let expected = naive_conv(&x, c_in, d, &w, &b, c_out, k, same);
        let got = conv3d(
            &Tensor4::new(c_in, d, x).unwrap(),
            &ConvLayer::new(c_out, c_in, k, w, b).unwrap(),
            1,
            if same { Padding::Same } else { Padding::Valid },
        )
        .map_err(|e| e.to_string())?;
        ensure!(got.data().len() == expected.len(), "case {case}: output size");
        for (g, e) in got.data().iter().zip(&expected) {
            let rel = (g - e).abs() / e.abs().max(1e-12);
            if (g - e).abs() > 1e-12 {
                worst = worst.max(rel);
            }
        }
    }
    ensure!(worst < 1e-5, "max relative error {worst:e}");

    for _ in 0..50 {
        let d = [2 * rng.random_range(1..=4), 2 * rng.random_range(1..=4), 2 * rng.random_range(1..=4)];
        let c = rng.random_range(1..=4);
        let t = Tensor4::new(c, d, (0..c * d[0] * d[1] * d[2]).map(|_| rng.random_range(-9.0..9.0)).collect()).unwrap();
        let pooled = maxpool3d(&t).map_err(|e| e.to_string())?;
        let mut i = 0;
        for ch in 0..c {
            for z in 0..d[2] / 2 {
                for y in 0..d[1] / 2 {
                    for x in 0..d[0] / 2 {
                        let m = (0..8)
                            .map(|j| t.at(ch, 2 * x + (j & 1), 2 * y + ((j >> 1) & 1), 2 * z + (j >> 2)))
                            .fold(f64::NEG_INFINITY, f64::max);
                        ensure!(pooled.data()[i] == m, "maxpool mismatch at {i}");
                        i += 1;
                    }
                }
            }
        }
    }
    let t = within(start, Duration::from_secs(10))?;
    Ok(format!("50 conv cases, max rel err {worst:.1e}; 50 pool cases exact; {t}"))
}

// 2 ----------------------------------------------------------------------------------------------

fn criterion_2() -> Check {
    let w = generate_test_weights(42);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut inputs = vec![sphere_input64(20.0, TextureFamily::Fine, 1).unwrap()];
    for _ in 0..2 {
        let v = Volume3D::from_fn([64; 3], [1.0; 3], Modality::T1CE, |_, _, _| rng.random_range(-255.0..255.0)).unwrap();
        let m = RoiMask::from_fn([64; 3], |_, _, _| rng.random_bool(0.3));
        inputs.push((v, m));
    }
    for (v, m) in &inputs {
        let acts = forward(v, m, &w).map_err(|e| e.to_string())?;
        ensure!(acts.len() == 21, "{} maps", acts.len());
        let dims: Vec<[usize; 3]> = acts.iter().map(|(map, _)| map.dims()).collect();
        ensure!(dims[0] == [64; 3], "map 0 dims {:?}", dims[0]);
        ensure!(dims[1..11].iter().all(|d| *d == [32; 3]), "block 1 dims");
        ensure!(dims[11..].iter().all(|d| *d == [16; 3]), "block 2 dims");
        let voxels: usize = acts.iter().map(|(map, _)| map.len()).sum();
        ensure!(voxels == 64usize.pow(3) + 10 * 32usize.pow(3) + 10 * 16usize.pow(3), "voxel total {voxels}");
        for (map, _) in acts.iter().skip(1) {
            ensure!(map.data().iter().all(|&x| x >= 0.0), "negative post-ReLU activation");
        }
    }
    Ok(format!("{} inputs: 1x64^3 + 10x32^3 + 10x16^3, post-ReLU >= 0", inputs.len()))
}

// 3 ----------------------------------------------------------------------------------------------

fn two_gaussians(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            if rng.random_bool(0.5) { z } else { 10.0 + z }
        })
        .collect()
}

fn criterion_3() -> Check {
    let start = Instant::now();
    let fit = em_fit(&two_gaussians(20_000, 3), 2, 3).map_err(|e| e.to_string())?;
    let [a, b] = [fit.components[0], fit.components[1]];
    ensure!((a.mu - 0.0).abs() <= 0.1 && (b.mu - 10.0).abs() <= 0.1, "means {} {}", a.mu, b.mu);
    ensure!((a.omega - 0.5).abs() <= 0.05 && (b.omega - 0.5).abs() <= 0.05, "weights {} {}", a.omega, b.omega);
    for seed in 0..100 {
        let (_, trace) = em_fit_traced(&two_gaussians(20_000, 1000 + seed), 2, seed).map_err(|e| e.to_string())?;
        for w in trace.windows(2) {
            ensure!(w[1] >= w[0], "seed {seed}: log-likelihood fell {} -> {}", w[0], w[1]);
        }
    }
    let t = within(start, Duration::from_secs(30))?;
    Ok(format!("mu=({:.4}, {:.4}) w=({:.4}, {:.4}); 100 monotone traces; {t}", a.mu, b.mu, a.omega, b.omega))
}

// 4 ----------------------------------------------------------------------------------------------

fn criterion_4() -> Check {
    let (v, m) = sphere_input64(18.0, TextureFamily::Coarse, 4).unwrap();
    let acts = forward(&v, &m, &generate_test_weights(42)).map_err(|e| e.to_string())?;
    let mut lens = Vec::new();
    for k in [1, 2, 3] {
        let fv = build_feature_vector(&acts, k, 0).map_err(|e| e.to_string())?;
        ensure!(fv.len() == 63 * k && fv.names.len() == 63 * k, "k={k}: {} values", fv.len());
        lens.push(fv.len());
    }
    ensure!(lens[1] == 126, "k=2 gives {}", lens[1]);
    Ok(format!("k=1,2,3 -> {lens:?}"))
}

// 5 ----------------------------------------------------------------------------------------------

fn criterion_5() -> Check {
    let km = km_estimate(&[(1.0, true), (2.0, true), (3.0, false), (4.0, true)]);
    let s: Vec<f64> = km.steps.iter().map(|s| s.survival).collect();
    ensure!(s == [0.75, 0.5, 0.0], "KM {s:?}");
    ensure!(km.median_survival == Some(2.0), "median {:?}", km.median_survival);
    let g = [(1.0, true), (3.0, false), (4.0, true), (7.0, true), (7.0, false)];
    let r = logrank_test(&g, &g).map_err(|e| e.to_string())?;
    ensure!(r.chi2 == 0.0 && r.p_value == 1.0 && r.hazard_ratio == Some(1.0), "duplicated groups {r:?}");
    // erfc(sqrt(x/2)) at 40 digits
    let p1 = chi2_sf(3.841);
    let p2 = chi2_sf(6.635);
    ensure!((p1 - 0.050).abs() <= 0.0005, "chi2_sf(3.841) = {p1}");
    ensure!((p2 - 0.010).abs() <= 0.0002, "chi2_sf(6.635) = {p2}");
    ensure!(((p1 - 0.05001368376395669907573615) / p1).abs() < 1e-10, "chi2_sf(3.841) off oracle");
    ensure!(((p2 - 0.009999419574042524969681197) / p2).abs() < 1e-10, "chi2_sf(6.635) off oracle");
    Ok(format!("KM {s:?} median 2; duplicated groups chi2=0 p=1 HR=1; sf(3.841)={p1:.6} sf(6.635)={p2:.6}"))
}

// 6 ----------------------------------------------------------------------------------------------

fn criterion_6() -> Check {
    let v = impute_censored(&[(10.0, true), (20.0, true), (30.0, true), (15.0, false)]).map_err(|e| e.to_string())?;
    ensure!(v[3] == 25.0, "imputed {}", v[3]);
    let late = impute_censored(&[(10.0, true), (20.0, true), (30.0, true), (40.0, false)]).map_err(|e| e.to_string())?;
    ensure!(late[3] == 40.0, "beyond-all-deaths imputed {}", late[3]);
    Ok("censored@15 -> 25; censored@40 keeps 40".into())
}

// 7 ----------------------------------------------------------------------------------------------

fn leakage_free(out: &radiomics::classifier::LoocvOutcome) -> bool {
    out.folds.iter().all(|f| !f.inner_train.contains(&f.held_out) && !f.validation.contains(&f.held_out))
}

fn criterion_7() -> Check {
    let grid = HyperparamGrid::default();
    let sep = Dataset::from_rows(
        (0..20).map(|i| vec![if i < 10 { i as f64 } else { 100.0 + i as f64 }, ((i * 7) % 3) as f64]).collect(),
        (0..20).map(|i| u8::from(i >= 10)).collect(),
    )
    .map_err(|e| e.to_string())?;
    let out = loocv_detailed(&sep, &grid, 0).map_err(|e| e.to_string())?;
    ensure!(out.report.auc == 1.0, "separable AUC {}", out.report.auc);
    ensure!(leakage_free(&out), "leakage on separable set");

    let mut aucs = Vec::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let x: Vec<Vec<f64>> = (0..100).map(|_| (0..5).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let mut y: Vec<u8> = (0..100).map(|i| (i % 2) as u8).collect();
        y.shuffle(&mut rng);
        let data = Dataset::from_rows(x, y).map_err(|e| e.to_string())?;
        let out = loocv_detailed(&data, &grid, seed).map_err(|e| e.to_string())?;
        ensure!(leakage_free(&out), "leakage with seed {seed}");
        aucs.push(out.report.auc);
    }
    let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
    let (lo, hi) = aucs.iter().fold((1.0f64, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    let outside: Vec<(usize, f64)> = aucs.iter().copied().enumerate().filter(|(_, a)| !(0.35..=0.65).contains(a)).collect();
    ensure!(outside.is_empty(), "shuffled AUC outside [0.35, 0.65] for seeds {outside:?} (mean {mean:.3})");
    Ok(format!("separable AUC 1.0; shuffled AUC range [{lo:.3}, {hi:.3}] mean {mean:.3} over 20 seeds; no leakage"))
}

// 8 ----------------------------------------------------------------------------------------------

fn run_pipeline(manifest: &Path, weights: &Path, out: &Path) -> Result<(), String> {
    let m = CohortManifest::read(manifest).map_err(|e| e.to_string())?;
    let cfg = RunConfig { output_dir: out.to_path_buf(), ..Default::default() };
    let s = cmd_extract(&m, weights, &cfg, out).map_err(|e| e.to_string())?;
    if s.is_partial() {
        return Err(format!("extraction failures: {:?}", s.failures));
    }
    let f = FeatureMatrix::read_csv(&s.features_path).map_err(|e| e.to_string())?;
    cmd_classify(&f, &m, Target::Survival, &cfg, out).map_err(|e| e.to_string())?;
    cmd_survive(&m, Some(&f), &cfg, out).map_err(|e| e.to_string())?;
    Ok(())
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

fn criterion_8() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let files = write_cohort(dir.path(), &CohortSpec { n_patients: 5, seed: 8, ..Default::default() }).map_err(|e| e.to_string())?;
    run_pipeline(&files.manifest, &files.weights, &dir.path().join("run1"))?;
    run_pipeline(&files.manifest, &files.weights, &dir.path().join("run2"))?;
    let a = snapshot(&dir.path().join("run1"));
    let b = snapshot(&dir.path().join("run2"));
    ensure!(a.keys().eq(b.keys()), "different file sets");
    let differing: Vec<&String> = a.iter().filter(|(k, v)| b[*k] != **v).map(|(k, _)| k).collect();
    ensure!(differing.is_empty(), "outputs differ: {differing:?}");
    let t = within(start, Duration::from_secs(300))?;
    Ok(format!("{} output files byte-identical across runs; {t}", a.len()))
}

// 9 ----------------------------------------------------------------------------------------------

fn criterion_9() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let files = write_cohort(dir.path(), &CohortSpec { n_patients: 40, seed: 9, ..Default::default() }).map_err(|e| e.to_string())?;
    let m = CohortManifest::read(&files.manifest).map_err(|e| e.to_string())?;
    let out = dir.path().join("out");
    let cfg = RunConfig { feature_sets: vec![FeatureSet::R], output_dir: out.clone(), ..Default::default() };
    let s = cmd_extract(&m, &files.weights, &cfg, &out).map_err(|e| e.to_string())?;
    ensure!(!s.is_partial(), "extraction failures: {:?}", s.failures);
    let f = FeatureMatrix::read_csv(&s.features_path).map_err(|e| e.to_string())?;
    let c = cmd_classify(&f, &m, Target::Survival, &cfg, &out).map_err(|e| e.to_string())?;
    let auc = c.reports[0].1.auc;
    let sv = cmd_survive(&m, Some(&f), &cfg, &out).map_err(|e| e.to_string())?;
    let p = sv.rows[0].p_value.ok_or("no log-rank test on predicted groups")?;
    ensure!(auc >= 0.8, "LOOCV AUC {auc:.3} < 0.8");
    ensure!(p < 0.05, "log-rank p {p:.3e} >= 0.05");
    Ok(format!("R features: LOOCV AUC {auc:.3}, log-rank p {p:.2e}, HR {:?}; {:.0}s", sv.rows[0].hr, start.elapsed().as_secs_f64()))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("convolution and pooling match naive oracles", criterion_1),
        ("forward pass shape contract", criterion_2),
        ("GMM parameter recovery and monotone EM", criterion_3),
        ("feature vector layout 63*k", criterion_4),
        ("Kaplan-Meier, log-rank and chi-square fixtures", criterion_5),
        ("censoring imputation rule", criterion_6),
        ("classifier sanity and LOOCV leakage", criterion_7),
        ("end-to-end determinism", criterion_8),
        ("texture signal propagates end to end", criterion_9),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match result {
            Ok(detail) => println!("criterion {}: PASS {name} ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name} ({why})", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
