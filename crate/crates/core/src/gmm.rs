//! One-dimensional Gaussian mixtures fitted by expectation maximization to in-ROI activation
//! samples, and the per-patient deep radiomic feature vector built from them.
//!
//! Each activation map contributes `[μ1, σ²1, ω1, …, μk, σ²k, ωk]` with components sorted by
//! ascending mean, so 21 maps and `k = 2` give 126 features.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cnn::ActivationSet;
use crate::error::{Error, Result};
use crate::volume::{Modality, RoiMask, Volume3D};

pub const MAX_ITERATIONS: usize = 500;
pub const TOLERANCE: f64 = 1e-8;
/// Weight given to surplus components when the data has fewer distinct values than `k`.
pub const SURPLUS_WEIGHT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub mu: f64,
    pub sigma2: f64,
    pub omega: f64,
}

impl GmmComponent {
    pub fn density(&self, x: f64) -> f64 {
        let d = x - self.mu;
        self.omega * (-0.5 * d * d / self.sigma2).exp() / (2.0 * PI * self.sigma2).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub components: Vec<GmmComponent>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl GmmFit {
    pub fn density(&self, x: f64) -> f64 {
        self.components.iter().map(|c| c.density(x)).sum()
    }
}

/// Summation by recursive halving; fixes the association order independent of thread layout.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 16 {
        return values.iter().sum();
    }
    let (a, b) = values.split_at(values.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn mean_and_variance(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = pairwise_sum(samples) / n;
    let sq: Vec<f64> = samples.iter().map(|&x| (x - mean) * (x - mean)).collect();
    (mean, pairwise_sum(&sq) / n)
}

/// Linear-interpolated quantile of sorted data at probability `q`.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let t = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * t
}

/// `max(1e-6 · range², 1e-12)`
pub fn variance_floor(min: f64, max: f64) -> f64 {
    let range = max - min;
    (1e-6 * range * range).max(1e-12)
}

fn sort_components(components: &mut [GmmComponent]) {
    components.sort_by(|a, b| a.mu.total_cmp(&b.mu).then(b.omega.total_cmp(&a.omega)));
}

/// In-ROI activation values of one map.
pub fn collect_samples(map: &Volume3D, mask: &RoiMask) -> Result<Vec<f64>> {
    if map.dims() != mask.dims() {
        return Err(Error::DimMismatch { expected: map.dims().to_vec(), actual: mask.dims().to_vec() });
    }
    let samples: Vec<f64> =
        map.data().iter().zip(mask.voxels()).filter(|(_, &m)| m == 1).map(|(&v, _)| v).collect();
    if samples.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(samples)
}

/// Quantile initialisation: component j starts at the (j − 0.5)/k quantile with the sample
/// variance and uniform weight. Coinciding starting means are separated by a seeded jitter.
pub fn quantile_init(samples: &[f64], k: usize, seed: u64) -> Result<Vec<GmmComponent>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if k == 0 {
        return Err(Error::InvalidK(k));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let floor = variance_floor(sorted[0], sorted[sorted.len() - 1]);
    let (_, var) = mean_and_variance(samples);
    let var = var.max(floor);
    let mut init: Vec<GmmComponent> = (1..=k)
        .map(|j| GmmComponent {
            mu: quantile_sorted(&sorted, (j as f64 - 0.5) / k as f64),
            sigma2: var,
            omega: 1.0 / k as f64,
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = 1e-3 * var.sqrt();
    for j in 1..k {
        if init[..j].iter().any(|c| c.mu == init[j].mu) {
            init[j].mu += jitter * rng.random_range(0.5..1.5) * j as f64;
        }
    }
    Ok(init)
}

/// Responsibilities laid out component-major (`resp[j * n + i]`) plus the data log-likelihood.
fn e_step(samples: &[f64], comps: &[GmmComponent], resp: &mut [f64], ll_terms: &mut [f64]) -> f64 {
    let n = samples.len();
    let k = comps.len();
    let consts: Vec<(f64, f64, f64)> = comps
        .iter()
        .map(|c| (c.omega.ln() - 0.5 * (2.0 * PI * c.sigma2).ln(), c.mu, 0.5 / c.sigma2))
        .collect();
    let mut lp = vec![0.0; k];
    for (i, &x) in samples.iter().enumerate() {
        let mut m = f64::NEG_INFINITY;
        for (j, &(c0, mu, inv2)) in consts.iter().enumerate() {
            let d = x - mu;
            lp[j] = c0 - d * d * inv2;
            m = m.max(lp[j]);
        }
        let mut s = 0.0;
        for v in lp.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for (j, v) in lp.iter().enumerate() {
            resp[j * n + i] = v / s;
        }
        ll_terms[i] = m + s.ln();
    }
    pairwise_sum(ll_terms)
}

fn m_step(samples: &[f64], resp: &[f64], prev: &[GmmComponent], floor: f64, scratch: &mut [f64]) -> Vec<GmmComponent> {
    let n = samples.len();
    let mut comps: Vec<GmmComponent> = prev
        .iter()
        .enumerate()
        .map(|(j, old)| {
            let r = &resp[j * n..(j + 1) * n];
            let nk = pairwise_sum(r);
            if !(nk > 0.0) || !nk.is_finite() {
                return GmmComponent { omega: 0.0, ..*old };
            }
            for ((s, &ri), &x) in scratch.iter_mut().zip(r).zip(samples) {
                *s = ri * x;
            }
            let mu = pairwise_sum(scratch) / nk;
            for ((s, &ri), &x) in scratch.iter_mut().zip(r).zip(samples) {
                *s = ri * (x - mu) * (x - mu);
            }
            let sigma2 = (pairwise_sum(scratch) / nk).max(floor);
            GmmComponent { mu, sigma2, omega: nk / n as f64 }
        })
        .collect();
    for c in comps.iter_mut().filter(|c| c.omega == 0.0) {
        c.omega = f64::MIN_POSITIVE;
    }
    let total: f64 = comps.iter().map(|c| c.omega).sum();
    comps.iter_mut().for_each(|c| c.omega /= total);
    comps
}

/// EM from an explicit starting point. Returns the fit and the log-likelihood after the
/// initial E-step and after every iteration.
pub fn em_from_init(samples: &[f64], init: &[GmmComponent]) -> Result<(GmmFit, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if init.is_empty() {
        return Err(Error::InvalidK(0));
    }
    let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let floor = variance_floor(lo, hi);
    let n = samples.len();
    let mut comps = init.to_vec();
    sort_components(&mut comps);
    for c in comps.iter_mut() {
        c.sigma2 = c.sigma2.max(floor);
    }

    let mut resp = vec![0.0; n * comps.len()];
    let mut scratch = vec![0.0; n];
    let mut ll = e_step(samples, &comps, &mut resp, &mut scratch);
    let mut trace = vec![ll];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let updated = m_step(samples, &resp, &comps, floor, &mut scratch);
        let next = e_step(samples, &updated, &mut resp, &mut scratch);
        if next < ll {
            // Only rounding can lower the likelihood here; keep the better parameters.
            iterations -= 1;
            converged = true;
            break;
        }
        comps = updated;
        trace.push(next);
        let gain = next - ll;
        ll = next;
        if gain < TOLERANCE {
            converged = true;
            break;
        }
    }
    sort_components(&mut comps);
    Ok((GmmFit { components: comps, log_likelihood: ll, iterations, converged }, trace))
}

/// Like [`em_fit`], also returning the log-likelihood trace.
pub fn em_fit_traced(samples: &[f64], k: usize, seed: u64) -> Result<(GmmFit, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if k == 0 {
        return Err(Error::InvalidK(k));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let distinct = sorted.len();
    if distinct >= k {
        return em_from_init(samples, &quantile_init(samples, k, seed)?);
    }

    let (mut fit, trace) = em_from_init(samples, &quantile_init(samples, distinct, seed)?)?;
    let floor = variance_floor(sorted[0], sorted[distinct - 1]);
    let max = sorted[distinct - 1];
    fit.components.extend((distinct..k).map(|_| GmmComponent { mu: max, sigma2: floor, omega: SURPLUS_WEIGHT }));
    let total: f64 = fit.components.iter().map(|c| c.omega).sum();
    fit.components.iter_mut().for_each(|c| c.omega /= total);
    sort_components(&mut fit.components);
    Ok((fit, trace))
}

/// Fits a k-component 1-D mixture by EM, stopping when the log-likelihood gain drops below
/// 1e-8 or after 500 iterations.
pub fn em_fit(samples: &[f64], k: usize, seed: u64) -> Result<GmmFit> {
    em_fit_traced(samples, k, seed).map(|(fit, _)| fit)
}

// ---------------------------------------------------------------------------
// Feature vectors

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModalityReduction {
    #[default]
    Mean,
    Concat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub patient_id: String,
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub modality: Option<Modality>,
    pub reduction: ModalityReduction,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Column names `fMMM_mu{j}`, `fMMM_s{j}`, `fMMM_w{j}` in map-major order.
pub fn feature_names(n_maps: usize, k: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(3 * k * n_maps);
    for m in 0..n_maps {
        for j in 1..=k {
            names.push(format!("f{m:03}_mu{j}"));
            names.push(format!("f{m:03}_s{j}"));
            names.push(format!("f{m:03}_w{j}"));
        }
    }
    names
}

/// Fits every activation map and lays out the sorted component triples map by map.
pub fn build_feature_vector(acts: &ActivationSet, k: usize, seed: u64) -> Result<FeatureVector> {
    if k == 0 {
        return Err(Error::InvalidK(k));
    }
    let fits: Vec<GmmFit> = (0..acts.len())
        .into_par_iter()
        .map(|i| {
            let (map, mask) = acts.map(i).expect("index below len");
            let samples = collect_samples(map, mask).map_err(|e| match e {
                Error::EmptyMask => Error::EmptySamples,
                other => other,
            })?;
            em_fit(&samples, k, seed)
        })
        .collect::<Result<_>>()?;
    let values = fits
        .iter()
        .flat_map(|f| f.components.iter().flat_map(|c| [c.mu, c.sigma2, c.omega]))
        .collect();
    Ok(FeatureVector {
        patient_id: String::new(),
        names: feature_names(acts.len(), k),
        values,
        modality: Some(acts.input_map.modality()),
        reduction: ModalityReduction::Mean,
    })
}

/// Combines per-modality vectors: element-wise mean, or concatenation with modality-prefixed names.
pub fn reduce_modalities(vectors: &[FeatureVector], mode: ModalityReduction) -> Result<FeatureVector> {
    let first = vectors.first().ok_or(Error::EmptySamples)?;
    for v in vectors {
        if v.len() != first.len() {
            return Err(Error::LengthMismatch(first.len(), v.len()));
        }
    }
    let (names, values) = match mode {
        ModalityReduction::Mean => {
            let n = vectors.len() as f64;
            let values =
                (0..first.len()).map(|i| vectors.iter().map(|v| v.values[i]).sum::<f64>() / n).collect();
            (first.names.clone(), values)
        }
        ModalityReduction::Concat => {
            let mut names = Vec::new();
            let mut values = Vec::new();
            for (idx, v) in vectors.iter().enumerate() {
                let tag = v.modality.map_or_else(|| format!("m{idx}"), |m| m.as_str().to_ascii_lowercase());
                names.extend(v.names.iter().map(|n| format!("{tag}_{n}")));
                values.extend_from_slice(&v.values);
            }
            (names, values)
        }
    };
    Ok(FeatureVector {
        patient_id: first.patient_id.clone(),
        names,
        values,
        modality: if vectors.len() == 1 { first.modality } else { None },
        reduction: mode,
    })
}

// ---------------------------------------------------------------------------
// Feature matrix CSV

/// One row per patient: `patient_id,<feature names...>`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl FeatureMatrix {
    pub fn from_vectors(vectors: &[FeatureVector]) -> Result<Self> {
        let names = vectors.first().map(|v| v.names.clone()).unwrap_or_default();
        for v in vectors {
            if v.len() != names.len() {
                return Err(Error::LengthMismatch(names.len(), v.len()));
            }
        }
        Ok(Self { names, rows: vectors.iter().map(|v| (v.patient_id.clone(), v.values.clone())).collect() })
    }

    pub fn row(&self, patient_id: &str) -> Option<&[f64]> {
        self.rows.iter().find(|(id, _)| id == patient_id).map(|(_, v)| v.as_slice())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        let mut header = vec!["patient_id".to_string()];
        header.extend(self.names.iter().cloned());
        csv.write_record(&header)?;
        for (id, values) in &self.rows {
            let mut rec = vec![id.clone()];
            rec.extend(values.iter().map(|v| v.to_string()));
            csv.write_record(&rec)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let mut rdr = csv::Reader::from_path(path)?;
        let header = rdr.headers()?.clone();
        if header.get(0) != Some("patient_id") {
            return Err(Error::MissingColumn("patient_id".into()));
        }
        let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let id = rec.get(0).unwrap_or_default().to_string();
            let values = rec
                .iter()
                .skip(1)
                .map(|s| s.parse::<f64>().map_err(|e| Error::ManifestInvalid(format!("feature value '{s}': {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if values.len() != names.len() {
                return Err(Error::LengthMismatch(names.len(), values.len()));
            }
            rows.push((id, values));
        }
        Ok(Self { names, rows })
    }
}
