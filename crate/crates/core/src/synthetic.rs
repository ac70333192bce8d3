//! Seeded synthetic cohorts for demos and end-to-end checks.
//!
//! Every patient gets an ellipsoidal tumour whose texture comes from one of two families with
//! matched first-order statistics but different spatial correlation: white noise (`Fine`) or
//! box-blurred noise rescaled to the same variance (`Coarse`). Survival is planted on the family:
//! fine-textured tumours die early, coarse-textured ones late (and are the only censored ones).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cnn::{generate_test_weights, save_weights};
use crate::error::Result;
use crate::volume::{save_mask, save_volume, Modality, RoiMask, Volume3D};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextureFamily {
    Fine,
    Coarse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortSpec {
    pub n_patients: usize,
    pub seed: u64,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Tumour semi-axes in millimetres.
    pub radii_mm: [f64; 3],
    pub weights_seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            n_patients: 10,
            seed: 7,
            dims: [40, 36, 24],
            spacing: [1.0, 1.0, 1.5],
            radii_mm: [13.0, 7.0, 6.0],
            weights_seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPatient {
    pub id: String,
    pub family: TextureFamily,
    pub os_months: f64,
    pub event: bool,
    pub age: f64,
    pub gender: u8,
    pub immune: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct CohortFiles {
    pub manifest: PathBuf,
    pub weights: PathBuf,
    pub patients: Vec<SyntheticPatient>,
}

fn noise_field(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn box_blur(data: &[f64], dims: [usize; 3]) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    let mut cur = data.to_vec();
    for axis in 0..3 {
        let mut next = vec![0.0; cur.len()];
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let p = [x, y, z];
                    let mut s = 0.0;
                    let mut c = 0.0;
                    for d in -1i64..=1 {
                        let q = p[axis] as i64 + d;
                        if q < 0 || q >= dims[axis] as i64 {
                            continue;
                        }
                        let mut r = p;
                        r[axis] = q as usize;
                        s += cur[(r[2] * ny + r[1]) * nx + r[0]];
                        c += 1.0;
                    }
                    next[(z * ny + y) * nx + x] = s / c;
                }
            }
        }
        cur = next;
    }
    cur
}

fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt().max(1e-12);
    v.iter_mut().for_each(|x| *x = (*x - mean) / sd);
}

/// Zero-mean, unit-variance texture of the given family.
pub fn texture(dims: [usize; 3], family: TextureFamily, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = noise_field(dims.iter().product(), &mut rng);
    if family == TextureFamily::Coarse {
        t = box_blur(&box_blur(&t, dims), dims);
    }
    standardize(&mut t);
    t
}

/// Centred ellipsoid with the given semi-axes in millimetres.
pub fn ellipsoid_mask(dims: [usize; 3], spacing: [f64; 3], radii_mm: [f64; 3]) -> RoiMask {
    let c = [0, 1, 2].map(|a| (dims[a] as f64 - 1.0) / 2.0 * spacing[a]);
    RoiMask::from_fn(dims, |x, y, z| {
        let p = [x, y, z];
        (0..3).map(|a| ((p[a] as f64 * spacing[a] - c[a]) / radii_mm[a]).powi(2)).sum::<f64>() <= 1.0
    })
}

/// A tumour volume: textured foreground inside `mask`, dimmer white-noise background.
pub fn textured_volume(
    dims: [usize; 3],
    spacing: [f64; 3],
    mask: &RoiMask,
    family: TextureFamily,
    modality: Modality,
    seed: u64,
) -> Result<Volume3D> {
    let (gain, offset) = match modality {
        Modality::T1WI => (22.0, 110.0),
        Modality::T1CE => (30.0, 150.0),
        Modality::T2WI => (26.0, 170.0),
        Modality::FLAIR | Modality::DERIVED => (24.0, 140.0),
    };
    let tex = texture(dims, family, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let data = tex
        .iter()
        .zip(mask.voxels())
        .map(|(&t, &m)| {
            if m == 1 {
                offset + gain * t
            } else {
                40.0 + 5.0 * rng.sample::<f64, _>(StandardNormal)
            }
        })
        .collect();
    Volume3D::new(dims, spacing, data, modality)
}

fn patient(i: usize, rng: &mut ChaCha8Rng) -> SyntheticPatient {
    let family = if i % 2 == 0 { TextureFamily::Fine } else { TextureFamily::Coarse };
    let (os_months, event) = match family {
        TextureFamily::Fine => (rng.random_range(3.0..13.0), true),
        TextureFamily::Coarse => {
            let t: f64 = rng.random_range(16.0..50.0);
            if rng.random_bool(0.25) {
                (t * rng.random_range(0.8..1.0), false)
            } else {
                (t, true)
            }
        }
    };
    let round2 = |x: f64| (x * 100.0).round() / 100.0;
    SyntheticPatient {
        id: format!("P{:03}", i + 1),
        family,
        os_months: round2(os_months),
        event,
        age: round2(rng.random_range(30.0..75.0)),
        gender: u8::from(rng.random_bool(0.5)),
        immune: [0; 3].map(|_| round2(rng.random_range(0.0..0.3))),
    }
}

/// Patient metadata only (no files), in the same order and with the same draws as [`write_cohort`].
pub fn cohort_patients(spec: &CohortSpec) -> Vec<SyntheticPatient> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.n_patients).map(|i| patient(i, &mut rng)).collect()
}

/// Writes volumes, masks, `manifest.csv` and `weights.bin` under `dir`.
pub fn write_cohort(dir: impl AsRef<Path>, spec: &CohortSpec) -> Result<CohortFiles> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("volumes"))?;
    let patients = cohort_patients(spec);
    let mask = ellipsoid_mask(spec.dims, spec.spacing, spec.radii_mm);

    let mut manifest =
        String::from("patient_id,t1wi,t1ce,t2wi,flair,mask,age,gender,os_months,event,macrophage_m1,neutrophils,tfh\n");
    for (i, p) in patients.iter().enumerate() {
        let mut paths = Vec::new();
        for (m_idx, modality) in Modality::MRI.into_iter().enumerate() {
            let seed = spec.seed.wrapping_mul(1_000_003).wrapping_add((i * 4 + m_idx) as u64);
            let v = textured_volume(spec.dims, spec.spacing, &mask, p.family, modality, seed)?;
            let rel = format!("volumes/{}_{}", p.id, modality.as_str().to_ascii_lowercase());
            save_volume(&v, dir.join(&rel))?;
            paths.push(format!("{rel}.vol.json"));
        }
        let mask_rel = format!("volumes/{}_mask", p.id);
        save_mask(&mask, spec.spacing, dir.join(&mask_rel))?;
        let _ = writeln!(
            manifest,
            "{},{},{},{},{},{}.vol.json,{},{},{},{},{},{},{}",
            p.id,
            paths[0],
            paths[1],
            paths[2],
            paths[3],
            mask_rel,
            p.age,
            p.gender,
            p.os_months,
            u8::from(p.event),
            p.immune[0],
            p.immune[1],
            p.immune[2]
        );
    }
    let manifest_path = dir.join("manifest.csv");
    fs::write(&manifest_path, manifest)?;
    let weights_path = dir.join("weights.bin");
    save_weights(&generate_test_weights(spec.weights_seed), &weights_path)?;
    Ok(CohortFiles { manifest: manifest_path, weights: weights_path, patients })
}

/// A 64³ volume holding a textured sphere of radius `radius` voxels, and its mask.
pub fn sphere_input64(radius: f64, family: TextureFamily, seed: u64) -> Result<(Volume3D, RoiMask)> {
    let dims = [64; 3];
    let mask = RoiMask::from_fn(dims, |x, y, z| {
        let d = |a: usize| a as f64 - 31.5;
        d(x) * d(x) + d(y) * d(y) + d(z) * d(z) <= radius * radius
    });
    let tex = texture(dims, family, seed);
    let data = tex.iter().zip(mask.voxels()).map(|(&t, &m)| if m == 1 { 128.0 + 40.0 * t } else { 0.0 }).collect();
    Ok((Volume3D::new(dims, [1.0; 3], data, Modality::T1CE)?, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textures_have_matched_first_order_stats() {
        for family in [TextureFamily::Fine, TextureFamily::Coarse] {
            let t = texture([16, 16, 16], family, 3);
            let n = t.len() as f64;
            let mean = t.iter().sum::<f64>() / n;
            let var = t.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn coarse_texture_is_spatially_correlated() {
        let lag1 = |t: &[f64]| t.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (t.len() - 1) as f64;
        assert!(lag1(&texture([16; 3], TextureFamily::Fine, 1)).abs() < 0.1);
        assert!(lag1(&texture([16; 3], TextureFamily::Coarse, 1)) > 0.5);
    }

    #[test]
    fn planted_survival_separates_families() {
        let ps = cohort_patients(&CohortSpec { n_patients: 40, ..Default::default() });
        let fine_max = ps.iter().filter(|p| p.family == TextureFamily::Fine).map(|p| p.os_months).fold(0.0, f64::max);
        let coarse_min =
            ps.iter().filter(|p| p.family == TextureFamily::Coarse).map(|p| p.os_months).fold(f64::INFINITY, f64::min);
        assert!(fine_max < coarse_min);
    }
}
