//! Volume and mask ingestion, isotropic resampling, intensity standardization
//! and extraction of the fixed 64³ network input.
//!
//! On disk a volume is a pair of files sharing a stem:
//!
//! ```text
//! <name>.vol.json   {"dims":[nx,ny,nz],"spacing_mm":[sx,sy,sz],"dtype":"f32le","modality":"T1CE"}
//! <name>.vol.raw    nx*ny*nz little-endian f32, x fastest
//! ```
//!
//! Masks use the same sidecar with `"dtype":"u8"` and one byte per voxel in `{0,1}`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Edge length of the network input cube.
pub const CNN_INPUT_SIZE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Modality {
    T1WI,
    T1CE,
    T2WI,
    FLAIR,
    DERIVED,
}

impl Modality {
    pub const MRI: [Modality; 4] = [Modality::T1WI, Modality::T1CE, Modality::T2WI, Modality::FLAIR];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::T1WI => "T1WI",
            Modality::T1CE => "T1CE",
            Modality::T2WI => "T2WI",
            Modality::FLAIR => "FLAIR",
            Modality::DERIVED => "DERIVED",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('-', "").as_str() {
            "T1WI" | "T1" => Ok(Modality::T1WI),
            "T1CE" | "T1C" => Ok(Modality::T1CE),
            "T2WI" | "T2" => Ok(Modality::T2WI),
            "FLAIR" => Ok(Modality::FLAIR),
            "DERIVED" => Ok(Modality::DERIVED),
            other => Err(format!("unknown modality '{other}'")),
        }
    }
}

/// A scalar 3D grid stored x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<f64>,
    modality: Modality,
}

impl Volume3D {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<f64>, modality: Modality) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::ShapeMismatch(format!("zero-sized dims {dims:?}")));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(Error::DimMismatch { expected: vec![expected], actual: vec![data.len()] });
        }
        if spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::ShapeMismatch(format!("invalid spacing {spacing:?}")));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteData { index });
        }
        Ok(Self { dims, spacing, data, modality })
    }

    pub fn filled(dims: [usize; 3], spacing: [f64; 3], value: f64, modality: Modality) -> Result<Self> {
        Self::new(dims, spacing, vec![value; dims[0] * dims[1] * dims[2]], modality)
    }

    /// Builds a volume by evaluating `f(x, y, z)` at every voxel index.
    pub fn from_fn(
        dims: [usize; 3],
        spacing: [f64; 3],
        modality: Modality,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, spacing, data, modality)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        linear_index(self.dims, x, y, z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.index(x, y, z)]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Binary tumor mask aligned with a [`Volume3D`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiMask {
    dims: [usize; 3],
    voxels: Vec<u8>,
}

impl RoiMask {
    pub fn new(dims: [usize; 3], voxels: Vec<u8>) -> Result<Self> {
        let expected = dims[0] * dims[1] * dims[2];
        if voxels.len() != expected {
            return Err(Error::DimMismatch { expected: vec![expected], actual: vec![voxels.len()] });
        }
        if let Some(bad) = voxels.iter().find(|&&v| v > 1) {
            return Err(Error::ShapeMismatch(format!("mask voxel value {bad} not in {{0,1}}")));
        }
        Ok(Self { dims, voxels })
    }

    pub fn full(dims: [usize; 3]) -> Self {
        Self { dims, voxels: vec![1; dims[0] * dims[1] * dims[2]] }
    }

    pub fn empty(dims: [usize; 3]) -> Self {
        Self { dims, voxels: vec![0; dims[0] * dims[1] * dims[2]] }
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut voxels = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    voxels.push(u8::from(f(x, y, z)));
                }
            }
        }
        Self { dims, voxels }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxels(&self) -> &[u8] {
        &self.voxels
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize, z: usize) -> bool {
        self.voxels[linear_index(self.dims, x, y, z)] == 1
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, on: bool) {
        let i = linear_index(self.dims, x, y, z);
        self.voxels[i] = u8::from(on);
    }

    pub fn count(&self) -> usize {
        self.voxels.iter().filter(|&&v| v == 1).count()
    }

    pub fn is_nonempty(&self) -> bool {
        self.voxels.contains(&1)
    }

    /// Inclusive bounding box `(lo, hi)` of foreground voxels.
    pub fn bounding_box(&self) -> Option<([usize; 3], [usize; 3])> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        let [nx, ny, _] = self.dims;
        for (i, &v) in self.voxels.iter().enumerate() {
            if v == 1 {
                any = true;
                let p = [i % nx, (i / nx) % ny, i / (nx * ny)];
                for a in 0..3 {
                    lo[a] = lo[a].min(p[a]);
                    hi[a] = hi[a].max(p[a]);
                }
            }
        }
        any.then_some((lo, hi))
    }
}

#[inline]
pub(crate) fn linear_index(dims: [usize; 3], x: usize, y: usize, z: usize) -> usize {
    (z * dims[1] + y) * dims[0] + x
}

// ---------------------------------------------------------------------------
// File format

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    dtype: String,
    modality: String,
}

/// Resolves `(sidecar, payload)` paths from a stem, a `.vol.json` or a `.vol.raw` path.
pub fn volume_paths(path: &Path) -> (PathBuf, PathBuf) {
    let s = path.to_string_lossy();
    let stem = s
        .strip_suffix(".vol.json")
        .or_else(|| s.strip_suffix(".vol.raw"))
        .unwrap_or(&s)
        .to_string();
    (PathBuf::from(format!("{stem}.vol.json")), PathBuf::from(format!("{stem}.vol.raw")))
}

fn read_sidecar(path: &Path, dtype: &str) -> Result<(Sidecar, Vec<u8>, PathBuf)> {
    let (json_path, raw_path) = volume_paths(path);
    for p in [&json_path, &raw_path] {
        if !p.exists() {
            return Err(Error::MissingFile(p.clone()));
        }
    }
    let malformed = |reason: String| Error::MalformedHeader { path: json_path.clone(), reason };
    let sidecar: Sidecar =
        serde_json::from_slice(&fs::read(&json_path)?).map_err(|e| malformed(e.to_string()))?;
    if sidecar.dtype != dtype {
        return Err(malformed(format!("dtype '{}' (expected '{dtype}')", sidecar.dtype)));
    }
    if sidecar.dims.iter().any(|&d| d == 0) {
        return Err(malformed(format!("zero-sized dims {:?}", sidecar.dims)));
    }
    if sidecar.spacing_mm.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(malformed(format!("invalid spacing {:?}", sidecar.spacing_mm)));
    }
    let payload = fs::read(&raw_path)?;
    let width = if dtype == "u8" { 1 } else { 4 };
    let n: usize = sidecar.dims.iter().product();
    if payload.len() != n * width {
        return Err(malformed(format!(
            "payload has {} bytes, header declares {:?} x {width} bytes",
            payload.len(),
            sidecar.dims
        )));
    }
    Ok((sidecar, payload, json_path))
}

fn write_sidecar(path: &Path, sidecar: &Sidecar, payload: &[u8]) -> Result<()> {
    let (json_path, raw_path) = volume_paths(path);
    if let Some(parent) = json_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut json = serde_json::to_string(sidecar)?;
    json.push('\n');
    fs::write(json_path, json)?;
    fs::write(raw_path, payload)?;
    Ok(())
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume3D> {
    let (sidecar, payload, json_path) = read_sidecar(path.as_ref(), "f32le")?;
    let modality = sidecar
        .modality
        .parse()
        .map_err(|reason| Error::MalformedHeader { path: json_path, reason })?;
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Volume3D::new(sidecar.dims, sidecar.spacing_mm, data, modality)
}

/// Writes the volume as little-endian f32. Values that originated from f32 round-trip bit-exactly.
pub fn save_volume(v: &Volume3D, path: impl AsRef<Path>) -> Result<()> {
    let sidecar = Sidecar {
        dims: v.dims,
        spacing_mm: v.spacing,
        dtype: "f32le".into(),
        modality: v.modality.to_string(),
    };
    let payload: Vec<u8> = v.data.iter().flat_map(|&x| (x as f32).to_le_bytes()).collect();
    write_sidecar(path.as_ref(), &sidecar, &payload)
}

/// Loads a mask together with the voxel spacing declared in its sidecar.
pub fn load_mask(path: impl AsRef<Path>) -> Result<(RoiMask, [f64; 3])> {
    let (sidecar, payload, json_path) = read_sidecar(path.as_ref(), "u8")?;
    if payload.iter().any(|&b| b > 1) {
        return Err(Error::MalformedHeader { path: json_path, reason: "mask bytes must be 0 or 1".into() });
    }
    Ok((RoiMask::new(sidecar.dims, payload)?, sidecar.spacing_mm))
}

pub fn save_mask(m: &RoiMask, spacing: [f64; 3], path: impl AsRef<Path>) -> Result<()> {
    let sidecar = Sidecar { dims: m.dims, spacing_mm: spacing, dtype: "u8".into(), modality: "MASK".into() };
    write_sidecar(path.as_ref(), &sidecar, &m.voxels)
}

// ---------------------------------------------------------------------------
// Resampling

/// Trilinear sample at a continuous voxel coordinate; coordinates are clamped to the grid.
pub(crate) fn trilinear(data: &[f64], dims: [usize; 3], p: [f64; 3]) -> f64 {
    let mut i0 = [0usize; 3];
    let mut i1 = [0usize; 3];
    let mut t = [0f64; 3];
    for a in 0..3 {
        let hi = (dims[a] - 1) as f64;
        let c = p[a].clamp(0.0, hi);
        let f = c.floor();
        i0[a] = f as usize;
        i1[a] = (i0[a] + 1).min(dims[a] - 1);
        t[a] = c - f;
    }
    let at = |x: usize, y: usize, z: usize| data[linear_index(dims, x, y, z)];
    let lerp = |a: f64, b: f64, t: f64| if t == 0.0 { a } else { a + (b - a) * t };
    let c00 = lerp(at(i0[0], i0[1], i0[2]), at(i1[0], i0[1], i0[2]), t[0]);
    let c10 = lerp(at(i0[0], i1[1], i0[2]), at(i1[0], i1[1], i0[2]), t[0]);
    let c01 = lerp(at(i0[0], i0[1], i1[2]), at(i1[0], i0[1], i1[2]), t[0]);
    let c11 = lerp(at(i0[0], i1[1], i1[2]), at(i1[0], i1[1], i1[2]), t[0]);
    let c0 = lerp(c00, c10, t[1]);
    let c1 = lerp(c01, c11, t[1]);
    lerp(c0, c1, t[2])
}

fn isotropic_dims(dims: [usize; 3], spacing: [f64; 3], target_mm: f64) -> Result<[usize; 3]> {
    if !(target_mm.is_finite() && target_mm > 0.0) {
        return Err(Error::ShapeMismatch(format!("target spacing must be positive, got {target_mm}")));
    }
    let out = [0, 1, 2].map(|a| (dims[a] as f64 * spacing[a] / target_mm).round() as usize);
    if out.iter().any(|&d| d == 0) {
        return Err(Error::DegenerateOutput(out));
    }
    Ok(out)
}

fn resample_grid(data: &[f64], dims: [usize; 3], spacing: [f64; 3], out: [usize; 3], target_mm: f64) -> Vec<f64> {
    // Output voxel j sits at physical position j*target, i.e. input coordinate j*target/s.
    let step = [0, 1, 2].map(|a| target_mm / spacing[a]);
    let mut res = Vec::with_capacity(out[0] * out[1] * out[2]);
    for z in 0..out[2] {
        for y in 0..out[1] {
            for x in 0..out[0] {
                let p = [x as f64 * step[0], y as f64 * step[1], z as f64 * step[2]];
                res.push(trilinear(data, dims, p));
            }
        }
    }
    res
}

/// Trilinear resampling onto an isotropic grid of `target_mm` spacing.
///
/// Output dims are `round(n * s / target_mm)` per axis; voxel `j` of the output maps to physical
/// position `j * target_mm`, so input lattice points are reproduced exactly.
pub fn resample_isotropic(v: &Volume3D, target_mm: f64) -> Result<Volume3D> {
    let out = isotropic_dims(v.dims, v.spacing, target_mm)?;
    if out == v.dims && v.spacing.iter().all(|&s| s == target_mm) {
        return Ok(v.clone());
    }
    let data = resample_grid(&v.data, v.dims, v.spacing, out, target_mm);
    Volume3D::new(out, [target_mm; 3], data, v.modality)
}

/// Resamples a mask with the same geometry as [`resample_isotropic`], thresholding the
/// interpolated occupancy at 0.5.
pub fn resample_mask_isotropic(m: &RoiMask, spacing: [f64; 3], target_mm: f64) -> Result<RoiMask> {
    let out = isotropic_dims(m.dims, spacing, target_mm)?;
    if out == m.dims && spacing.iter().all(|&s| s == target_mm) {
        return Ok(m.clone());
    }
    let occ: Vec<f64> = m.voxels.iter().map(|&b| b as f64).collect();
    let voxels = resample_grid(&occ, m.dims, spacing, out, target_mm)
        .into_iter()
        .map(|p| u8::from(p > 0.5))
        .collect();
    RoiMask::new(out, voxels)
}

/// Linear rescale to `[0, 255]`; a constant volume maps to all zeros.
pub fn standardize_intensity(v: &Volume3D) -> Volume3D {
    let (lo, hi) = v.min_max();
    let range = hi - lo;
    let data = if range > 0.0 {
        v.data.iter().map(|&x| 255.0 * (x - lo) / range).collect()
    } else {
        vec![0.0; v.data.len()]
    };
    Volume3D { data, ..v.clone() }
}

/// The 64³ network input and its aligned ROI mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnInput {
    pub volume: Volume3D,
    pub mask: RoiMask,
}

/// Crops the ROI bounding box, zeroes out-of-mask voxels, scales the box to fit 64³ with its aspect
/// ratio preserved and centers it in a zero-padded cube.
pub fn extract_cnn_input(v: &Volume3D, m: &RoiMask) -> Result<CnnInput> {
    if v.dims != m.dims {
        return Err(Error::DimMismatch { expected: v.dims.to_vec(), actual: m.dims.to_vec() });
    }
    let (lo, hi) = m.bounding_box().ok_or(Error::EmptyMask)?;
    let n = CNN_INPUT_SIZE;
    let box_dims = [0, 1, 2].map(|a| hi[a] - lo[a] + 1);
    let scale = box_dims.iter().map(|&b| n as f64 / b as f64).fold(f64::INFINITY, f64::min);
    let extent = box_dims.map(|b| ((b as f64 * scale).round() as usize).clamp(1, n));
    let offset = extent.map(|e| (n - e) / 2);

    let masked: Vec<f64> = v.data.iter().zip(&m.voxels).map(|(&x, &b)| if b == 1 { x } else { 0.0 }).collect();
    let occ: Vec<f64> = m.voxels.iter().map(|&b| b as f64).collect();

    // Pixel-centre mapping of output voxel j onto box coordinate, clamped to the box.
    let src_coord = |a: usize, j: usize| -> f64 {
        let s = extent[a] as f64 / box_dims[a] as f64;
        let c = (j as f64 + 0.5) / s - 0.5;
        lo[a] as f64 + c.clamp(0.0, (box_dims[a] - 1) as f64)
    };

    let mut data = vec![0.0; n * n * n];
    let mut voxels = vec![0u8; n * n * n];
    for z in 0..extent[2] {
        let pz = src_coord(2, z);
        for y in 0..extent[1] {
            let py = src_coord(1, y);
            for x in 0..extent[0] {
                let p = [src_coord(0, x), py, pz];
                let i = linear_index([n; 3], x + offset[0], y + offset[1], z + offset[2]);
                data[i] = trilinear(&masked, v.dims, p);
                voxels[i] = u8::from(trilinear(&occ, m.dims, p) > 0.5);
            }
        }
    }
    let centre = [0, 1, 2].map(|a| offset[a] + extent[a] / 2);
    voxels[linear_index([n; 3], centre[0], centre[1], centre[2])] = 1;

    Ok(CnnInput {
        volume: Volume3D::new([n; 3], [1.0; 3], data, v.modality)?,
        mask: RoiMask::new([n; 3], voxels)?,
    })
}

/// Load, resample to 1 mm, standardize and crop a single modality for the network.
pub fn prepare_cnn_input(volume: &Volume3D, mask: &RoiMask, mask_spacing: [f64; 3]) -> Result<CnnInput> {
    let iso = resample_isotropic(volume, 1.0)?;
    let iso_mask = resample_mask_isotropic(mask, mask_spacing, 1.0)?;
    if iso_mask.dims() != iso.dims() {
        return Err(Error::DimMismatch { expected: iso.dims().to_vec(), actual: iso_mask.dims().to_vec() });
    }
    let iso_mask = if iso_mask.is_nonempty() {
        iso_mask
    } else {
        // Sub-voxel ROIs can vanish under thresholding; keep the nearest voxel of the original centroid.
        let (lo, hi) = mask.bounding_box().ok_or(Error::EmptyMask)?;
        let mut m = RoiMask::empty(iso.dims());
        let c = [0, 1, 2].map(|a| {
            let mid = (lo[a] + hi[a]) as f64 / 2.0 * mask_spacing[a];
            (mid.round() as usize).min(iso.dims()[a] - 1)
        });
        m.set(c[0], c[1], c[2], true);
        m
    };
    extract_cnn_input(&standardize_intensity(&iso), &iso_mask)
}
