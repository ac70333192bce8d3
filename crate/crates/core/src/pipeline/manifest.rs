use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::survival::PatientRecord;
use crate::volume::{volume_paths, Modality};

pub const MANIFEST_COLUMNS: [&str; 13] = [
    "patient_id",
    "t1wi",
    "t1ce",
    "t2wi",
    "flair",
    "mask",
    "age",
    "gender",
    "os_months",
    "event",
    "macrophage_m1",
    "neutrophils",
    "tfh",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub record: PatientRecord,
    /// Sidecar paths in `Modality::MRI` order, resolved against the manifest directory.
    pub volumes: [PathBuf; 4],
    pub mask: PathBuf,
}

impl ManifestRow {
    pub fn id(&self) -> &str {
        &self.record.id
    }

    pub fn volume(&self, modality: Modality) -> Option<&Path> {
        Modality::MRI.iter().position(|&m| m == modality).map(|i| self.volumes[i].as_path())
    }

    /// Referenced files (sidecar or raw payload) that do not exist.
    pub fn missing_files(&self) -> Vec<PathBuf> {
        self.volumes
            .iter()
            .chain(std::iter::once(&self.mask))
            .flat_map(|p| {
                let (json, raw) = volume_paths(p);
                [json, raw]
            })
            .filter(|p| !p.exists())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortManifest {
    pub rows: Vec<ManifestRow>,
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize) -> &'a str {
    rec.get(i).unwrap_or("").trim()
}

fn number(rec: &csv::StringRecord, i: usize, line: usize) -> Result<f64> {
    let s = field(rec, i);
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::ManifestInvalid(format!("line {line}: {} = '{s}' is not a finite number", MANIFEST_COLUMNS[i])))
}

fn flag(rec: &csv::StringRecord, i: usize, line: usize) -> Result<u8> {
    match field(rec, i) {
        "0" => Ok(0),
        "1" => Ok(1),
        s => Err(Error::ManifestInvalid(format!("line {line}: {} = '{s}' must be 0 or 1", MANIFEST_COLUMNS[i]))),
    }
}

impl CohortManifest {
    /// Parses and checks structure (header order, numeric ranges, unique ids). File existence is
    /// checked separately with [`CohortManifest::validate_files`].
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut rdr = csv::Reader::from_path(path)?;
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if header != MANIFEST_COLUMNS {
            return Err(Error::ManifestInvalid(format!(
                "header must be `{}`, found `{}`",
                MANIFEST_COLUMNS.join(","),
                header.join(",")
            )));
        }
        let mut rows = Vec::new();
        let mut seen = HashSet::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let id = field(&rec, 0).to_string();
            if id.is_empty() {
                return Err(Error::ManifestInvalid(format!("line {line}: empty patient_id")));
            }
            if !seen.insert(id.clone()) {
                return Err(Error::ManifestInvalid(format!("duplicate patient_id '{id}'")));
            }
            let resolve = |j: usize| base.join(field(&rec, j));
            let immune = [number(&rec, 10, line)?, number(&rec, 11, line)?, number(&rec, 12, line)?];
            if let Some(bad) = immune.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::ManifestInvalid(format!("line {line}: immune fraction {bad} outside [0, 1]")));
            }
            let os_months = number(&rec, 8, line)?;
            if os_months < 0.0 {
                return Err(Error::ManifestInvalid(format!("line {line}: negative os_months")));
            }
            rows.push(ManifestRow {
                record: PatientRecord {
                    id,
                    os_months,
                    event: flag(&rec, 9, line)? == 1,
                    age: number(&rec, 6, line)?,
                    gender: flag(&rec, 7, line)?,
                    immune,
                },
                volumes: [resolve(1), resolve(2), resolve(3), resolve(4)],
                mask: resolve(5),
            });
        }
        if rows.is_empty() {
            return Err(Error::ManifestInvalid("no patients".into()));
        }
        Ok(Self { rows })
    }

    /// Fails with the first patient whose referenced files are missing.
    pub fn validate_files(&self) -> Result<()> {
        for row in &self.rows {
            if let Some(p) = row.missing_files().first() {
                return Err(Error::ManifestInvalid(format!("{}: missing {}", row.id(), p.display())));
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&ManifestRow> {
        self.rows.iter().find(|r| r.id() == id)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}
