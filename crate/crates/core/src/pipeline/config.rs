use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::HyperparamGrid;
use crate::error::{Error, Result};
use crate::gmm::ModalityReduction;
use crate::volume::Modality;

/// Which column blocks enter the design matrix: radiomic (R), clinical (C), immune (I).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureSet {
    pub radiomic: bool,
    pub clinical: bool,
    pub immune: bool,
}

impl FeatureSet {
    pub const R: FeatureSet = FeatureSet { radiomic: true, clinical: false, immune: false };
    pub const C: FeatureSet = FeatureSet { radiomic: false, clinical: true, immune: false };
    pub const I: FeatureSet = FeatureSet { radiomic: false, clinical: false, immune: true };

    /// All seven block combinations, in report order.
    pub fn all_combinations() -> Vec<FeatureSet> {
        ["R", "C", "I", "I+C", "R+C", "R+I", "R+C+I"].iter().map(|s| s.parse().expect("valid label")).collect()
    }

    /// Label used in file names and tables.
    pub fn label(&self) -> &'static str {
        match (self.radiomic, self.clinical, self.immune) {
            (true, false, false) => "R",
            (false, true, false) => "C",
            (false, false, true) => "I",
            (false, true, true) => "I+C",
            (true, true, false) => "R+C",
            (true, false, true) => "R+I",
            (true, true, true) => "R+C+I",
            (false, false, false) => "",
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut fs = FeatureSet { radiomic: false, clinical: false, immune: false };
        for part in s.split('+') {
            let slot = match part.trim().to_ascii_uppercase().as_str() {
                "R" => &mut fs.radiomic,
                "C" => &mut fs.clinical,
                "I" => &mut fs.immune,
                other => return Err(Error::InvalidConfig(format!("unknown feature block '{other}' in '{s}'"))),
            };
            if *slot {
                return Err(Error::InvalidConfig(format!("feature block repeated in '{s}'")));
            }
            *slot = true;
        }
        Ok(fs)
    }
}

impl Serialize for FeatureSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for FeatureSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Classification target. Immune targets are median-split marker fractions; `Survival` is the
/// median split of imputed overall survival.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    M1,
    Neutrophils,
    Tfh,
    Survival,
}

impl Target {
    pub const ALL: [Target; 4] = [Target::M1, Target::Neutrophils, Target::Tfh, Target::Survival];

    pub fn as_str(self) -> &'static str {
        match self {
            Target::M1 => "m1",
            Target::Neutrophils => "neutrophils",
            Target::Tfh => "tfh",
            Target::Survival => "survival",
        }
    }

    /// Position within `[macrophage_m1, neutrophils, tfh]` for immune targets.
    pub fn immune_index(self) -> Option<usize> {
        match self {
            Target::M1 => Some(0),
            Target::Neutrophils => Some(1),
            Target::Tfh => Some(2),
            Target::Survival => None,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m1" | "macrophage_m1" => Ok(Target::M1),
            "neutrophils" => Ok(Target::Neutrophils),
            "tfh" => Ok(Target::Tfh),
            "survival" | "os" => Ok(Target::Survival),
            other => Err(Error::MissingColumn(other.to_string())),
        }
    }
}

fn default_k() -> usize {
    2
}

fn default_seed() -> u64 {
    42
}

fn default_feature_sets() -> Vec<FeatureSet> {
    FeatureSet::all_combinations()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_inspect_modality() -> Modality {
    Modality::T1CE
}

/// Run configuration, read from JSON. Every field has a default, so `{}` is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub grid: HyperparamGrid,
    #[serde(default)]
    pub modality_reduction: ModalityReduction,
    #[serde(default = "default_feature_sets")]
    pub feature_sets: Vec<FeatureSet>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Modality whose activations `inspect` shows.
    #[serde(default = "default_inspect_modality")]
    pub inspect_modality: Modality,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            k: default_k(),
            seed: default_seed(),
            grid: HyperparamGrid::default(),
            modality_reduction: ModalityReduction::default(),
            feature_sets: default_feature_sets(),
            output_dir: default_output_dir(),
            inspect_modality: default_inspect_modality(),
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let cfg: RunConfig = serde_json::from_slice(&std::fs::read(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidK(0));
        }
        if self.feature_sets.is_empty() {
            return Err(Error::InvalidConfig("feature_sets must not be empty".into()));
        }
        if self.feature_sets.iter().any(|f| f.label().is_empty()) {
            return Err(Error::InvalidConfig("empty feature set".into()));
        }
        self.grid.validate()
    }
}
