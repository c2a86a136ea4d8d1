//! T4dataset groups, dataset configs and on-disk layout checks.
//!
//! A group is named `<kind> <vehicle> vX.Y` (`DB JPNTAXI v1.1`) and is
//! configured by a file named after the kind, vehicle and `X` only
//! (`db_jpntaxi_v1.yaml`). Each entry is stored at
//! `{root}/{group-stem}/{id}/{webauto-version}/` with four subdirectories.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Subdirectories every dataset version directory must contain.
pub const REQUIRED_SUBDIRS: [&str; 4] = ["annotation", "data", "input_bug", "map"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("config file `{found}` does not match group (expected `{expected}`)")]
    FilenameMismatch { expected: String, found: String },
    #[error("dataset id `{0}` appears more than once")]
    DuplicateId(String),
    #[error("`{0}` is not a T4dataset id (expected 8-4-4-4-12 hex UUID)")]
    InvalidId(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DatasetKind {
    /// Database T4dataset, used for training.
    Db,
    /// Use-case T4dataset, used for evaluation.
    Uc,
    /// Auto-labeled T4dataset.
    Pseudo,
}

impl DatasetKind {
    pub fn display_prefix(self) -> &'static str {
        match self {
            DatasetKind::Db => "DB",
            DatasetKind::Uc => "UC",
            DatasetKind::Pseudo => "Pseudo",
        }
    }

    pub fn file_prefix(self) -> &'static str {
        match self {
            DatasetKind::Db => "db",
            DatasetKind::Uc => "uc",
            DatasetKind::Pseudo => "pseudo",
        }
    }
}

impl FromStr for DatasetKind {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "db" | "database" => Ok(DatasetKind::Db),
            "uc" | "use case" | "usecase" => Ok(DatasetKind::Uc),
            "pseudo" => Ok(DatasetKind::Pseudo),
            _ => Err(DatasetError::Syntax(format!("unknown dataset kind `{s}`"))),
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_prefix())
    }
}

impl Serialize for DatasetKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.display_prefix())
    }
}

impl<'de> Deserialize<'de> for DatasetKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// `DB JPNTAXI v1.1`. The vehicle name keeps the case it was given with.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DatasetGroupId {
    pub kind: DatasetKind,
    pub vehicle: String,
    pub x: u64,
    pub y: u64,
}

fn check_vehicle(v: &str) -> Result<(), DatasetError> {
    if v.is_empty() || !v.bytes().all(|b| b.is_ascii_alphanumeric()) {
        return Err(DatasetError::Syntax(format!(
            "vehicle name `{v}` must be non-empty ASCII alphanumeric"
        )));
    }
    Ok(())
}

impl DatasetGroupId {
    pub fn new(kind: DatasetKind, vehicle: &str, x: u64, y: u64) -> Result<Self, DatasetError> {
        check_vehicle(vehicle)?;
        Ok(DatasetGroupId {
            kind,
            vehicle: vehicle.to_string(),
            x,
            y,
        })
    }

    /// Directory and config-file stem: `db_jpntaxi_v1`.
    pub fn stem(&self) -> String {
        format!(
            "{}_{}_v{}",
            self.kind.file_prefix(),
            self.vehicle.to_ascii_lowercase(),
            self.x
        )
    }

    pub fn config_filename(&self) -> String {
        format!("{}.yaml", self.stem())
    }

    /// Parse a config stem such as `db_jpntaxi_v1` into `(kind, vehicle, x)`.
    pub fn parse_stem(stem: &str) -> Result<(DatasetKind, String, u64), DatasetError> {
        let bad = || DatasetError::Syntax(format!("`{stem}` is not a dataset config name"));
        let mut parts = stem.split('_');
        let (Some(kind), Some(vehicle), Some(ver), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad());
        };
        let kind: DatasetKind = kind.parse().map_err(|_| bad())?;
        check_vehicle(vehicle).map_err(|_| bad())?;
        let x = ver
            .strip_prefix('v')
            .and_then(|x| x.parse().ok())
            .ok_or_else(bad)?;
        Ok((kind, vehicle.to_string(), x))
    }
}

impl fmt::Display for DatasetGroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} v{}.{}", self.kind, self.vehicle, self.x, self.y)
    }
}

impl FromStr for DatasetGroupId {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DatasetError::Syntax(format!("`{s}` is not `<kind> <vehicle> vX.Y`"));
        let parts: Vec<&str> = s.split(' ').collect();
        let [kind, vehicle, ver] = parts.as_slice() else {
            return Err(bad());
        };
        let (x, y) = ver
            .strip_prefix('v')
            .and_then(|v| v.split_once('.'))
            .ok_or_else(bad)?;
        let num = |t: &str| -> Result<u64, DatasetError> {
            if t.is_empty() || (t.len() > 1 && t.starts_with('0')) {
                return Err(bad());
            }
            t.parse().map_err(|_| bad())
        };
        DatasetGroupId::new(kind.parse()?, vehicle, num(x)?, num(y)?)
    }
}

impl Serialize for DatasetGroupId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DatasetGroupId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(DatasetError::Syntax(format!("unknown split `{s}`"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Why a dataset version is being bumped. Every reason bumps `Y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BumpReason {
    AnnotationChange,
    AddedData,
    FormatUpdate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub id: String,
    #[serde(rename = "version")]
    pub webauto_version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

pub fn is_dataset_id(id: &str) -> bool {
    let groups: Vec<&str> = id.split('-').collect();
    groups.len() == 5
        && groups
            .iter()
            .zip([8, 4, 4, 4, 12])
            .all(|(g, n)| g.len() == n && g.bytes().all(|b| b.is_ascii_hexdigit()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetConfig {
    pub group: DatasetGroupId,
    /// Non-annotated dataset whose final kind is not decided yet.
    pub pending_annotation: bool,
    pub entries: Vec<DatasetEntry>,
}

#[derive(Serialize, Deserialize)]
struct RawConfig {
    kind: DatasetKind,
    vehicle: String,
    x: u64,
    #[serde(default)]
    y: u64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pending_annotation: bool,
    #[serde(default)]
    entries: Vec<DatasetEntry>,
}

impl DatasetConfig {
    pub fn new(group: DatasetGroupId, entries: Vec<DatasetEntry>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !is_dataset_id(&e.id) {
                return Err(DatasetError::InvalidId(e.id.clone()));
            }
            if !seen.insert(e.id.as_str()) {
                return Err(DatasetError::DuplicateId(e.id.clone()));
            }
        }
        Ok(DatasetConfig {
            group,
            pending_annotation: false,
            entries,
        })
    }

    pub fn from_yaml(text: &str) -> Result<Self, DatasetError> {
        let raw: RawConfig =
            serde_yaml::from_str(text).map_err(|e| DatasetError::Syntax(e.to_string()))?;
        let group = DatasetGroupId::new(raw.kind, &raw.vehicle, raw.x, raw.y)?;
        let mut config = DatasetConfig::new(group, raw.entries)?;
        config.pending_annotation = raw.pending_annotation;
        Ok(config)
    }

    pub fn to_yaml(&self) -> String {
        let raw = RawConfig {
            kind: self.group.kind,
            vehicle: self.group.vehicle.clone(),
            x: self.group.x,
            y: self.group.y,
            pending_annotation: self.pending_annotation,
            entries: self.entries.clone(),
        };
        serde_yaml::to_string(&raw).expect("config serializes")
    }

    pub fn entries_in(&self, split: Option<Split>) -> impl Iterator<Item = &DatasetEntry> {
        self.entries
            .iter()
            .filter(move |e| split.is_none() || e.split == split)
    }
}

/// Read a dataset config and check that its filename matches its group.
pub fn parse_dataset_config(path: &Path) -> Result<DatasetConfig, DatasetError> {
    let text = fs::read_to_string(path)?;
    let config = DatasetConfig::from_yaml(&text)?;
    let found = path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default();
    let expected = config.group.config_filename();
    let yml = format!("{}.yml", config.group.stem());
    if found != expected && found != yml {
        return Err(DatasetError::FilenameMismatch { expected, found });
    }
    Ok(config)
}

pub fn bump_dataset_version(group: &DatasetGroupId, _reason: BumpReason) -> DatasetGroupId {
    DatasetGroupId {
        y: group.y + 1,
        ..group.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "finding", rename_all = "snake_case")]
pub enum LayoutFinding {
    MissingDir {
        path: PathBuf,
    },
    /// Expected version directory is absent but other versions exist.
    VersionMismatch {
        id: String,
        expected: u64,
        found: Vec<String>,
    },
    ExtraPath {
        path: PathBuf,
    },
}

impl fmt::Display for LayoutFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayoutFinding::MissingDir { path } => write!(f, "missing directory {}", path.display()),
            LayoutFinding::VersionMismatch {
                id,
                expected,
                found,
            } => write!(
                f,
                "dataset {id}: expected version {expected}, found [{}]",
                found.join(", ")
            ),
            LayoutFinding::ExtraPath { path } => write!(f, "unexpected path {}", path.display()),
        }
    }
}

fn dir_names(path: &Path) -> io::Result<BTreeSet<String>> {
    let mut names = BTreeSet::new();
    for entry in fs::read_dir(path)? {
        names.insert(entry?.file_name().to_string_lossy().into_owned());
    }
    Ok(names)
}

/// Check every config entry against the on-disk tree under `root`.
///
/// Structural problems are reported as findings; only I/O failures are errors.
/// Missing directories are reported together with every required path below
/// them, so creating any required directory can only remove findings.
pub fn validate_layout(root: &Path, config: &DatasetConfig) -> io::Result<Vec<LayoutFinding>> {
    let mut findings = Vec::new();
    let group_dir = root.join(config.group.stem());
    for entry in &config.entries {
        let id_dir = group_dir.join(&entry.id);
        let version_dir = id_dir.join(entry.webauto_version.to_string());
        let missing_below_version = |findings: &mut Vec<LayoutFinding>| {
            for sub in REQUIRED_SUBDIRS {
                findings.push(LayoutFinding::MissingDir {
                    path: version_dir.join(sub),
                });
            }
        };
        if !id_dir.is_dir() {
            findings.push(LayoutFinding::MissingDir {
                path: id_dir.clone(),
            });
            findings.push(LayoutFinding::MissingDir {
                path: version_dir.clone(),
            });
            missing_below_version(&mut findings);
            continue;
        }
        if !version_dir.is_dir() {
            let others: Vec<String> = dir_names(&id_dir)?
                .into_iter()
                .filter(|n| n.parse::<u64>().is_ok() && id_dir.join(n).is_dir())
                .collect();
            if others.is_empty() {
                findings.push(LayoutFinding::MissingDir {
                    path: version_dir.clone(),
                });
                missing_below_version(&mut findings);
            } else {
                findings.push(LayoutFinding::VersionMismatch {
                    id: entry.id.clone(),
                    expected: entry.webauto_version,
                    found: others,
                });
            }
            continue;
        }
        let present = dir_names(&version_dir)?;
        for sub in REQUIRED_SUBDIRS {
            if !version_dir.join(sub).is_dir() {
                findings.push(LayoutFinding::MissingDir {
                    path: version_dir.join(sub),
                });
            }
        }
        for name in present {
            if !REQUIRED_SUBDIRS.contains(&name.as_str()) {
                findings.push(LayoutFinding::ExtraPath {
                    path: version_dir.join(name),
                });
            }
        }
    }
    Ok(findings)
}
