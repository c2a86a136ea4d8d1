//! Info files, pseudo labels and scene mining.
//!
//! An info file is a flat, per-sample index of a dataset: sample token,
//! timestamp, lidar path and the 3D boxes of that frame. Info files are
//! built from annotation tables ([`create_data_info`]) or loaded from an
//! offline model's detections ([`load_detections`]). Detections are filtered
//! by per-class confidence ([`choose_annotation`]) and written back out as a
//! pseudo-labeled T4dataset ([`create_pseudo_t4dataset`]).
//!
//! Annotation tables live in `{version}/annotation/` as JSON arrays:
//!
//! | file                     | fields                                                        |
//! |--------------------------|---------------------------------------------------------------|
//! | `sample.json`            | token, timestamp, lidar_path                                  |
//! | `category.json`          | token, name, description                                      |
//! | `instance.json`          | token, category_token, nbr_annotations                        |
//! | `sample_annotation.json` | token, sample_token, instance_token, translation, size, yaw, score?, num_lidar_pts? |

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    is_dataset_id, DatasetConfig, DatasetEntry, DatasetGroupId, DatasetKind, Split,
};

#[derive(Debug, Error)]
pub enum InfoError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("missing annotation table {}", .0.display())]
    MissingTable(PathBuf),
    #[error("corrupt annotation: {0}")]
    CorruptAnnotation(String),
    #[error("box {index} of sample `{token}` has no score")]
    MissingScore { token: String, index: usize },
    #[error("no threshold configured for category `{0}`")]
    UnknownCategory(Category),
    #[error("invalid box in sample `{token}`: {reason}")]
    InvalidBox { token: String, reason: String },
    #[error("sample token `{0}` appears more than once")]
    DuplicateToken(String),
    #[error("pseudo datasets must be of kind Pseudo, got {0}")]
    KindMismatch(DatasetKind),
    #[error("annotation already exists at {}", .0.display())]
    ExistingAnnotation(PathBuf),
    #[error("missing dataset: {0}")]
    MissingDataset(String),
    #[error("invalid confidence band [{lo}, {hi})")]
    InvalidBand { lo: f64, hi: f64 },
    #[error("invalid threshold {value} for `{category}`")]
    InvalidThreshold { category: Category, value: f64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Car,
    Truck,
    Bus,
    Bicycle,
    Pedestrian,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Car,
        Category::Truck,
        Category::Bus,
        Category::Bicycle,
        Category::Pedestrian,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Car => "car",
            Category::Truck => "truck",
            Category::Bus => "bus",
            Category::Bicycle => "bicycle",
            Category::Pedestrian => "pedestrian",
        }
    }

    /// Column header used in report tables.
    pub fn short_label(self) -> &'static str {
        match self {
            Category::Car => "Car",
            Category::Truck => "Tru.",
            Category::Bus => "Bus",
            Category::Bicycle => "Bic.",
            Category::Pedestrian => "Ped.",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = InfoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| InfoError::Syntax(format!("unknown category `{s}`")))
    }
}

/// A 3D box. Human annotations carry no score; detections always do.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxAnnotation {
    pub category: Category,
    /// Meters.
    pub center: [f64; 3],
    /// Width, length, height in meters.
    pub size: [f64; 3],
    /// Radians.
    pub yaw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_lidar_pts: Option<u64>,
}

impl BoxAnnotation {
    fn check(&self) -> Result<(), String> {
        if !self.size.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(format!("size {:?} must be positive", self.size));
        }
        if !self.center.iter().all(|c| c.is_finite()) || !self.yaw.is_finite() {
            return Err("non-finite center or yaw".into());
        }
        if let Some(s) = self.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(format!("score {s} outside [0, 1]"));
            }
        }
        Ok(())
    }

    /// Planar distance of the box center from the frame origin.
    pub fn planar_range(&self) -> f64 {
        self.center[0].hypot(self.center[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleInfo {
    pub token: String,
    /// Microseconds.
    pub timestamp: i64,
    pub lidar_path: String,
    /// T4dataset id the sample belongs to, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_id: Option<String>,
    #[serde(default)]
    pub boxes: Vec<BoxAnnotation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSelector {
    Train,
    Val,
    Test,
    All,
}

impl SplitSelector {
    pub fn split(self) -> Option<Split> {
        match self {
            SplitSelector::Train => Some(Split::Train),
            SplitSelector::Val => Some(Split::Val),
            SplitSelector::Test => Some(Split::Test),
            SplitSelector::All => None,
        }
    }
}

impl FromStr for SplitSelector {
    type Err = InfoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(SplitSelector::Train),
            "val" => Ok(SplitSelector::Val),
            "test" => Ok(SplitSelector::Test),
            "all" => Ok(SplitSelector::All),
            _ => Err(InfoError::Syntax(format!("unknown split `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoFile {
    pub source_group: DatasetGroupId,
    pub split: SplitSelector,
    pub samples: Vec<SampleInfo>,
}

impl InfoFile {
    pub fn from_json(text: &str) -> Result<Self, InfoError> {
        let info: InfoFile =
            serde_json::from_str(text).map_err(|e| InfoError::Syntax(e.to_string()))?;
        info.validate()?;
        Ok(info)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("info file serializes");
        s.push('\n');
        s
    }

    pub fn read(path: &Path) -> Result<Self, InfoError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), InfoError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), InfoError> {
        let mut seen = HashSet::new();
        for s in &self.samples {
            if s.token.is_empty() {
                return Err(InfoError::Syntax("empty sample token".into()));
            }
            if !seen.insert(s.token.as_str()) {
                return Err(InfoError::DuplicateToken(s.token.clone()));
            }
            for b in &s.boxes {
                b.check().map_err(|reason| InfoError::InvalidBox {
                    token: s.token.clone(),
                    reason,
                })?;
            }
        }
        Ok(())
    }

    pub fn box_count(&self) -> usize {
        self.samples.iter().map(|s| s.boxes.len()).sum()
    }

    fn require_scores(&self) -> Result<(), InfoError> {
        for s in &self.samples {
            if let Some(index) = s.boxes.iter().position(|b| b.score.is_none()) {
                return Err(InfoError::MissingScore {
                    token: s.token.clone(),
                    index,
                });
            }
        }
        Ok(())
    }
}

/// Load an offline model's detections; every box must carry a score.
pub fn load_detections(path: &Path) -> Result<InfoFile, InfoError> {
    let info = InfoFile::read(path)?;
    info.require_scores()?;
    Ok(info)
}

/// Minimum confidence per category.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThresholdConfig(pub BTreeMap<Category, f64>);

impl ThresholdConfig {
    pub fn uniform(value: f64) -> Self {
        ThresholdConfig(Category::ALL.into_iter().map(|c| (c, value)).collect())
    }

    pub fn from_yaml(text: &str) -> Result<Self, InfoError> {
        let cfg: ThresholdConfig =
            serde_yaml::from_str(text).map_err(|e| InfoError::Syntax(e.to_string()))?;
        for (&category, &value) in &cfg.0 {
            if !(0.0..=1.0).contains(&value) {
                return Err(InfoError::InvalidThreshold { category, value });
            }
        }
        Ok(cfg)
    }
}

/// Keep boxes whose score is at least the category threshold.
///
/// Samples that lose every box are kept; scores are preserved.
pub fn choose_annotation(
    raw: &InfoFile,
    thresholds: &ThresholdConfig,
) -> Result<InfoFile, InfoError> {
    raw.require_scores()?;
    let mut out = raw.clone();
    for sample in &mut out.samples {
        let mut kept = Vec::with_capacity(sample.boxes.len());
        for b in sample.boxes.drain(..) {
            let threshold = *thresholds
                .0
                .get(&b.category)
                .ok_or(InfoError::UnknownCategory(b.category))?;
            if b.score.expect("checked") >= threshold {
                kept.push(b);
            }
        }
        sample.boxes = kept;
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SampleRow {
    token: String,
    timestamp: i64,
    lidar_path: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CategoryRow {
    token: String,
    name: String,
    #[serde(default)]
    description: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InstanceRow {
    token: String,
    category_token: String,
    #[serde(default)]
    nbr_annotations: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AnnotationRow {
    token: String,
    sample_token: String,
    instance_token: String,
    translation: [f64; 3],
    size: [f64; 3],
    yaw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num_lidar_pts: Option<u64>,
}

const SAMPLE_TABLE: &str = "sample.json";
const CATEGORY_TABLE: &str = "category.json";
const INSTANCE_TABLE: &str = "instance.json";
const ANNOTATION_TABLE: &str = "sample_annotation.json";
const TABLES: [&str; 4] = [SAMPLE_TABLE, CATEGORY_TABLE, INSTANCE_TABLE, ANNOTATION_TABLE];

fn read_table<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<Vec<T>, InfoError> {
    let path = dir.join(name);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(InfoError::MissingTable(path)),
        Err(e) => return Err(e.into()),
    };
    serde_json::from_str(&text)
        .map_err(|e| InfoError::CorruptAnnotation(format!("{}: {e}", path.display())))
}

fn write_table<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<(), InfoError> {
    let mut text = serde_json::to_string_pretty(rows).expect("table serializes");
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

/// Join the annotation tables in `dir` into samples, in table order.
fn load_annotation_dir(dir: &Path, dataset_id: &str) -> Result<Vec<SampleInfo>, InfoError> {
    let samples: Vec<SampleRow> = read_table(dir, SAMPLE_TABLE)?;
    let categories: Vec<CategoryRow> = read_table(dir, CATEGORY_TABLE)?;
    let instances: Vec<InstanceRow> = read_table(dir, INSTANCE_TABLE)?;
    let annotations: Vec<AnnotationRow> = read_table(dir, ANNOTATION_TABLE)?;

    // Categories outside the evaluated set map to None and are dropped.
    let category_of: HashMap<&str, Option<Category>> = categories
        .iter()
        .map(|c| (c.token.as_str(), c.name.parse().ok()))
        .collect();
    let mut instance_category = HashMap::new();
    for inst in &instances {
        let cat = category_of.get(inst.category_token.as_str()).ok_or_else(|| {
            InfoError::CorruptAnnotation(format!(
                "instance `{}` references unknown category `{}`",
                inst.token, inst.category_token
            ))
        })?;
        instance_category.insert(inst.token.as_str(), *cat);
    }

    let mut index = HashMap::new();
    let mut out: Vec<SampleInfo> = Vec::with_capacity(samples.len());
    for row in samples {
        if index.insert(row.token.clone(), out.len()).is_some() {
            return Err(InfoError::DuplicateToken(row.token));
        }
        out.push(SampleInfo {
            token: row.token,
            timestamp: row.timestamp,
            lidar_path: row.lidar_path,
            dataset_id: Some(dataset_id.to_string()),
            boxes: Vec::new(),
        });
    }
    for ann in annotations {
        let &slot = index.get(&ann.sample_token).ok_or_else(|| {
            InfoError::CorruptAnnotation(format!(
                "annotation `{}` references unknown sample `{}`",
                ann.token, ann.sample_token
            ))
        })?;
        let category = *instance_category
            .get(ann.instance_token.as_str())
            .ok_or_else(|| {
                InfoError::CorruptAnnotation(format!(
                    "annotation `{}` references unknown instance `{}`",
                    ann.token, ann.instance_token
                ))
            })?;
        let Some(category) = category else { continue };
        out[slot].boxes.push(BoxAnnotation {
            category,
            center: ann.translation,
            size: ann.size,
            yaw: ann.yaw,
            score: ann.score,
            num_lidar_pts: ann.num_lidar_pts,
        });
    }
    Ok(out)
}

fn annotation_dir(root: &Path, group: &DatasetGroupId, entry: &DatasetEntry) -> PathBuf {
    root.join(group.stem())
        .join(&entry.id)
        .join(entry.webauto_version.to_string())
        .join("annotation")
}

/// Build an info file from the annotation tables of every entry in `split`.
///
/// Samples are ordered by `(timestamp, token)`.
pub fn create_data_info(
    dataset_root: &Path,
    config: &DatasetConfig,
    split: SplitSelector,
) -> Result<InfoFile, InfoError> {
    let mut samples = Vec::new();
    for entry in config.entries_in(split.split()) {
        let dir = annotation_dir(dataset_root, &config.group, entry);
        samples.extend(load_annotation_dir(&dir, &entry.id)?);
    }
    samples.sort_by(|a, b| (a.timestamp, &a.token).cmp(&(b.timestamp, &b.token)));
    let info = InfoFile {
        source_group: config.group.clone(),
        split,
        samples,
    };
    info.validate()?;
    Ok(info)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoDataset {
    pub config: DatasetConfig,
    pub config_path: PathBuf,
    pub annotation_dirs: Vec<PathBuf>,
}

/// Write `labels` as annotation tables of a pseudo T4dataset.
///
/// The non-annotated data must already sit at
/// `{root}/{out_group stem}/{id}/0/`. Samples are routed to datasets by their
/// `dataset_id`; samples without one are accepted only when the group holds a
/// single dataset. The group config is written to `{root}/{stem}.yaml`.
pub fn create_pseudo_t4dataset(
    non_annotated_root: &Path,
    labels: &InfoFile,
    out_group: &DatasetGroupId,
) -> Result<PseudoDataset, InfoError> {
    if out_group.kind != DatasetKind::Pseudo {
        return Err(InfoError::KindMismatch(out_group.kind));
    }
    labels.validate()?;
    labels.require_scores()?;
    let group_dir = non_annotated_root.join(out_group.stem());
    if !group_dir.is_dir() {
        return Err(InfoError::MissingDataset(group_dir.display().to_string()));
    }
    let mut ids: Vec<String> = Vec::new();
    for e in fs::read_dir(&group_dir)? {
        let e = e?;
        let name = e.file_name().to_string_lossy().into_owned();
        if e.file_type()?.is_dir() && is_dataset_id(&name) {
            ids.push(name);
        }
    }
    ids.sort();
    if ids.is_empty() {
        return Err(InfoError::MissingDataset(format!(
            "no dataset directories under {}",
            group_dir.display()
        )));
    }

    let mut routed: BTreeMap<&str, Vec<&SampleInfo>> =
        ids.iter().map(|id| (id.as_str(), Vec::new())).collect();
    for s in &labels.samples {
        let id = match (&s.dataset_id, ids.as_slice()) {
            (Some(id), _) => id.as_str(),
            (None, [only]) => only.as_str(),
            (None, _) => {
                return Err(InfoError::MissingDataset(format!(
                    "sample `{}` has no dataset id and {} datasets exist",
                    s.token,
                    ids.len()
                )))
            }
        };
        routed
            .get_mut(id)
            .ok_or_else(|| InfoError::MissingDataset(format!("dataset `{id}` not found")))?
            .push(s);
    }

    let entries: Vec<DatasetEntry> = ids
        .iter()
        .map(|id| DatasetEntry {
            id: id.clone(),
            webauto_version: 0,
            split: None,
        })
        .collect();
    let config = DatasetConfig::new(out_group.clone(), entries)
        .map_err(|e| InfoError::MissingDataset(e.to_string()))?;

    // Check every target before writing anything.
    let mut dirs = Vec::new();
    for entry in &config.entries {
        let version_dir = group_dir.join(&entry.id).join("0");
        if !version_dir.is_dir() {
            return Err(InfoError::MissingDataset(version_dir.display().to_string()));
        }
        let ann = version_dir.join("annotation");
        if ann.exists() && fs::read_dir(&ann)?.next().is_some() {
            return Err(InfoError::ExistingAnnotation(ann));
        }
        dirs.push(ann);
    }
    let config_path = non_annotated_root.join(out_group.config_filename());
    if config_path.exists() {
        return Err(InfoError::ExistingAnnotation(config_path));
    }

    for (dir, entry) in dirs.iter().zip(&config.entries) {
        fs::create_dir_all(dir)?;
        write_annotation_dir(dir, &routed[entry.id.as_str()])?;
    }
    fs::write(&config_path, config.to_yaml())?;
    Ok(PseudoDataset {
        config,
        config_path,
        annotation_dirs: dirs,
    })
}

fn write_annotation_dir(dir: &Path, samples: &[&SampleInfo]) -> Result<(), InfoError> {
    let categories: Vec<CategoryRow> = Category::ALL
        .into_iter()
        .map(|c| CategoryRow {
            token: format!("category-{c}"),
            name: c.as_str().to_string(),
            description: String::new(),
        })
        .collect();
    let mut sample_rows = Vec::with_capacity(samples.len());
    let mut instances = Vec::new();
    let mut annotations = Vec::new();
    for s in samples {
        sample_rows.push(SampleRow {
            token: s.token.clone(),
            timestamp: s.timestamp,
            lidar_path: s.lidar_path.clone(),
        });
        for (i, b) in s.boxes.iter().enumerate() {
            let token = format!("{}-{i}", s.token);
            let instance_token = format!("{token}-instance");
            instances.push(InstanceRow {
                token: instance_token.clone(),
                category_token: format!("category-{}", b.category),
                nbr_annotations: 1,
            });
            annotations.push(AnnotationRow {
                token,
                sample_token: s.token.clone(),
                instance_token,
                translation: b.center,
                size: b.size,
                yaw: b.yaw,
                score: b.score,
                num_lidar_pts: b.num_lidar_pts,
            });
        }
    }
    write_table(dir, SAMPLE_TABLE, &sample_rows)?;
    write_table(dir, CATEGORY_TABLE, &categories)?;
    write_table(dir, INSTANCE_TABLE, &instances)?;
    write_table(dir, ANNOTATION_TABLE, &annotations)?;
    debug_assert!(TABLES.iter().all(|t| dir.join(t).is_file()));
    Ok(())
}

/// Boxes scoring in `[lo, hi)` each add `weight` to a sample's score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBand {
    pub lo: f64,
    pub hi: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneCriteria {
    /// Added once per box of the category.
    #[serde(default)]
    pub class_weights: BTreeMap<Category, f64>,
    #[serde(default)]
    pub band: Option<ConfidenceBand>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneScore {
    pub token: String,
    pub score: f64,
}

/// Rank samples for mining, highest score first, ties by token.
pub fn scene_select(
    detections: &InfoFile,
    criteria: &SceneCriteria,
) -> Result<Vec<SceneScore>, InfoError> {
    if let Some(band) = criteria.band {
        if band.lo.is_nan() || band.hi.is_nan() || band.lo >= band.hi {
            return Err(InfoError::InvalidBand {
                lo: band.lo,
                hi: band.hi,
            });
        }
    }
    detections.require_scores()?;
    let mut ranked: Vec<SceneScore> = detections
        .samples
        .iter()
        .map(|s| {
            let mut score = 0.0;
            for b in &s.boxes {
                score += criteria.class_weights.get(&b.category).copied().unwrap_or(0.0);
                if let (Some(band), Some(conf)) = (criteria.band, b.score) {
                    if band.lo <= conf && conf < band.hi {
                        score += band.weight;
                    }
                }
            }
            SceneScore {
                token: s.token.clone(),
                score,
            }
        })
        .collect();
    ranked.sort_by(|a, b| match b.score.total_cmp(&a.score) {
        Ordering::Equal => a.token.cmp(&b.token),
        o => o,
    });
    Ok(ranked)
}
