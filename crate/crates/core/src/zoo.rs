//! Model zoo storage layout, registration and integrity checks.
//!
//! ```text
//! {root}/AWML/models/{algorithm}/t4pretrain/{YYYYMMDD}/
//! {root}/AWML/models/{algorithm}/t4base/v{X.Y}/
//! {root}/AWML/models/{algorithm}/{product}/v{X.Y.Z[-release|-project.n]}/
//! ```
//!
//! Each registered model directory carries a `deploy_metadata.yaml` listing
//! every artifact with its size and SHA-256 digest.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::DatasetGroupId;
use crate::lineage::{validate_edge, EdgePolicy, LineageError};
use crate::version::{ModelId, ModelKind, ModelVersion};

pub const MANIFEST_FILE: &str = "deploy_metadata.yaml";
const MODELS_PREFIX: &str = "AWML/models";

#[derive(Debug, Error)]
pub enum ZooError {
    #[error("{kind} model is missing required file {requirement}")]
    MissingRequiredFile {
        kind: ModelKind,
        requirement: FileRequirement,
    },
    #[error(transparent)]
    ForbiddenEdge(#[from] LineageError),
    #[error("{0} is already registered")]
    AlreadyRegistered(Box<ModelId>),
    #[error("registration of {0} is in progress elsewhere")]
    Locked(Box<ModelId>),
    #[error("no {MANIFEST_FILE} for {0}")]
    ManifestMissing(Box<ModelId>),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("duplicate artifact name `{0}`")]
    DuplicateFile(String),
    #[error("`{0}` is reserved for the manifest")]
    ReservedFileName(String),
    #[error("remote root `{0}` has no storage backend in this build")]
    RemoteRoot(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Directory of `id` under a zoo root, with a trailing slash.
///
/// `root` may be a local path or a URL prefix such as `s3://bucket`.
pub fn resolve_path(root: &str, id: &ModelId) -> String {
    let root = root.trim_end_matches('/');
    format!("{root}/{}/", model_key(id))
}

/// Opaque directory reserved for offline auto-labeling artifacts.
pub fn auto_label_path(root: &str) -> String {
    format!("{}/AWML/auto_label/", root.trim_end_matches('/'))
}

/// Root-relative key of a model directory, without a trailing slash.
pub fn model_key(id: &ModelId) -> String {
    let (kind_dir, version_dir) = match &id.version {
        ModelVersion::Pretrain { date } => ("t4pretrain".to_string(), date.to_string()),
        ModelVersion::Base { x, y } => ("t4base".to_string(), format!("v{x}.{y}")),
        v => {
            let product = v.product().expect("product family").to_string();
            let full = v.to_string();
            let (_, rest) = full.split_once('/').expect("product/version");
            (product, format!("v{rest}"))
        }
    };
    format!("{MODELS_PREFIX}/{}/{kind_dir}/{version_dir}", id.algorithm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileRequirement {
    Exact(&'static str),
    /// At least one file with this suffix.
    Suffix(&'static str),
}

impl FileRequirement {
    fn satisfied_by(&self, names: &BTreeSet<String>) -> bool {
        match self {
            FileRequirement::Exact(n) => names.contains(*n),
            FileRequirement::Suffix(s) => names.iter().any(|n| n.ends_with(s) && n.len() > s.len()),
        }
    }
}

impl fmt::Display for FileRequirement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FileRequirement::Exact(n) => f.write_str(n),
            FileRequirement::Suffix(s) => write!(f, "*{s}"),
        }
    }
}

/// Checkpoint, training config and log for every kind; deployable kinds
/// additionally need ONNX graphs and runtime parameter files.
pub fn required_files(kind: ModelKind) -> Vec<FileRequirement> {
    let mut req = vec![
        FileRequirement::Suffix(".pth"),
        FileRequirement::Exact("config.py"),
        FileRequirement::Exact("log.log"),
    ];
    if kind != ModelKind::Pretrain {
        req.push(FileRequirement::Suffix(".onnx"));
        req.push(FileRequirement::Suffix(".param.yaml"));
    }
    req
}

/// Minimal storage interface over a zoo root. Keys are `/`-separated and
/// relative to the root.
pub trait ArtifactStore {
    fn exists(&self, key: &str) -> io::Result<bool>;
    fn get(&self, key: &str) -> io::Result<Vec<u8>>;
    fn put(&self, key: &str, data: &[u8]) -> io::Result<()>;
    /// Names of the entries directly under `key`.
    fn list(&self, key: &str) -> io::Result<Vec<String>>;
    fn rename(&self, from: &str, to: &str) -> io::Result<()>;
    fn remove_all(&self, key: &str) -> io::Result<()>;
    /// Create an empty marker; `Ok(false)` if it already exists.
    fn create_exclusive(&self, key: &str) -> io::Result<bool>;
}

#[derive(Debug, Clone)]
pub struct LocalStore {
    root: PathBuf,
}

impl LocalStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        LocalStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, key: &str) -> PathBuf {
        key.split('/')
            .filter(|s| !s.is_empty())
            .fold(self.root.clone(), |p, s| p.join(s))
    }
}

impl ArtifactStore for LocalStore {
    fn exists(&self, key: &str) -> io::Result<bool> {
        self.path(key).try_exists()
    }

    fn get(&self, key: &str) -> io::Result<Vec<u8>> {
        fs::read(self.path(key))
    }

    fn put(&self, key: &str, data: &[u8]) -> io::Result<()> {
        let path = self.path(key);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, data)
    }

    fn list(&self, key: &str) -> io::Result<Vec<String>> {
        let mut names = Vec::new();
        for e in fs::read_dir(self.path(key))? {
            names.push(e?.file_name().to_string_lossy().into_owned());
        }
        names.sort();
        Ok(names)
    }

    fn rename(&self, from: &str, to: &str) -> io::Result<()> {
        let to = self.path(to);
        if let Some(dir) = to.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::rename(self.path(from), to)
    }

    fn remove_all(&self, key: &str) -> io::Result<()> {
        let path = self.path(key);
        let removed = if path.is_dir() {
            fs::remove_dir_all(path)
        } else {
            fs::remove_file(path)
        };
        match removed {
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(()),
            other => other,
        }
    }

    fn create_exclusive(&self, key: &str) -> io::Result<bool> {
        let path = self.path(key);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        match fs::OpenOptions::new().write(true).create_new(true).open(path) {
            Ok(_) => Ok(true),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Ok(false),
            Err(e) => Err(e),
        }
    }
}

fn is_remote(root: &str) -> bool {
    root.contains("://")
}

/// Open the store behind `root`. Only local roots have a backend.
pub fn open_store(root: &str) -> Result<LocalStore, ZooError> {
    if is_remote(root) {
        return Err(ZooError::RemoteRoot(root.to_string()));
    }
    Ok(LocalStore::new(root))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub name: String,
    pub size: u64,
    /// Hex SHA-256.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZooManifest {
    pub model: ModelId,
    #[serde(default)]
    pub parent: Option<ModelId>,
    #[serde(default)]
    pub datasets: Vec<DatasetGroupId>,
    pub files: Vec<FileRecord>,
    /// Root-relative model directory; not stored in the manifest.
    #[serde(skip)]
    pub directory: String,
}

impl ZooManifest {
    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("manifest serializes")
    }

    pub fn from_yaml(text: &str) -> Result<Self, ZooError> {
        let m: ZooManifest =
            serde_yaml::from_str(text).map_err(|e| ZooError::InvalidManifest(e.to_string()))?;
        let mut seen = HashSet::new();
        for f in &m.files {
            if !seen.insert(&f.name) {
                return Err(ZooError::DuplicateFile(f.name.clone()));
            }
        }
        Ok(m)
    }
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// A model's artifacts and provenance, ready to register.
#[derive(Debug, Clone)]
pub struct Registration<'a> {
    pub id: &'a ModelId,
    pub files: &'a [PathBuf],
    pub parent: Option<&'a ModelId>,
    pub dataset_refs: &'a [DatasetGroupId],
    pub policy: EdgePolicy,
}

struct LockGuard<'a, S: ArtifactStore + ?Sized> {
    store: &'a S,
    key: String,
}

impl<S: ArtifactStore + ?Sized> Drop for LockGuard<'_, S> {
    fn drop(&mut self) {
        let _ = self.store.remove_all(&self.key);
    }
}

/// Copy artifacts into the model directory and write the manifest.
///
/// Files are staged next to the target and moved into place in one rename,
/// so a failed registration leaves no model directory behind.
pub fn register<S: ArtifactStore + ?Sized>(
    store: &S,
    reg: &Registration<'_>,
) -> Result<ZooManifest, ZooError> {
    let id = reg.id;
    validate_edge(id, reg.parent, reg.policy)?;

    let mut names = BTreeSet::new();
    let mut sources = BTreeMap::new();
    for path in reg.files {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .ok_or_else(|| ZooError::InvalidManifest(format!("{} has no file name", path.display())))?;
        if name == MANIFEST_FILE {
            return Err(ZooError::ReservedFileName(name));
        }
        if !names.insert(name.clone()) {
            return Err(ZooError::DuplicateFile(name));
        }
        sources.insert(name, path);
    }
    for requirement in required_files(id.kind()) {
        if !requirement.satisfied_by(&names) {
            return Err(ZooError::MissingRequiredFile {
                kind: id.kind(),
                requirement,
            });
        }
    }

    let key = model_key(id);
    if store.exists(&key)? {
        return Err(ZooError::AlreadyRegistered(Box::new(id.clone())));
    }
    let (parent_key, leaf) = key.rsplit_once('/').expect("nested key");
    let lock_key = format!("{parent_key}/.{leaf}.lock");
    if !store.create_exclusive(&lock_key)? {
        return Err(ZooError::Locked(Box::new(id.clone())));
    }
    let _lock = LockGuard {
        store,
        key: lock_key,
    };
    if store.exists(&key)? {
        return Err(ZooError::AlreadyRegistered(Box::new(id.clone())));
    }

    let staging = format!("{parent_key}/.{leaf}.staging");
    store.remove_all(&staging)?;
    let result = (|| {
        let mut files = Vec::with_capacity(sources.len());
        for (name, path) in &sources {
            let data = fs::read(path)?;
            store.put(&format!("{staging}/{name}"), &data)?;
            files.push(FileRecord {
                name: name.clone(),
                size: data.len() as u64,
                digest: sha256_hex(&data),
            });
        }
        let manifest = ZooManifest {
            model: id.clone(),
            parent: reg.parent.cloned(),
            datasets: reg.dataset_refs.to_vec(),
            files,
            directory: key.clone(),
        };
        store.put(&format!("{staging}/{MANIFEST_FILE}"), manifest.to_yaml().as_bytes())?;
        store.rename(&staging, &key)?;
        Ok(manifest)
    })();
    if result.is_err() {
        let _ = store.remove_all(&staging);
    }
    result
}

pub fn load_manifest<S: ArtifactStore + ?Sized>(
    store: &S,
    id: &ModelId,
) -> Result<ZooManifest, ZooError> {
    let key = model_key(id);
    let manifest_key = format!("{key}/{MANIFEST_FILE}");
    if !store.exists(&manifest_key)? {
        return Err(ZooError::ManifestMissing(Box::new(id.clone())));
    }
    let text = String::from_utf8(store.get(&manifest_key)?)
        .map_err(|e| ZooError::InvalidManifest(e.to_string()))?;
    let mut manifest = ZooManifest::from_yaml(&text)?;
    manifest.directory = key;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "finding", rename_all = "snake_case")]
pub enum IntegrityFinding {
    MissingFile { name: String },
    DigestMismatch { name: String, expected: String, actual: String },
    UnexpectedFile { name: String },
    ModelMismatch { recorded: ModelId },
}

impl fmt::Display for IntegrityFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntegrityFinding::MissingFile { name } => write!(f, "missing file {name}"),
            IntegrityFinding::DigestMismatch { name, .. } => write!(f, "digest mismatch {name}"),
            IntegrityFinding::UnexpectedFile { name } => write!(f, "unexpected file {name}"),
            IntegrityFinding::ModelMismatch { recorded } => {
                write!(f, "manifest records a different model: {recorded}")
            }
        }
    }
}

/// Recompute digests of a registered model. An empty list means intact.
pub fn verify<S: ArtifactStore + ?Sized>(
    store: &S,
    id: &ModelId,
) -> Result<Vec<IntegrityFinding>, ZooError> {
    let manifest = load_manifest(store, id)?;
    let mut findings = Vec::new();
    if &manifest.model != id {
        findings.push(IntegrityFinding::ModelMismatch {
            recorded: manifest.model.clone(),
        });
    }
    let key = &manifest.directory;
    for f in &manifest.files {
        let file_key = format!("{key}/{}", f.name);
        if !store.exists(&file_key)? {
            findings.push(IntegrityFinding::MissingFile {
                name: f.name.clone(),
            });
            continue;
        }
        let actual = sha256_hex(&store.get(&file_key)?);
        if actual != f.digest {
            findings.push(IntegrityFinding::DigestMismatch {
                name: f.name.clone(),
                expected: f.digest.clone(),
                actual,
            });
        }
    }
    let listed: HashSet<&str> = manifest.files.iter().map(|f| f.name.as_str()).collect();
    for name in store.list(key)? {
        if name != MANIFEST_FILE && !listed.contains(name.as_str()) {
            findings.push(IntegrityFinding::UnexpectedFile { name });
        }
    }
    Ok(findings)
}
