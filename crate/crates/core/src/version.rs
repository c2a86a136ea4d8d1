//! Model identifiers: `<algorithm> <model-name>/<version>`.
//!
//! Grammar:
//!
//! ```text
//! model_id   = algorithm SP path
//! algorithm  = family [ "-" qualifier ]
//! path       = "pretrain/" DATE8
//!            | "base/" INT "." INT
//!            | name "/" INT "." INT "." INT [ "-release" | "-" name "." INT ]
//! name       = lowercase alnum+, not one of base / pretrain / release
//! ```
//!
//! Ordering follows semantic versioning except for project qualifiers,
//! which sort *above* the plain product triple they were fine-tuned from.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

const RESERVED: [&str; 3] = ["base", "pretrain", "release"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VersionError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("`{0}` is a reserved model name")]
    ReservedName(String),
    #[error("{0} models carry no major version")]
    InvalidKind(&'static str),
    #[error("cannot apply {part} bump to {kind} model")]
    InvalidBump { part: &'static str, kind: &'static str },
}

fn syntax(pos: usize, msg: impl Into<String>) -> VersionError {
    VersionError::Syntax {
        pos,
        msg: msg.into(),
    }
}

/// Algorithm family plus an optional modality or variant suffix
/// (`BEVFusion-L`, `CenterPoint-offline`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AlgorithmName {
    family: String,
    qualifier: Option<String>,
}

impl AlgorithmName {
    pub fn new(family: &str, qualifier: Option<&str>) -> Result<Self, VersionError> {
        let text = match qualifier {
            Some(q) => format!("{family}-{q}"),
            None => family.to_string(),
        };
        let parsed: AlgorithmName = text.parse()?;
        if parsed.family != family || parsed.qualifier.as_deref() != qualifier {
            return Err(syntax(0, format!("`{text}` is not a canonical algorithm name")));
        }
        Ok(parsed)
    }

    pub fn family(&self) -> &str {
        &self.family
    }

    pub fn qualifier(&self) -> Option<&str> {
        self.qualifier.as_deref()
    }

    fn parse_at(text: &str, offset: usize) -> Result<Self, VersionError> {
        if text.is_empty() {
            return Err(syntax(offset, "empty algorithm name"));
        }
        if let Some(i) = text.find(|c: char| c.is_whitespace() || c == '/') {
            return Err(syntax(offset + i, "algorithm name contains whitespace or '/'"));
        }
        match text.split_once('-') {
            None => Ok(AlgorithmName {
                family: text.to_string(),
                qualifier: None,
            }),
            Some(("", _)) => Err(syntax(offset, "empty algorithm family")),
            Some((_, "")) => Err(syntax(offset + text.len(), "empty algorithm qualifier")),
            Some((family, qualifier)) => Ok(AlgorithmName {
                family: family.to_string(),
                qualifier: Some(qualifier.to_string()),
            }),
        }
    }
}

impl FromStr for AlgorithmName {
    type Err = VersionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse_at(s, 0)
    }
}

impl fmt::Display for AlgorithmName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.qualifier {
            Some(q) => write!(f, "{}-{}", self.family, q),
            None => f.write_str(&self.family),
        }
    }
}

/// A validated calendar date in `YYYYMMDD` form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PretrainDate(u32);

impl PretrainDate {
    pub fn new(yyyymmdd: u32) -> Result<Self, VersionError> {
        Self::parse_at(&format!("{yyyymmdd:08}"), 0)
    }

    pub fn as_u32(self) -> u32 {
        self.0
    }

    fn parse_at(text: &str, offset: usize) -> Result<Self, VersionError> {
        if text.len() != 8 || !text.bytes().all(|b| b.is_ascii_digit()) {
            return Err(syntax(offset, "pretrain date must be 8 digits (YYYYMMDD)"));
        }
        if chrono::NaiveDate::parse_from_str(text, "%Y%m%d").is_err() {
            return Err(syntax(offset, format!("`{text}` is not a calendar date")));
        }
        Ok(PretrainDate(text.parse().expect("8 ascii digits")))
    }
}

impl fmt::Display for PretrainDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:08}", self.0)
    }
}

/// Lowercase alphanumeric product or project name.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelName(String);

impl ModelName {
    pub fn new(name: &str) -> Result<Self, VersionError> {
        Self::parse_at(name, 0)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn parse_at(text: &str, offset: usize) -> Result<Self, VersionError> {
        if text.is_empty() {
            return Err(syntax(offset, "empty name"));
        }
        if let Some(i) = text
            .bytes()
            .position(|b| !(b.is_ascii_lowercase() || b.is_ascii_digit()))
        {
            return Err(syntax(offset + i, "names must be lowercase alphanumeric"));
        }
        if RESERVED.contains(&text) {
            return Err(VersionError::ReservedName(text.to_string()));
        }
        Ok(ModelName(text.to_string()))
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for ModelName {
    type Err = VersionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

/// `X.Y.Z` of a product-family model. `X.Y` is the base line it was tuned from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub x: u64,
    pub y: u64,
    pub z: u64,
}

impl Triple {
    pub const fn new(x: u64, y: u64, z: u64) -> Self {
        Triple { x, y, z }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.x, self.y, self.z)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ModelVersion {
    Pretrain {
        date: PretrainDate,
    },
    Base {
        x: u64,
        y: u64,
    },
    Product {
        product: ModelName,
        triple: Triple,
    },
    ProductRelease {
        product: ModelName,
        triple: Triple,
    },
    /// Site-specific band-aid model; `n` starts at 1.
    Project {
        product: ModelName,
        triple: Triple,
        project: ModelName,
        n: u64,
    },
}

/// Model kind without its version payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Pretrain,
    Base,
    Product,
    ProductRelease,
    Project,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Pretrain => "pretrain",
            ModelKind::Base => "base",
            ModelKind::Product => "product",
            ModelKind::ProductRelease => "product-release",
            ModelKind::Project => "project",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which component a version bump increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BumpPart {
    /// Breaking change: `X.Y -> (X+1).0`, `X.Y.Z -> (X+1).0.0`.
    Major,
    /// Retrain without runtime-parameter changes: `X.Y -> X.(Y+1)`, `X.Y.Z -> X.(Y+1).0`.
    Minor,
    /// Product update: `X.Y.Z -> X.Y.(Z+1)`.
    Patch,
    /// Project update: `-{project}.n -> -{project}.(n+1)`.
    Project,
}

impl BumpPart {
    fn as_str(self) -> &'static str {
        match self {
            BumpPart::Major => "major",
            BumpPart::Minor => "minor",
            BumpPart::Patch => "patch",
            BumpPart::Project => "project",
        }
    }
}

impl ModelVersion {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelVersion::Pretrain { .. } => ModelKind::Pretrain,
            ModelVersion::Base { .. } => ModelKind::Base,
            ModelVersion::Product { .. } => ModelKind::Product,
            ModelVersion::ProductRelease { .. } => ModelKind::ProductRelease,
            ModelVersion::Project { .. } => ModelKind::Project,
        }
    }

    pub fn product(&self) -> Option<&ModelName> {
        match self {
            ModelVersion::Product { product, .. }
            | ModelVersion::ProductRelease { product, .. }
            | ModelVersion::Project { product, .. } => Some(product),
            _ => None,
        }
    }

    pub fn triple(&self) -> Option<Triple> {
        match self {
            ModelVersion::Product { triple, .. }
            | ModelVersion::ProductRelease { triple, .. }
            | ModelVersion::Project { triple, .. } => Some(*triple),
            _ => None,
        }
    }

    /// `(X, Y)` of the base line this version belongs to.
    pub fn base_line(&self) -> Option<(u64, u64)> {
        match self {
            ModelVersion::Base { x, y } => Some((*x, *y)),
            _ => self.triple().map(|t| (t.x, t.y)),
        }
    }

    /// Major version zero marks initial development.
    pub fn is_development(&self) -> Result<bool, VersionError> {
        match self.base_line() {
            Some((x, _)) => Ok(x == 0),
            None => Err(VersionError::InvalidKind("pretrain")),
        }
    }

    pub fn bump(&self, part: BumpPart) -> Result<ModelVersion, VersionError> {
        let invalid = || VersionError::InvalidBump {
            part: part.as_str(),
            kind: self.kind().as_str(),
        };
        match (self, part) {
            (ModelVersion::Base { x, .. }, BumpPart::Major) => {
                Ok(ModelVersion::Base { x: x + 1, y: 0 })
            }
            (ModelVersion::Base { x, y }, BumpPart::Minor) => {
                Ok(ModelVersion::Base { x: *x, y: y + 1 })
            }
            (ModelVersion::Product { product, triple }, BumpPart::Major) => {
                Ok(ModelVersion::Product {
                    product: product.clone(),
                    triple: Triple::new(triple.x + 1, 0, 0),
                })
            }
            (ModelVersion::Product { product, triple }, BumpPart::Minor) => {
                Ok(ModelVersion::Product {
                    product: product.clone(),
                    triple: Triple::new(triple.x, triple.y + 1, 0),
                })
            }
            (ModelVersion::Product { product, triple }, BumpPart::Patch) => {
                Ok(ModelVersion::Product {
                    product: product.clone(),
                    triple: Triple::new(triple.x, triple.y, triple.z + 1),
                })
            }
            (
                ModelVersion::Project {
                    product,
                    triple,
                    project,
                    n,
                },
                BumpPart::Project,
            ) => Ok(ModelVersion::Project {
                product: product.clone(),
                triple: *triple,
                project: project.clone(),
                n: n + 1,
            }),
            _ => Err(invalid()),
        }
    }

    fn parse_at(text: &str, offset: usize) -> Result<Self, VersionError> {
        let Some(slash) = text.find('/') else {
            return Err(syntax(offset, "expected `<model-name>/<version>`"));
        };
        let (name, rest) = (&text[..slash], &text[slash + 1..]);
        let rest_offset = offset + slash + 1;
        match name {
            "pretrain" => Ok(ModelVersion::Pretrain {
                date: PretrainDate::parse_at(rest, rest_offset)?,
            }),
            "base" => {
                let mut cur = Cursor::new(rest, rest_offset);
                let x = cur.int()?;
                cur.expect('.')?;
                let y = cur.int()?;
                cur.end()?;
                Ok(ModelVersion::Base { x, y })
            }
            _ => {
                let product = ModelName::parse_at(name, offset)?;
                let mut cur = Cursor::new(rest, rest_offset);
                let x = cur.int()?;
                cur.expect('.')?;
                let y = cur.int()?;
                cur.expect('.')?;
                let z = cur.int()?;
                let triple = Triple::new(x, y, z);
                if cur.is_done() {
                    return Ok(ModelVersion::Product { product, triple });
                }
                cur.expect('-')?;
                let qual_start = cur.pos();
                let qual = cur.take_while(|b| b != b'.');
                if qual == "release" && cur.is_done() {
                    return Ok(ModelVersion::ProductRelease { product, triple });
                }
                let project = ModelName::parse_at(qual, qual_start)?;
                cur.expect('.')?;
                let n_pos = cur.pos();
                let n = cur.int()?;
                if n == 0 {
                    return Err(syntax(n_pos, "project index starts at 1"));
                }
                cur.end()?;
                Ok(ModelVersion::Project {
                    product,
                    triple,
                    project,
                    n,
                })
            }
        }
    }
}

impl fmt::Display for ModelVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelVersion::Pretrain { date } => write!(f, "pretrain/{date}"),
            ModelVersion::Base { x, y } => write!(f, "base/{x}.{y}"),
            ModelVersion::Product { product, triple } => write!(f, "{product}/{triple}"),
            ModelVersion::ProductRelease { product, triple } => {
                write!(f, "{product}/{triple}-release")
            }
            ModelVersion::Project {
                product,
                triple,
                project,
                n,
            } => write!(f, "{product}/{triple}-{project}.{n}"),
        }
    }
}

impl FromStr for ModelVersion {
    type Err = VersionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse_at(s, 0)
    }
}

struct Cursor<'a> {
    text: &'a str,
    at: usize,
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str, offset: usize) -> Self {
        Cursor {
            text,
            at: 0,
            offset,
        }
    }

    fn pos(&self) -> usize {
        self.offset + self.at
    }

    fn is_done(&self) -> bool {
        self.at == self.text.len()
    }

    fn peek(&self) -> Option<u8> {
        self.text.as_bytes().get(self.at).copied()
    }

    fn take_while(&mut self, pred: impl Fn(u8) -> bool) -> &'a str {
        let start = self.at;
        while self.peek().is_some_and(&pred) {
            self.at += 1;
        }
        &self.text[start..self.at]
    }

    fn expect(&mut self, c: char) -> Result<(), VersionError> {
        if self.peek() == Some(c as u8) {
            self.at += 1;
            Ok(())
        } else {
            Err(syntax(self.pos(), format!("expected `{c}`")))
        }
    }

    /// Decimal integer without leading zeros.
    fn int(&mut self) -> Result<u64, VersionError> {
        let start = self.pos();
        let digits = self.take_while(|b| b.is_ascii_digit());
        if digits.is_empty() {
            return Err(syntax(start, "expected an integer"));
        }
        if digits.len() > 1 && digits.starts_with('0') {
            return Err(syntax(start, "leading zero in version component"));
        }
        digits
            .parse()
            .map_err(|_| syntax(start, "version component overflows u64"))
    }

    fn end(&self) -> Result<(), VersionError> {
        if self.is_done() {
            Ok(())
        } else {
            Err(syntax(self.pos(), "unexpected trailing characters"))
        }
    }
}

/// Result of comparing two model ids by version precedence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precedence {
    Less,
    Equal,
    Greater,
    Incomparable,
}

impl Precedence {
    pub fn as_str(self) -> &'static str {
        match self {
            Precedence::Less => "less",
            Precedence::Equal => "equal",
            Precedence::Greater => "greater",
            Precedence::Incomparable => "incomparable",
        }
    }

    pub fn reverse(self) -> Precedence {
        match self {
            Precedence::Less => Precedence::Greater,
            Precedence::Greater => Precedence::Less,
            other => other,
        }
    }
}

impl From<Ordering> for Precedence {
    fn from(o: Ordering) -> Self {
        match o {
            Ordering::Less => Precedence::Less,
            Ordering::Equal => Precedence::Equal,
            Ordering::Greater => Precedence::Greater,
        }
    }
}

impl fmt::Display for Precedence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A fully qualified model identity, e.g. `CenterPoint bus/1.2.3-odaiba.2`.
///
/// `Ord` on this type is lexical order of the canonical text and exists
/// only so ids can live in sorted collections. Use [`ModelId::precedence`]
/// for version ordering.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelId {
    pub algorithm: AlgorithmName,
    pub version: ModelVersion,
}

impl ModelId {
    pub fn new(algorithm: AlgorithmName, version: ModelVersion) -> Self {
        ModelId { algorithm, version }
    }

    pub fn kind(&self) -> ModelKind {
        self.version.kind()
    }

    pub fn with_version(&self, version: ModelVersion) -> ModelId {
        ModelId {
            algorithm: self.algorithm.clone(),
            version,
        }
    }

    pub fn precedence(&self, other: &ModelId) -> Precedence {
        if self.algorithm != other.algorithm {
            return Precedence::Incomparable;
        }
        compare_versions(&self.version, &other.version)
    }
}

/// Version precedence within one algorithm.
pub fn compare_versions(a: &ModelVersion, b: &ModelVersion) -> Precedence {
    use ModelVersion::*;
    match (a, b) {
        (Pretrain { date: da }, Pretrain { date: db }) => da.cmp(db).into(),
        (Base { x: ax, y: ay }, Base { x: bx, y: by }) => (ax, ay).cmp(&(bx, by)).into(),
        (Pretrain { .. } | Base { .. }, _) | (_, Pretrain { .. } | Base { .. }) => {
            Precedence::Incomparable
        }
        _ => {
            if a.product() != b.product() {
                return Precedence::Incomparable;
            }
            let (ta, tb) = (a.triple().unwrap(), b.triple().unwrap());
            if ta != tb {
                return ta.cmp(&tb).into();
            }
            match (a, b) {
                (Product { .. }, Product { .. }) => Precedence::Equal,
                (ProductRelease { .. }, ProductRelease { .. }) => Precedence::Equal,
                // Qualified versions are newer than the plain triple.
                (Product { .. }, _) => Precedence::Less,
                (_, Product { .. }) => Precedence::Greater,
                (
                    Project {
                        project: pa, n: na, ..
                    },
                    Project {
                        project: pb, n: nb, ..
                    },
                ) if pa == pb => na.cmp(nb).into(),
                _ => Precedence::Incomparable,
            }
        }
    }
}

/// Parse `<algorithm> <model-name>/<version>`.
pub fn parse_model_id(text: &str) -> Result<ModelId, VersionError> {
    if let Some(i) = text.find(['\n', '\r']) {
        return Err(syntax(i, "model id must be a single line"));
    }
    let Some(sp) = text.find(' ') else {
        return Err(syntax(text.len(), "expected a space between algorithm and model path"));
    };
    let algorithm = AlgorithmName::parse_at(&text[..sp], 0)?;
    let version = ModelVersion::parse_at(&text[sp + 1..], sp + 1)?;
    Ok(ModelId { algorithm, version })
}

pub fn format_model_id(id: &ModelId) -> String {
    id.to_string()
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.algorithm, self.version)
    }
}

impl FromStr for ModelId {
    type Err = VersionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_model_id(s)
    }
}

impl PartialOrd for ModelId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ModelId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.to_string().cmp(&other.to_string())
    }
}

impl Serialize for ModelId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ModelId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Serialize for AlgorithmName {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AlgorithmName {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Serialize for ModelName {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for ModelName {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl PartialOrd for AlgorithmName {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for AlgorithmName {
    fn cmp(&self, other: &Self) -> Ordering {
        (&self.family, &self.qualifier).cmp(&(&other.family, &other.qualifier))
    }
}
