//! Fine-tuning lineage rules and release planning.
//!
//! Lineage edges run child <- parent:
//!
//! * pretrain models are trained from scratch,
//! * base models are fine-tuned from a pretrain model, never from another base,
//! * product models `X.Y.Z` and product-release models are fine-tuned from base `X.Y`,
//! * project models are fine-tuned from the product they extend or from an
//!   earlier project model on the same product triple.
//!
//! [`plan_release`] turns a release event into the full set of version
//! transitions; [`apply_plan`] folds a plan into a new [`RegistryState`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetGroupId, Split};
use crate::version::{
    AlgorithmName, BumpPart, ModelId, ModelKind, ModelName, ModelVersion, Precedence, Triple,
};

/// Name of the lineage rule an edge violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeRule {
    PretrainHasParent,
    MissingParent,
    CrossAlgorithm,
    BaseFromBase,
    BaseFromNonPretrain,
    /// A base model derived from a product-release model.
    ReleaseOfBase,
    ProductFromProduct,
    ProductFromNonBase,
    BaseLineMismatch,
    ProjectFromForeignModel,
    ReleaseFromNonBase,
}

impl fmt::Display for EdgeRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LineageError {
    #[error("forbidden edge {child} <- {}: {rule}", parent.as_ref().map(ToString::to_string).unwrap_or_else(|| "(none)".into()))]
    ForbiddenEdge {
        rule: EdgeRule,
        child: Box<ModelId>,
        parent: Option<Box<ModelId>>,
    },
    #[error("split policy violated by {model}: trained on [{}]", splits.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "))]
    SplitPolicyViolation {
        model: Box<ModelId>,
        splits: BTreeSet<Split>,
    },
    #[error("no model matches {0}")]
    UnknownModel(String),
    #[error("no supported base model for {0}")]
    NoSupportedBase(String),
    #[error("{0} already exists")]
    PlanConflict(Box<ModelId>),
    #[error("invalid registry: {0}")]
    InvalidRegistry(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgePolicy {
    /// Permit a fusion product (e.g. `BEVFusion-CL`) to be tuned from a base
    /// of the same family with a different qualifier (e.g. `BEVFusion-L`).
    pub allow_cross_algorithm: bool,
}

pub fn validate_edge(
    child: &ModelId,
    parent: Option<&ModelId>,
    policy: EdgePolicy,
) -> Result<(), LineageError> {
    let forbid = |rule| LineageError::ForbiddenEdge {
        rule,
        child: Box::new(child.clone()),
        parent: parent.cloned().map(Box::new),
    };
    let parent = match (child.kind(), parent) {
        (ModelKind::Pretrain, None) => return Ok(()),
        (ModelKind::Pretrain, Some(_)) => return Err(forbid(EdgeRule::PretrainHasParent)),
        (_, None) => return Err(forbid(EdgeRule::MissingParent)),
        (_, Some(p)) => p,
    };
    if child.algorithm != parent.algorithm {
        let fusion_from_lidar = policy.allow_cross_algorithm
            && child.algorithm.family() == parent.algorithm.family()
            && child.kind() == ModelKind::Product
            && parent.kind() == ModelKind::Base;
        if !fusion_from_lidar {
            return Err(forbid(EdgeRule::CrossAlgorithm));
        }
    }
    let (cv, pv) = (&child.version, &parent.version);
    use ModelVersion as V;
    match cv {
        V::Pretrain { .. } => unreachable!("handled above"),
        V::Base { .. } => match pv {
            V::Pretrain { .. } => Ok(()),
            V::Base { .. } => Err(forbid(EdgeRule::BaseFromBase)),
            V::ProductRelease { .. } => Err(forbid(EdgeRule::ReleaseOfBase)),
            _ => Err(forbid(EdgeRule::BaseFromNonPretrain)),
        },
        V::Product { .. } | V::ProductRelease { .. } => {
            let (x, y) = cv.base_line().expect("product family has a base line");
            match pv {
                V::Base { x: px, y: py } if (*px, *py) == (x, y) => Ok(()),
                V::Base { .. } => Err(forbid(EdgeRule::BaseLineMismatch)),
                _ if cv.kind() == ModelKind::ProductRelease => {
                    Err(forbid(EdgeRule::ReleaseFromNonBase))
                }
                V::Pretrain { .. } => Err(forbid(EdgeRule::ProductFromNonBase)),
                _ => Err(forbid(EdgeRule::ProductFromProduct)),
            }
        }
        V::Project {
            product, triple, ..
        } => match pv {
            V::Product {
                product: pp,
                triple: pt,
            }
            | V::Project {
                product: pp,
                triple: pt,
                ..
            } if pp == product && pt == triple => Ok(()),
            _ => Err(forbid(EdgeRule::ProjectFromForeignModel)),
        },
    }
}

/// One trained model and where it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageRecord {
    pub child: ModelId,
    #[serde(default)]
    pub parent: Option<ModelId>,
    #[serde(default, rename = "datasets")]
    pub dataset_refs: Vec<DatasetGroupId>,
    #[serde(rename = "splits")]
    pub splits_used: BTreeSet<Split>,
    #[serde(default)]
    pub ros_params_changed: bool,
}

/// Product models train on `train` only; product-release models on every split.
pub fn check_split_policy(rec: &LineageRecord) -> Result<(), LineageError> {
    let violation = || LineageError::SplitPolicyViolation {
        model: Box::new(rec.child.clone()),
        splits: rec.splits_used.clone(),
    };
    if rec.splits_used.is_empty() {
        return Err(violation());
    }
    let ok = match rec.child.kind() {
        ModelKind::Product => rec.splits_used == BTreeSet::from([Split::Train]),
        ModelKind::ProductRelease => rec.splits_used == BTreeSet::from(Split::ALL),
        _ => true,
    };
    if ok {
        Ok(())
    } else {
        Err(violation())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryState {
    #[serde(default)]
    pub models: BTreeSet<ModelId>,
    #[serde(default)]
    pub lineage: Vec<LineageRecord>,
    #[serde(default)]
    pub supported_base_majors: BTreeMap<AlgorithmName, BTreeSet<u64>>,
}

impl RegistryState {
    /// State holding `models` with supported majors inferred from the bases.
    pub fn from_models(models: impl IntoIterator<Item = ModelId>) -> Self {
        let models: BTreeSet<ModelId> = models.into_iter().collect();
        let mut supported_base_majors: BTreeMap<AlgorithmName, BTreeSet<u64>> = BTreeMap::new();
        for m in &models {
            if let ModelVersion::Base { x, .. } = m.version {
                supported_base_majors
                    .entry(m.algorithm.clone())
                    .or_default()
                    .insert(x);
            }
        }
        RegistryState {
            models,
            lineage: Vec::new(),
            supported_base_majors,
        }
    }

    pub fn from_yaml(text: &str) -> Result<Self, LineageError> {
        let state: RegistryState = serde_yaml::from_str(text)
            .map_err(|e| LineageError::InvalidRegistry(e.to_string()))?;
        state.validate()?;
        Ok(state)
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("registry serializes")
    }

    pub fn validate(&self) -> Result<(), LineageError> {
        let mut children = BTreeSet::new();
        for rec in &self.lineage {
            if !self.models.contains(&rec.child) {
                return Err(LineageError::InvalidRegistry(format!(
                    "lineage child {} is not a registered model",
                    rec.child
                )));
            }
            if let Some(p) = &rec.parent {
                if !self.models.contains(p) {
                    return Err(LineageError::InvalidRegistry(format!(
                        "lineage parent {p} of {} is not a registered model",
                        rec.child
                    )));
                }
            }
            if !children.insert(&rec.child) {
                return Err(LineageError::InvalidRegistry(format!(
                    "more than one lineage record for {}",
                    rec.child
                )));
            }
        }
        Ok(())
    }

    pub fn algorithms(&self) -> BTreeSet<&AlgorithmName> {
        self.models.iter().map(|m| &m.algorithm).collect()
    }

    pub fn lineage_of(&self, child: &ModelId) -> Option<&LineageRecord> {
        self.lineage.iter().find(|r| &r.child == child)
    }

    fn versions<'a>(&'a self, alg: &'a AlgorithmName) -> impl Iterator<Item = &'a ModelVersion> {
        self.models
            .iter()
            .filter(move |m| &m.algorithm == alg)
            .map(|m| &m.version)
    }

    /// Supported majors; falls back to every major that has a base model.
    pub fn majors(&self, alg: &AlgorithmName) -> BTreeSet<u64> {
        match self.supported_base_majors.get(alg) {
            Some(set) => set.clone(),
            None => self
                .versions(alg)
                .filter_map(|v| match v {
                    ModelVersion::Base { x, .. } => Some(*x),
                    _ => None,
                })
                .collect(),
        }
    }

    fn latest_base(&self, alg: &AlgorithmName, major: u64) -> Option<(u64, u64)> {
        self.versions(alg)
            .filter_map(|v| match v {
                ModelVersion::Base { x, y } if *x == major => Some((*x, *y)),
                _ => None,
            })
            .max()
    }

    fn latest_pretrain(&self, alg: &AlgorithmName) -> Option<ModelVersion> {
        self.versions(alg)
            .filter(|v| v.kind() == ModelKind::Pretrain)
            .max_by(|a, b| match (a, b) {
                (ModelVersion::Pretrain { date: da }, ModelVersion::Pretrain { date: db }) => {
                    da.cmp(db)
                }
                _ => unreachable!(),
            })
            .cloned()
    }

    fn products(&self, alg: &AlgorithmName) -> BTreeSet<String> {
        self.versions(alg)
            .filter(|v| v.kind() == ModelKind::Product)
            .filter_map(|v| v.product().map(|p| p.as_str().to_string()))
            .collect()
    }

    /// Highest plain product triple for `product`, optionally restricted to one major.
    fn latest_product(
        &self,
        alg: &AlgorithmName,
        product: &ModelName,
        major: Option<u64>,
    ) -> Option<Triple> {
        self.versions(alg)
            .filter_map(|v| match v {
                ModelVersion::Product { product: p, triple }
                    if p == product && major.is_none_or(|m| triple.x == m) =>
                {
                    Some(*triple)
                }
                _ => None,
            })
            .max()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum ReleaseEvent {
    BreakingChange {
        algorithm: AlgorithmName,
    },
    BaseUpdate {
        algorithm: AlgorithmName,
    },
    NewProduct {
        algorithm: AlgorithmName,
        product: ModelName,
    },
    ProductUpdate {
        algorithm: AlgorithmName,
        product: ModelName,
    },
    NewProject {
        algorithm: AlgorithmName,
        product: ModelName,
        project: ModelName,
    },
    ProjectUpdate {
        algorithm: AlgorithmName,
        product: ModelName,
        project: ModelName,
    },
    MakeRelease {
        algorithm: AlgorithmName,
        product: ModelName,
    },
}

impl ReleaseEvent {
    pub fn algorithm(&self) -> &AlgorithmName {
        match self {
            ReleaseEvent::BreakingChange { algorithm }
            | ReleaseEvent::BaseUpdate { algorithm }
            | ReleaseEvent::NewProduct { algorithm, .. }
            | ReleaseEvent::ProductUpdate { algorithm, .. }
            | ReleaseEvent::NewProject { algorithm, .. }
            | ReleaseEvent::ProjectUpdate { algorithm, .. }
            | ReleaseEvent::MakeRelease { algorithm, .. } => algorithm,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanOptions {
    /// Majors to drop from support instead of updating (base update and
    /// breaking change only).
    #[serde(default)]
    pub deprecate_majors: BTreeSet<u64>,
    /// Product update moves `X.Y.Z` to `X.(Y+1).0` by chaining a base update.
    #[serde(default)]
    pub bump_base_line: bool,
    /// Dataset groups recorded on every new lineage record.
    #[serde(default)]
    pub datasets: Vec<DatasetGroupId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: Option<ModelId>,
    pub to: ModelId,
    pub parent: Option<ModelId>,
    pub splits: BTreeSet<Split>,
    #[serde(default)]
    pub datasets: Vec<DatasetGroupId>,
    #[serde(default)]
    pub ros_params_changed: bool,
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}  ", self.to.algorithm)?;
        match &self.from {
            Some(from) => write!(f, "{} → {}", from.version, self.to.version)?,
            None => write!(f, "(new) → {}", self.to.version)?,
        }
        match &self.parent {
            Some(p) => write!(f, "  (parent {p})"),
            None => write!(f, "  (parent pending)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReleasePlan {
    pub algorithm: AlgorithmName,
    pub transitions: Vec<Transition>,
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(default)]
    pub new_majors: BTreeSet<u64>,
    #[serde(default)]
    pub deprecated_majors: BTreeSet<u64>,
}

impl ReleasePlan {
    pub fn empty(algorithm: AlgorithmName) -> Self {
        ReleasePlan {
            algorithm,
            transitions: Vec::new(),
            notes: Vec::new(),
            new_majors: BTreeSet::new(),
            deprecated_majors: BTreeSet::new(),
        }
    }

    pub fn targets(&self) -> impl Iterator<Item = &ModelId> {
        self.transitions.iter().map(|t| &t.to)
    }
}

struct Planner<'a> {
    state: &'a RegistryState,
    opts: &'a PlanOptions,
    plan: ReleasePlan,
}

impl Planner<'_> {
    fn id(&self, version: ModelVersion) -> ModelId {
        ModelId::new(self.plan.algorithm.clone(), version)
    }

    fn push(
        &mut self,
        from: Option<ModelVersion>,
        to: ModelVersion,
        parent: Option<ModelVersion>,
        splits: BTreeSet<Split>,
        ros_params_changed: bool,
    ) -> Result<(), LineageError> {
        let to = self.id(to);
        if self.state.models.contains(&to) || self.plan.targets().any(|t| t == &to) {
            return Err(LineageError::PlanConflict(Box::new(to)));
        }
        let from = from.map(|v| self.id(v));
        let parent = parent.map(|v| self.id(v));
        if parent.is_none() && to.kind() == ModelKind::Base {
            self.plan.notes.push(format!(
                "{to} needs a pretrain parent; none is registered for {}",
                self.plan.algorithm
            ));
        }
        self.plan.transitions.push(Transition {
            from,
            to,
            parent,
            splits,
            datasets: self.opts.datasets.clone(),
            ros_params_changed,
        });
        Ok(())
    }

    fn active_majors(&mut self) -> Result<BTreeSet<u64>, LineageError> {
        let alg = &self.plan.algorithm;
        let majors = self.state.majors(alg);
        for m in &self.opts.deprecate_majors {
            if !majors.contains(m) {
                return Err(LineageError::UnknownModel(format!(
                    "{alg} base/{m}.* (cannot deprecate an unsupported major)"
                )));
            }
        }
        if !self.opts.deprecate_majors.is_empty() {
            self.plan.deprecated_majors = self.opts.deprecate_majors.clone();
            self.plan.notes.push(format!(
                "deprecated base majors: {}",
                join(&self.opts.deprecate_majors)
            ));
        }
        let active: BTreeSet<u64> = majors
            .difference(&self.opts.deprecate_majors)
            .copied()
            .collect();
        if active.is_empty() {
            return Err(LineageError::NoSupportedBase(alg.to_string()));
        }
        Ok(active)
    }

    fn require_base(&self, major: u64) -> Result<(u64, u64), LineageError> {
        self.state
            .latest_base(&self.plan.algorithm, major)
            .ok_or_else(|| {
                LineageError::NoSupportedBase(format!("{} base/{major}.*", self.plan.algorithm))
            })
    }

    fn top_base(&mut self) -> Result<(u64, u64), LineageError> {
        let majors = self.state.majors(&self.plan.algorithm);
        let top = *majors
            .last()
            .ok_or_else(|| LineageError::NoSupportedBase(self.plan.algorithm.to_string()))?;
        self.require_base(top)
    }

    fn base_update(&mut self) -> Result<(), LineageError> {
        let alg = self.plan.algorithm.clone();
        let pretrain = self.state.latest_pretrain(&alg);
        let products = self.state.products(&alg);
        for major in self.active_majors()? {
            let (x, y) = self.require_base(major)?;
            let new_base = ModelVersion::Base { x, y: y + 1 };
            self.push(
                Some(ModelVersion::Base { x, y }),
                new_base.clone(),
                pretrain.clone(),
                train_only(),
                false,
            )?;
            for name in &products {
                let product = ModelName::new(name).expect("registered name");
                if let Some(triple) = self.state.latest_product(&alg, &product, Some(x)) {
                    self.push(
                        Some(ModelVersion::Product {
                            product: product.clone(),
                            triple,
                        }),
                        ModelVersion::Product {
                            product,
                            triple: Triple::new(x, y + 1, 0),
                        },
                        Some(new_base.clone()),
                        train_only(),
                        false,
                    )?;
                }
            }
        }
        Ok(())
    }

    fn breaking_change(&mut self) -> Result<(), LineageError> {
        let alg = self.plan.algorithm.clone();
        let active = self.active_majors()?;
        let top = *active.last().expect("non-empty");
        let (x, y) = self.require_base(top)?;
        let old_base = ModelVersion::Base { x, y };
        let new_base = old_base.bump(BumpPart::Major).expect("base bumps");
        self.plan.new_majors.insert(x + 1);
        self.plan.notes.push(format!(
            "runtime parameters changed for {alg}; retrain the pretrain model if the change affects it"
        ));
        let pretrain = self.state.latest_pretrain(&alg);
        self.push(
            Some(old_base),
            new_base.clone(),
            pretrain,
            train_only(),
            true,
        )?;
        for name in self.state.products(&alg) {
            let product = ModelName::new(&name).expect("registered name");
            if let Some(triple) = self.state.latest_product(&alg, &product, Some(x)) {
                let from = ModelVersion::Product { product, triple };
                let to = from.bump(BumpPart::Major).expect("product bumps");
                self.push(Some(from), to, Some(new_base.clone()), train_only(), true)?;
            }
        }
        Ok(())
    }

    fn new_product(&mut self, product: &ModelName) -> Result<(), LineageError> {
        if let Some(triple) = self.state.latest_product(&self.plan.algorithm, product, None) {
            return Err(LineageError::PlanConflict(Box::new(self.id(ModelVersion::Product {
                product: product.clone(),
                triple,
            }))));
        }
        let (x, y) = self.top_base()?;
        self.push(
            None,
            ModelVersion::Product {
                product: product.clone(),
                triple: Triple::new(x, y, 0),
            },
            Some(ModelVersion::Base { x, y }),
            train_only(),
            false,
        )
    }

    fn product_update(&mut self, product: &ModelName) -> Result<(), LineageError> {
        let alg = self.plan.algorithm.clone();
        let mut any = false;
        for major in self.state.majors(&alg) {
            let Some(triple) = self.state.latest_product(&alg, product, Some(major)) else {
                continue;
            };
            any = true;
            let base = ModelVersion::Base {
                x: triple.x,
                y: triple.y,
            };
            if !self.state.models.contains(&self.id(base.clone())) {
                return Err(LineageError::UnknownModel(self.id(base).to_string()));
            }
            let from = ModelVersion::Product {
                product: product.clone(),
                triple,
            };
            let to = from.bump(BumpPart::Patch).expect("product bumps");
            self.push(Some(from), to, Some(base), train_only(), false)?;
        }
        if !any {
            return Err(LineageError::UnknownModel(format!("{alg} {product}/*")));
        }
        Ok(())
    }

    fn latest_product_or_err(&self, product: &ModelName) -> Result<Triple, LineageError> {
        self.state
            .latest_product(&self.plan.algorithm, product, None)
            .ok_or_else(|| {
                LineageError::UnknownModel(format!("{} {product}/*", self.plan.algorithm))
            })
    }

    fn new_project(&mut self, product: &ModelName, project: &ModelName) -> Result<(), LineageError> {
        let triple = self.latest_product_or_err(product)?;
        let from = ModelVersion::Product {
            product: product.clone(),
            triple,
        };
        self.push(
            Some(from.clone()),
            ModelVersion::Project {
                product: product.clone(),
                triple,
                project: project.clone(),
                n: 1,
            },
            Some(from),
            train_only(),
            false,
        )
    }

    fn project_update(
        &mut self,
        product: &ModelName,
        project: &ModelName,
    ) -> Result<(), LineageError> {
        let alg = self.plan.algorithm.clone();
        let latest = self
            .state
            .versions(&alg)
            .filter_map(|v| match v {
                ModelVersion::Project {
                    product: p,
                    triple,
                    project: q,
                    n,
                } if p == product && q == project => Some((*triple, *n)),
                _ => None,
            })
            .max()
            .ok_or_else(|| {
                LineageError::UnknownModel(format!("{alg} {product}/*-{project}.*"))
            })?;
        let from = ModelVersion::Project {
            product: product.clone(),
            triple: latest.0,
            project: project.clone(),
            n: latest.1,
        };
        let to = from.bump(BumpPart::Project).expect("project bumps");
        self.push(Some(from.clone()), to, Some(from), train_only(), false)
    }

    fn make_release(&mut self, product: &ModelName) -> Result<(), LineageError> {
        let triple = self.latest_product_or_err(product)?;
        let base = ModelVersion::Base {
            x: triple.x,
            y: triple.y,
        };
        if !self.state.models.contains(&self.id(base.clone())) {
            return Err(LineageError::UnknownModel(self.id(base).to_string()));
        }
        self.push(
            Some(ModelVersion::Product {
                product: product.clone(),
                triple,
            }),
            ModelVersion::ProductRelease {
                product: product.clone(),
                triple,
            },
            Some(base),
            BTreeSet::from(Split::ALL),
            false,
        )
    }
}

fn train_only() -> BTreeSet<Split> {
    BTreeSet::from([Split::Train])
}

fn join(set: &BTreeSet<u64>) -> String {
    set.iter()
        .map(u64::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

/// Compute every version transition a release event requires.
pub fn plan_release(
    event: &ReleaseEvent,
    state: &RegistryState,
    opts: &PlanOptions,
) -> Result<ReleasePlan, LineageError> {
    let alg = event.algorithm();
    if !state.models.iter().any(|m| &m.algorithm == alg) {
        return Err(LineageError::UnknownModel(alg.to_string()));
    }
    let mut planner = Planner {
        state,
        opts,
        plan: ReleasePlan::empty(alg.clone()),
    };
    match event {
        ReleaseEvent::BreakingChange { .. } => planner.breaking_change()?,
        ReleaseEvent::BaseUpdate { .. } => planner.base_update()?,
        ReleaseEvent::NewProduct { product, .. } => planner.new_product(product)?,
        ReleaseEvent::ProductUpdate { .. } if opts.bump_base_line => {
            planner
                .plan
                .notes
                .push("product update chained through a base update".into());
            planner.base_update()?
        }
        ReleaseEvent::ProductUpdate { product, .. } => planner.product_update(product)?,
        ReleaseEvent::NewProject {
            product, project, ..
        } => planner.new_project(product, project)?,
        ReleaseEvent::ProjectUpdate {
            product, project, ..
        } => planner.project_update(product, project)?,
        ReleaseEvent::MakeRelease { product, .. } => planner.make_release(product)?,
    }
    let plan = planner.plan;
    for t in &plan.transitions {
        if let Some(from) = &t.from {
            debug_assert_ne!(
                from.precedence(&t.to),
                Precedence::Greater,
                "transition goes backwards"
            );
        }
        if t.parent.is_some() {
            validate_edge(&t.to, t.parent.as_ref(), EdgePolicy::default())?;
        }
    }
    Ok(plan)
}

/// Fold a plan into a copy of `state`.
pub fn apply_plan(plan: &ReleasePlan, state: &RegistryState) -> Result<RegistryState, LineageError> {
    let mut next = state.clone();
    for t in &plan.transitions {
        if !next.models.insert(t.to.clone()) {
            return Err(LineageError::PlanConflict(Box::new(t.to.clone())));
        }
        if let Some(parent) = &t.parent {
            if !next.models.contains(parent) {
                return Err(LineageError::UnknownModel(parent.to_string()));
            }
            next.lineage.push(LineageRecord {
                child: t.to.clone(),
                parent: Some(parent.clone()),
                dataset_refs: t.datasets.clone(),
                splits_used: t.splits.clone(),
                ros_params_changed: t.ros_params_changed,
            });
        }
    }
    if !plan.new_majors.is_empty() || !plan.deprecated_majors.is_empty() {
        let majors = state.majors(&plan.algorithm);
        let entry = next
            .supported_base_majors
            .entry(plan.algorithm.clone())
            .or_insert(majors);
        entry.extend(plan.new_majors.iter().copied());
        for m in &plan.deprecated_majors {
            entry.remove(m);
        }
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::version::parse_model_id;

    fn id(s: &str) -> ModelId {
        parse_model_id(s).unwrap()
    }

    fn rule(r: Result<(), LineageError>) -> EdgeRule {
        match r {
            Err(LineageError::ForbiddenEdge { rule, .. }) => rule,
            other => panic!("expected ForbiddenEdge, got {other:?}"),
        }
    }

    fn edge(child: &str, parent: Option<&str>) -> Result<(), LineageError> {
        validate_edge(
            &id(child),
            parent.map(id).as_ref(),
            EdgePolicy::default(),
        )
    }

    #[test]
    fn allowed_edges() {
        edge("CenterPoint pretrain/20241203", None).unwrap();
        edge("CenterPoint base/1.2", Some("CenterPoint pretrain/20241203")).unwrap();
        edge("CenterPoint bus/1.2.0", Some("CenterPoint base/1.2")).unwrap();
        edge("CenterPoint bus/1.2.3-odaiba.1", Some("CenterPoint bus/1.2.3")).unwrap();
        edge(
            "CenterPoint bus/1.2.3-odaiba.2",
            Some("CenterPoint bus/1.2.3-odaiba.1"),
        )
        .unwrap();
        edge("CenterPoint bus/1.1.1-release", Some("CenterPoint base/1.1")).unwrap();
    }

    #[test]
    fn forbidden_edges() {
        let cases = [
            ("CenterPoint base/1.3", Some("CenterPoint base/1.2"), EdgeRule::BaseFromBase),
            ("CenterPoint bus/1.2.1", Some("CenterPoint bus/1.2.0"), EdgeRule::ProductFromProduct),
            ("CenterPoint base/1.3", Some("CenterPoint bus/1.2.3-release"), EdgeRule::ReleaseOfBase),
            ("CenterPoint base/1.3", None, EdgeRule::MissingParent),
            ("CenterPoint pretrain/20241203", Some("CenterPoint base/1.2"), EdgeRule::PretrainHasParent),
            ("CenterPoint bus/1.3.0", Some("CenterPoint base/1.2"), EdgeRule::BaseLineMismatch),
            ("CenterPoint bus/1.2.0", Some("CenterPoint pretrain/20241203"), EdgeRule::ProductFromNonBase),
            ("CenterPoint bus/1.2.3-odaiba.1", Some("CenterPoint bus/1.2.2"), EdgeRule::ProjectFromForeignModel),
            ("CenterPoint bus/1.2.3-odaiba.1", Some("CenterPoint taxi/1.2.3"), EdgeRule::ProjectFromForeignModel),
            ("CenterPoint bus/1.2.3-release", Some("CenterPoint bus/1.2.3"), EdgeRule::ReleaseFromNonBase),
            ("CenterPoint base/1.2", Some("BEVFusion pretrain/20241203"), EdgeRule::CrossAlgorithm),
        ];
        for (c, p, expected) in cases {
            assert_eq!(rule(edge(c, p)), expected, "{c} <- {p:?}");
        }
    }

    #[test]
    fn fusion_from_lidar_needs_flag() {
        let child = id("BEVFusion-CL bus/1.2.0");
        let parent = id("BEVFusion-L base/1.2");
        assert_eq!(
            rule(validate_edge(&child, Some(&parent), EdgePolicy::default())),
            EdgeRule::CrossAlgorithm
        );
        let allow = EdgePolicy {
            allow_cross_algorithm: true,
        };
        validate_edge(&child, Some(&parent), allow).unwrap();
        let other = id("CenterPoint base/1.2");
        assert_eq!(
            rule(validate_edge(&child, Some(&other), allow)),
            EdgeRule::CrossAlgorithm
        );
    }

    fn record(child: &str, splits: &[Split]) -> LineageRecord {
        LineageRecord {
            child: id(child),
            parent: None,
            dataset_refs: vec![],
            splits_used: splits.iter().copied().collect(),
            ros_params_changed: false,
        }
    }

    #[test]
    fn split_policy() {
        check_split_policy(&record("CenterPoint bus/1.2.0", &[Split::Train])).unwrap();
        assert!(check_split_policy(&record("CenterPoint bus/1.2.0", &[Split::Train, Split::Val])).is_err());
        assert!(matches!(
            check_split_policy(&record("CenterPoint bus/1.1.1-release", &[Split::Train])),
            Err(LineageError::SplitPolicyViolation { .. })
        ));
        check_split_policy(&record("CenterPoint bus/1.1.1-release", &Split::ALL)).unwrap();
        check_split_policy(&record("CenterPoint base/1.2", &[Split::Train, Split::Val])).unwrap();
        assert!(check_split_policy(&record("CenterPoint base/1.2", &[])).is_err());
    }

    fn state(ids: &[&str]) -> RegistryState {
        RegistryState::from_models(ids.iter().map(|s| id(s)))
    }

    fn targets(plan: &ReleasePlan) -> Vec<String> {
        plan.targets().map(ToString::to_string).collect()
    }

    fn cp() -> AlgorithmName {
        "CenterPoint".parse().unwrap()
    }

    fn name(s: &str) -> ModelName {
        ModelName::new(s).unwrap()
    }

    #[test]
    fn base_update_cascades_to_products() {
        let s = state(&[
            "CenterPoint base/1.1",
            "CenterPoint base/2.0",
            "CenterPoint bus/1.1.3",
            "CenterPoint bus/2.0.0",
        ]);
        let plan = plan_release(
            &ReleaseEvent::BaseUpdate { algorithm: cp() },
            &s,
            &PlanOptions::default(),
        )
        .unwrap();
        let pairs: Vec<String> = plan.transitions.iter().map(|t| {
            format!("{} -> {}", t.from.as_ref().unwrap().version, t.to.version)
        }).collect();
        assert_eq!(
            pairs,
            [
                "base/1.1 -> base/1.2",
                "bus/1.1.3 -> bus/1.2.0",
                "base/2.0 -> base/2.1",
                "bus/2.0.0 -> bus/2.1.0"
            ]
        );
        assert_eq!(
            plan.transitions[1].parent.as_ref().unwrap().to_string(),
            "CenterPoint base/1.2"
        );
        assert!(plan.notes.iter().any(|n| n.contains("pretrain")));
    }

    #[test]
    fn base_update_skips_projects_and_uses_pretrain() {
        let s = state(&[
            "CenterPoint pretrain/20240101",
            "CenterPoint pretrain/20241203",
            "CenterPoint base/1.1",
            "CenterPoint bus/1.1.3",
            "CenterPoint bus/1.1.3-odaiba.2",
        ]);
        let plan = plan_release(
            &ReleaseEvent::BaseUpdate { algorithm: cp() },
            &s,
            &PlanOptions::default(),
        )
        .unwrap();
        assert_eq!(targets(&plan), ["CenterPoint base/1.2", "CenterPoint bus/1.2.0"]);
        assert_eq!(
            plan.transitions[0].parent.as_ref().unwrap().to_string(),
            "CenterPoint pretrain/20241203"
        );
        assert!(plan.notes.is_empty());
    }

    #[test]
    fn deprecation_drops_major() {
        let s = state(&["CenterPoint base/1.1", "CenterPoint base/2.0", "CenterPoint bus/1.1.3"]);
        let opts = PlanOptions {
            deprecate_majors: BTreeSet::from([1]),
            ..Default::default()
        };
        let plan = plan_release(&ReleaseEvent::BaseUpdate { algorithm: cp() }, &s, &opts).unwrap();
        assert_eq!(targets(&plan), ["CenterPoint base/2.1"]);
        let next = apply_plan(&plan, &s).unwrap();
        assert_eq!(next.supported_base_majors[&cp()], BTreeSet::from([2]));
    }

    #[test]
    fn breaking_change() {
        let s = state(&["CenterPoint base/1.2", "CenterPoint bus/1.2.3"]);
        let plan = plan_release(
            &ReleaseEvent::BreakingChange { algorithm: cp() },
            &s,
            &PlanOptions::default(),
        )
        .unwrap();
        assert_eq!(targets(&plan), ["CenterPoint base/2.0", "CenterPoint bus/2.0.0"]);
        assert!(plan.transitions.iter().all(|t| t.ros_params_changed));
        let next = apply_plan(&plan, &s).unwrap();
        assert_eq!(next.supported_base_majors[&cp()], BTreeSet::from([1, 2]));
    }

    #[test]
    fn product_events() {
        let s = state(&["CenterPoint base/1.1", "CenterPoint base/1.2", "CenterPoint bus/1.2.3"]);
        let plan = |e| plan_release(&e, &s, &PlanOptions::default());
        assert_eq!(
            targets(&plan(ReleaseEvent::NewProduct { algorithm: cp(), product: name("taxi") }).unwrap()),
            ["CenterPoint taxi/1.2.0"]
        );
        assert_eq!(
            targets(&plan(ReleaseEvent::ProductUpdate { algorithm: cp(), product: name("bus") }).unwrap()),
            ["CenterPoint bus/1.2.4"]
        );
        let p = plan(ReleaseEvent::NewProject {
            algorithm: cp(),
            product: name("bus"),
            project: name("odaiba"),
        })
        .unwrap();
        assert_eq!(targets(&p), ["CenterPoint bus/1.2.3-odaiba.1"]);
        assert_eq!(p.transitions[0].parent.as_ref().unwrap().to_string(), "CenterPoint bus/1.2.3");
        assert!(matches!(
            plan(ReleaseEvent::ProjectUpdate { algorithm: cp(), product: name("bus"), project: name("odaiba") }),
            Err(LineageError::UnknownModel(_))
        ));
        assert!(matches!(
            plan(ReleaseEvent::NewProduct { algorithm: cp(), product: name("bus") }),
            Err(LineageError::PlanConflict(_))
        ));
        assert!(matches!(
            plan(ReleaseEvent::BaseUpdate { algorithm: "PointPillars".parse().unwrap() }),
            Err(LineageError::UnknownModel(_))
        ));
    }

    #[test]
    fn product_update_with_base_line_bump() {
        let s = state(&["CenterPoint base/1.2", "CenterPoint bus/1.2.3"]);
        let opts = PlanOptions {
            bump_base_line: true,
            ..Default::default()
        };
        let plan = plan_release(
            &ReleaseEvent::ProductUpdate { algorithm: cp(), product: name("bus") },
            &s,
            &opts,
        )
        .unwrap();
        assert_eq!(targets(&plan), ["CenterPoint base/1.3", "CenterPoint bus/1.3.0"]);
    }

    #[test]
    fn project_update_and_release() {
        let s = state(&[
            "CenterPoint base/1.1",
            "CenterPoint bus/1.1.1",
            "CenterPoint bus/1.1.1-odaiba.1",
            "CenterPoint bus/1.1.1-odaiba.2",
        ]);
        let p = plan_release(
            &ReleaseEvent::ProjectUpdate { algorithm: cp(), product: name("bus"), project: name("odaiba") },
            &s,
            &PlanOptions::default(),
        )
        .unwrap();
        assert_eq!(targets(&p), ["CenterPoint bus/1.1.1-odaiba.3"]);
        let r = plan_release(
            &ReleaseEvent::MakeRelease { algorithm: cp(), product: name("bus") },
            &s,
            &PlanOptions::default(),
        )
        .unwrap();
        assert_eq!(targets(&r), ["CenterPoint bus/1.1.1-release"]);
        assert_eq!(r.transitions[0].parent.as_ref().unwrap().to_string(), "CenterPoint base/1.1");
        assert_eq!(r.transitions[0].splits, BTreeSet::from(Split::ALL));
    }

    #[test]
    fn apply_is_pure_and_rejects_replay() {
        let s = state(&["CenterPoint base/1.1", "CenterPoint bus/1.1.3"]);
        let before = s.clone();
        let empty = ReleasePlan::empty(cp());
        assert_eq!(apply_plan(&empty, &s).unwrap(), s);
        let plan = plan_release(
            &ReleaseEvent::BaseUpdate { algorithm: cp() },
            &s,
            &PlanOptions::default(),
        )
        .unwrap();
        let next = apply_plan(&plan, &s).unwrap();
        assert_eq!(s, before);
        assert!(next.models.contains(&id("CenterPoint base/1.2")));
        // base/1.2 has no pretrain parent yet, so only the product gets a record.
        assert!(next.lineage_of(&id("CenterPoint base/1.2")).is_none());
        let rec = next.lineage_of(&id("CenterPoint bus/1.2.0")).unwrap();
        assert_eq!(rec.parent.as_ref().unwrap(), &id("CenterPoint base/1.2"));
        assert!(matches!(apply_plan(&plan, &next), Err(LineageError::PlanConflict(_))));
    }

    #[test]
    fn registry_yaml_roundtrip_and_validation() {
        let mut s = state(&["CenterPoint pretrain/20241203", "CenterPoint base/1.2"]);
        s.lineage.push(LineageRecord {
            child: id("CenterPoint base/1.2"),
            parent: Some(id("CenterPoint pretrain/20241203")),
            dataset_refs: vec!["DB JPNTAXI v1.1".parse().unwrap()],
            splits_used: BTreeSet::from([Split::Train]),
            ros_params_changed: false,
        });
        let text = s.to_yaml();
        assert_eq!(RegistryState::from_yaml(&text).unwrap(), s);
        let dangling = text.replace("- CenterPoint pretrain/20241203\n", "");
        assert!(matches!(
            RegistryState::from_yaml(&dangling),
            Err(LineageError::InvalidRegistry(_))
        ));
    }
}
