//! Model-lifecycle toolkit for perception models.
//!
//! * [`version`]: model identifiers, their grammar and version precedence.
//! * [`lineage`]: fine-tuning edge rules and release planning.
//! * [`dataset`]: T4dataset group names, configs and directory layout checks.
//! * [`info`]: info files, pseudo-label filtering and scene mining.
//! * [`eval`]: 3D center-distance mAP, 2D IoU AP and classification metrics.
//! * [`zoo`]: model zoo layout, registration and integrity verification.

pub mod dataset;
pub mod eval;
pub mod info;
pub mod lineage;
pub mod version;
pub mod zoo;

pub use dataset::{DatasetConfig, DatasetEntry, DatasetGroupId, DatasetKind, Split};
pub use eval::{EvalConfig3D, EvalReport};
pub use info::{BoxAnnotation, Category, InfoFile, SampleInfo};
pub use lineage::{ReleaseEvent, ReleasePlan, RegistryState};
pub use version::{AlgorithmName, ModelId, ModelVersion, Precedence};
