use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mlforge_core::dataset::{
    bump_dataset_version, parse_dataset_config, validate_layout, BumpReason, DatasetConfig,
    DatasetGroupId,
};
use mlforge_core::eval::{
    classification_metrics, evaluate_2d_iou, evaluate_3d, ApParams, Detections2d, EvalConfig3D,
};
use mlforge_core::info::{
    choose_annotation, create_data_info, create_pseudo_t4dataset, load_detections, scene_select,
    Category, InfoFile, SceneCriteria, SplitSelector, ThresholdConfig,
};
use mlforge_core::lineage::{
    apply_plan, check_split_policy, plan_release, validate_edge, EdgePolicy, PlanOptions,
    RegistryState, ReleaseEvent, ReleasePlan,
};
use mlforge_core::version::{parse_model_id, AlgorithmName, BumpPart, ModelId, ModelKind, ModelName};
use mlforge_core::zoo::{open_store, register, resolve_path, verify, Registration};
use serde::{Deserialize, Serialize};

use crate::args::*;
use crate::output::{read_text, Findings, Output, Usage};

pub fn run(cli: Cli) -> Result<()> {
    let out = Output {
        format: cli.format,
        out: cli.out,
    };
    match cli.command {
        Command::Version(cmd) => version(cmd, &out),
        Command::Release(ReleaseCmd::Plan(args)) => release_plan(args, &out),
        Command::Release(ReleaseCmd::Apply {
            registry,
            plan,
            in_place,
        }) => release_apply(&registry, &plan, in_place, &out),
        Command::Lineage(LineageCmd::Check {
            registry,
            allow_cross_algorithm,
        }) => lineage_check(&registry, allow_cross_algorithm, &out),
        Command::Dataset(cmd) => dataset(cmd, &out),
        Command::Info(InfoCmd::Create {
            config,
            root,
            split,
        }) => info_create(&config, &root, &split, &out),
        Command::Pseudo(cmd) => pseudo(cmd, &out),
        Command::Mine(MineCmd::Scenes {
            input,
            criteria,
            top,
        }) => mine_scenes(&input, &criteria, top, &out),
        Command::Eval(cmd) => eval(cmd, &out),
        Command::Zoo(cmd) => zoo(cmd, &out),
    }
}

fn model_id(text: &str) -> Result<ModelId> {
    parse_model_id(text).with_context(|| format!("invalid model id `{text}`"))
}

fn group_id(text: &str) -> Result<DatasetGroupId> {
    text.parse()
        .with_context(|| format!("invalid dataset group `{text}`"))
}

fn load_registry(path: &Path) -> Result<RegistryState> {
    RegistryState::from_yaml(&read_text(path)?).with_context(|| format!("loading {}", path.display()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ParsedId {
    pub id: ModelId,
    pub kind: ModelKind,
}

fn version(cmd: VersionCmd, out: &Output) -> Result<()> {
    match cmd {
        VersionCmd::Parse { id } => {
            let id = model_id(&id)?;
            let parsed = ParsedId {
                kind: id.kind(),
                id,
            };
            out.report(&parsed, || format!("{}\t{}", parsed.id, parsed.kind))
        }
        VersionCmd::Compare { a, b } => {
            let p = model_id(&a)?.precedence(&model_id(&b)?);
            out.report(&p, || p.to_string())
        }
        VersionCmd::Bump { id, part } => {
            let id = model_id(&id)?;
            let part = match part {
                Part::Major => BumpPart::Major,
                Part::Minor => BumpPart::Minor,
                Part::Patch => BumpPart::Patch,
                Part::Project => BumpPart::Project,
            };
            let next = id.with_version(id.version.bump(part)?);
            out.report(&next, || next.to_string())
        }
    }
}

fn pick_algorithm(state: &RegistryState, given: Option<&str>) -> Result<AlgorithmName> {
    if let Some(a) = given {
        return a.parse().with_context(|| format!("invalid algorithm `{a}`"));
    }
    let algs = state.algorithms();
    match algs.len() {
        1 => Ok(algs.into_iter().next().unwrap().clone()),
        0 => bail!("registry holds no models"),
        _ => Err(Usage(format!(
            "registry holds {} algorithms; pass --algorithm",
            algs.len()
        ))
        .into()),
    }
}

fn required_name(flag: &str, value: Option<&str>, event: Event) -> Result<ModelName> {
    let Some(v) = value else {
        return Err(Usage(format!("--{flag} is required for {event:?} events")).into());
    };
    ModelName::new(v).with_context(|| format!("invalid --{flag} `{v}`"))
}

fn release_plan(args: PlanArgs, out: &Output) -> Result<()> {
    let state = load_registry(&args.registry)?;
    let algorithm = pick_algorithm(&state, args.algorithm.as_deref())?;
    let product = || required_name("product", args.product.as_deref(), args.event);
    let project = || required_name("project", args.project.as_deref(), args.event);
    let event = match args.event {
        Event::BreakingChange => ReleaseEvent::BreakingChange { algorithm },
        Event::BaseUpdate => ReleaseEvent::BaseUpdate { algorithm },
        Event::NewProduct => ReleaseEvent::NewProduct {
            algorithm,
            product: product()?,
        },
        Event::ProductUpdate => ReleaseEvent::ProductUpdate {
            algorithm,
            product: product()?,
        },
        Event::NewProject => ReleaseEvent::NewProject {
            algorithm,
            product: product()?,
            project: project()?,
        },
        Event::ProjectUpdate => ReleaseEvent::ProjectUpdate {
            algorithm,
            product: product()?,
            project: project()?,
        },
        Event::MakeRelease => ReleaseEvent::MakeRelease {
            algorithm,
            product: product()?,
        },
    };
    let opts = PlanOptions {
        deprecate_majors: args.deprecate_majors.into_iter().collect(),
        bump_base_line: args.bump_base_line,
        datasets: args
            .datasets
            .iter()
            .map(|d| group_id(d))
            .collect::<Result<_>>()?,
    };
    let plan = plan_release(&event, &state, &opts)?;
    out.report(&plan, || render_plan(&plan))
}

fn render_plan(plan: &ReleasePlan) -> String {
    let mut s = String::new();
    for t in &plan.transitions {
        let _ = writeln!(s, "{t}");
    }
    if plan.transitions.is_empty() {
        s.push_str("no transitions\n");
    }
    for n in &plan.notes {
        let _ = writeln!(s, "note: {n}");
    }
    s
}

fn release_apply(registry: &Path, plan: &Path, in_place: bool, out: &Output) -> Result<()> {
    let state = load_registry(registry)?;
    // JSON plans are valid YAML.
    let plan: ReleasePlan = serde_yaml::from_str(&read_text(plan)?)
        .with_context(|| format!("invalid plan {}", plan.display()))?;
    let next = apply_plan(&plan, &state)?;
    let added = next.models.len() - state.models.len();
    let summary = || format!("{added} models added");
    if in_place {
        std::fs::write(registry, next.to_yaml())
            .with_context(|| format!("writing {}", registry.display()))?;
        println!("{}", summary());
        return Ok(());
    }
    out.data(&next.to_yaml(), summary)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LineageIssue {
    pub child: ModelId,
    pub problem: String,
}

fn lineage_check(registry: &Path, allow_cross_algorithm: bool, out: &Output) -> Result<()> {
    let state = load_registry(registry)?;
    let policy = EdgePolicy {
        allow_cross_algorithm,
    };
    let mut issues = Vec::new();
    for rec in &state.lineage {
        let checks = [
            validate_edge(&rec.child, rec.parent.as_ref(), policy),
            check_split_policy(rec),
        ];
        for err in checks.into_iter().filter_map(Result::err) {
            issues.push(LineageIssue {
                child: rec.child.clone(),
                problem: err.to_string(),
            });
        }
    }
    out.report(&issues, || {
        if issues.is_empty() {
            return format!("{} lineage records ok", state.lineage.len());
        }
        issues.iter().map(|i| format!("{}\n", i.problem)).collect()
    })?;
    findings(issues.len())
}

fn findings(n: usize) -> Result<()> {
    if n == 0 {
        Ok(())
    } else {
        Err(Findings(n).into())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: DatasetGroupId,
    pub config_filename: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<usize>,
}

fn dataset(cmd: DatasetCmd, out: &Output) -> Result<()> {
    match cmd {
        DatasetCmd::Validate { config, root } => {
            let cfg = parse_dataset_config(&config)?;
            let found = validate_layout(&root, &cfg)
                .with_context(|| format!("scanning {}", root.display()))?;
            out.report(&found, || {
                if found.is_empty() {
                    return format!("{}: {} datasets ok", cfg.group, cfg.entries.len());
                }
                found.iter().map(|f| format!("{f}\n")).collect()
            })?;
            findings(found.len())
        }
        DatasetCmd::Bump { config, reason } => {
            let cfg = parse_dataset_config(&config)?;
            let reason = match reason {
                Reason::AnnotationChange => BumpReason::AnnotationChange,
                Reason::AddedData => BumpReason::AddedData,
                Reason::FormatUpdate => BumpReason::FormatUpdate,
            };
            let group = bump_dataset_version(&cfg.group, reason);
            let summary = format!("{} -> {group}", cfg.group);
            let next = DatasetConfig { group, ..cfg };
            out.data(&next.to_yaml(), || summary)
        }
        DatasetCmd::Parse { input } => {
            let path = Path::new(&input);
            let summary = if path.extension().is_some_and(|e| e == "yaml" || e == "yml") {
                let cfg = parse_dataset_config(path)?;
                GroupSummary {
                    config_filename: cfg.group.config_filename(),
                    entries: Some(cfg.entries.len()),
                    group: cfg.group,
                }
            } else {
                let group = group_id(&input)?;
                GroupSummary {
                    config_filename: group.config_filename(),
                    entries: None,
                    group,
                }
            };
            out.report(&summary, || {
                let mut s = format!("{}\t{}", summary.group, summary.config_filename);
                if let Some(n) = summary.entries {
                    let _ = write!(s, "\t{n} datasets");
                }
                s
            })
        }
    }
}

fn info_create(config: &Path, root: &Path, split: &str, out: &Output) -> Result<()> {
    let cfg = parse_dataset_config(config)?;
    let split: SplitSelector = split.parse()?;
    let info = create_data_info(root, &cfg, split)?;
    out.data(&info.to_json(), || {
        format!("{} samples, {} boxes", info.samples.len(), info.box_count())
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub samples: usize,
    pub boxes: usize,
    pub per_category: BTreeMap<Category, usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MaterializeSummary {
    pub group: DatasetGroupId,
    pub config_path: PathBuf,
    pub annotation_dirs: Vec<PathBuf>,
}

fn pseudo(cmd: PseudoCmd, out: &Output) -> Result<()> {
    match cmd {
        PseudoCmd::Load { input } => {
            let det = load_detections(&input)?;
            let mut per_category = BTreeMap::new();
            for b in det.samples.iter().flat_map(|s| &s.boxes) {
                *per_category.entry(b.category).or_insert(0) += 1;
            }
            let summary = DetectionSummary {
                samples: det.samples.len(),
                boxes: det.box_count(),
                per_category,
            };
            out.report(&summary, || {
                let mut s = format!("{} samples, {} boxes\n", summary.samples, summary.boxes);
                for (c, n) in &summary.per_category {
                    let _ = writeln!(s, "{c}\t{n}");
                }
                s
            })
        }
        PseudoCmd::Choose {
            input,
            thresholds,
            threshold,
        } => {
            let raw = load_detections(&input)?;
            let cfg = match (thresholds, threshold) {
                (Some(path), _) => ThresholdConfig::from_yaml(&read_text(&path)?)?,
                (None, Some(t)) if (0.0..=1.0).contains(&t) => ThresholdConfig::uniform(t),
                (None, Some(t)) => bail!("threshold {t} outside [0, 1]"),
                (None, None) => unreachable!("clap requires one of the two"),
            };
            let chosen = choose_annotation(&raw, &cfg)?;
            out.data(&chosen.to_json(), || {
                format!("kept {} of {} boxes", chosen.box_count(), raw.box_count())
            })
        }
        PseudoCmd::Materialize {
            labels,
            root,
            group,
        } => {
            let labels = InfoFile::read(&labels)?;
            let group = group_id(&group)?;
            let made = create_pseudo_t4dataset(&root, &labels, &group)?;
            let summary = MaterializeSummary {
                group,
                config_path: made.config_path,
                annotation_dirs: made.annotation_dirs,
            };
            out.report(&summary, || {
                format!(
                    "{}: wrote {} ({} datasets)",
                    summary.group,
                    summary.config_path.display(),
                    summary.annotation_dirs.len()
                )
            })
        }
    }
}

fn mine_scenes(input: &Path, criteria: &Path, top: Option<usize>, out: &Output) -> Result<()> {
    let det = InfoFile::read(input)?;
    let criteria: SceneCriteria = serde_yaml::from_str(&read_text(criteria)?)
        .with_context(|| format!("invalid criteria {}", criteria.display()))?;
    let mut ranked = scene_select(&det, &criteria)?;
    if let Some(n) = top {
        ranked.truncate(n);
    }
    out.report(&ranked, || {
        ranked
            .iter()
            .map(|s| format!("{}\t{}\n", s.token, s.score))
            .collect()
    })
}

fn eval(cmd: EvalCmd, out: &Output) -> Result<()> {
    match cmd {
        EvalCmd::ThreeD {
            gt,
            pred,
            max_range,
            distance_thresholds,
            skip_empty_classes,
            plain_ap,
        } => {
            let cfg = EvalConfig3D {
                distance_thresholds,
                max_range,
                skip_empty_classes,
                ap: if plain_ap { ApParams::PLAIN } else { ApParams::NUSCENES },
                ..EvalConfig3D::default()
            };
            let report = evaluate_3d(&InfoFile::read(&gt)?, &InfoFile::read(&pred)?, &cfg)?;
            out.report(&report, || report.render_table())
        }
        EvalCmd::TwoD {
            gt,
            pred,
            iou_thresholds,
        } => {
            let load = |p: &Path| -> Result<Detections2d> {
                serde_json::from_str(&read_text(p)?).with_context(|| format!("invalid detections {}", p.display()))
            };
            let report = evaluate_2d_iou(&load(&gt)?, &load(&pred)?, &iou_thresholds)?;
            out.report(&report, || report.render_table())
        }
        EvalCmd::Cls { gt, pred } => {
            let load = |p: &Path| -> Result<Vec<String>> {
                serde_json::from_str(&read_text(p)?).with_context(|| format!("invalid label list {}", p.display()))
            };
            let report = classification_metrics(&load(&gt)?, &load(&pred)?)?;
            out.report(&report, || report.render_table())
        }
    }
}

fn zoo(cmd: ZooCmd, out: &Output) -> Result<()> {
    match cmd {
        ZooCmd::Resolve { id, root } => {
            let path = resolve_path(&root, &model_id(&id)?);
            out.report(&path, || path.clone())
        }
        ZooCmd::Register {
            id,
            root,
            files,
            parent,
            datasets,
            allow_cross_algorithm,
        } => {
            let store = open_store(&root)?;
            let id = model_id(&id)?;
            let parent = parent.as_deref().map(model_id).transpose()?;
            let datasets = datasets
                .iter()
                .map(|d| group_id(d))
                .collect::<Result<Vec<_>>>()?;
            let manifest = register(
                &store,
                &Registration {
                    id: &id,
                    files: &files,
                    parent: parent.as_ref(),
                    dataset_refs: &datasets,
                    policy: EdgePolicy {
                        allow_cross_algorithm,
                    },
                },
            )?;
            out.report(&manifest, || {
                let mut s = format!("registered {} at {}\n", manifest.model, resolve_path(&root, &id));
                for f in &manifest.files {
                    let _ = writeln!(s, "{}  {}", f.digest, f.name);
                }
                s
            })
        }
        ZooCmd::Verify { id, root } => {
            let store = open_store(&root)?;
            let id = model_id(&id)?;
            let found = verify(&store, &id)?;
            out.report(&found, || {
                if found.is_empty() {
                    return format!("{id}: ok");
                }
                found.iter().map(|f| format!("{f}\n")).collect()
            })?;
            findings(found.len())
        }
    }
}
