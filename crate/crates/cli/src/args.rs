use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "mlforge", version, about = "Model lifecycle toolkit for T4dataset-based perception models")]
pub struct Cli {
    /// Output format for reports.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Write the command's output to this file instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, compare and bump model ids.
    #[command(subcommand)]
    Version(VersionCmd),
    /// Plan and apply release events against a registry.
    #[command(subcommand)]
    Release(ReleaseCmd),
    /// Check lineage records of a registry.
    #[command(subcommand)]
    Lineage(LineageCmd),
    /// T4dataset group configs and directory layouts.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Build info files from annotated datasets.
    #[command(subcommand)]
    Info(InfoCmd),
    /// Pseudo-label pipeline.
    #[command(subcommand)]
    Pseudo(PseudoCmd),
    /// Rank samples for annotation.
    #[command(subcommand)]
    Mine(MineCmd),
    /// Detection and classification metrics.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Model zoo layout, registration and integrity checks.
    #[command(subcommand)]
    Zoo(ZooCmd),
}

#[derive(Debug, Subcommand)]
pub enum VersionCmd {
    /// Parse a model id and print its canonical form.
    Parse { id: String },
    /// Print `less`, `equal`, `greater` or `incomparable`.
    Compare { a: String, b: String },
    /// Print the id with one version component bumped.
    Bump {
        id: String,
        #[arg(long, value_enum)]
        part: Part,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Part {
    Major,
    Minor,
    Patch,
    Project,
}

#[derive(Debug, Subcommand)]
pub enum ReleaseCmd {
    /// Compute the version transitions an event requires.
    Plan(PlanArgs),
    /// Fold a plan into the registry and print the new registry.
    Apply {
        #[arg(long)]
        registry: PathBuf,
        /// Plan file as written by `release plan --format json`.
        #[arg(long)]
        plan: PathBuf,
        /// Rewrite the registry file instead of printing it.
        #[arg(long)]
        in_place: bool,
    },
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long, value_enum)]
    pub event: Event,
    #[arg(long)]
    pub registry: PathBuf,
    /// Required when the registry holds more than one algorithm.
    #[arg(long)]
    pub algorithm: Option<String>,
    #[arg(long)]
    pub product: Option<String>,
    #[arg(long)]
    pub project: Option<String>,
    /// Drop this base major from support instead of updating it.
    #[arg(long = "deprecate-major", value_name = "X")]
    pub deprecate_majors: Vec<u64>,
    /// Product update moves X.Y.Z to X.(Y+1).0 through a base update.
    #[arg(long)]
    pub bump_base_line: bool,
    /// Dataset group recorded on new lineage entries, e.g. "DB JPNTAXI v1.1".
    #[arg(long = "dataset", value_name = "GROUP")]
    pub datasets: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Event {
    BreakingChange,
    BaseUpdate,
    NewProduct,
    ProductUpdate,
    NewProject,
    ProjectUpdate,
    MakeRelease,
}

#[derive(Debug, Subcommand)]
pub enum LineageCmd {
    /// Validate every lineage edge and split policy in a registry.
    Check {
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        allow_cross_algorithm: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum DatasetCmd {
    /// Check the on-disk layout of every dataset in a group config.
    Validate {
        #[arg(long)]
        config: PathBuf,
        /// Directory holding the group directory.
        #[arg(long)]
        root: PathBuf,
    },
    /// Print the group config with its version bumped.
    Bump {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        reason: Reason,
    },
    /// Parse a group id such as "DB JPNTAXI v1.1" or a group config file.
    Parse { input: String },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Reason {
    AnnotationChange,
    AddedData,
    FormatUpdate,
}

#[derive(Debug, Subcommand)]
pub enum InfoCmd {
    /// Flatten annotation tables into an info file.
    Create {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        root: PathBuf,
        #[arg(long, default_value = "all")]
        split: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum PseudoCmd {
    /// Check and summarize an offline model's detections.
    Load { input: PathBuf },
    /// Keep detections at or above the per-class thresholds.
    Choose {
        #[arg(long)]
        input: PathBuf,
        /// YAML map of category to threshold.
        #[arg(long, conflicts_with = "threshold", required_unless_present = "threshold")]
        thresholds: Option<PathBuf>,
        /// One threshold for every category.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Write labels as annotation tables of a pseudo T4dataset.
    Materialize {
        #[arg(long)]
        labels: PathBuf,
        /// Directory holding the non-annotated group directory.
        #[arg(long)]
        root: PathBuf,
        /// e.g. "Pseudo J6Gen2 v1.0".
        #[arg(long)]
        group: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum MineCmd {
    /// Score samples by class weights and a confidence band.
    Scenes {
        #[arg(long)]
        input: PathBuf,
        /// YAML with `class_weights` and optional `band: {lo, hi, weight}`.
        #[arg(long)]
        criteria: PathBuf,
        /// Keep only the best N samples.
        #[arg(long)]
        top: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    /// Center-distance mAP over info files.
    #[command(name = "3d")]
    ThreeD {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value_t = 120.0)]
        max_range: f64,
        /// Comma-separated center-distance thresholds in meters.
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,1.5,2")]
        distance_thresholds: Vec<f64>,
        /// Leave classes without ground truth out of the mean.
        #[arg(long)]
        skip_empty_classes: bool,
        /// Plain 101-point AP without the recall/precision floor.
        #[arg(long)]
        plain_ap: bool,
    },
    /// IoU-matched 2D detection AP.
    #[command(name = "2d")]
    TwoD {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.6,0.7,0.8,0.9")]
        iou_thresholds: Vec<f64>,
    },
    /// Macro precision, recall and F1 over JSON label lists.
    Cls {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum ZooCmd {
    /// Print the directory of a model under the zoo root.
    Resolve {
        id: String,
        #[arg(long, env = "MLFORGE_ZOO_ROOT")]
        root: String,
    },
    /// Copy artifacts into the zoo and write the deploy manifest.
    Register {
        id: String,
        #[arg(long, env = "MLFORGE_ZOO_ROOT")]
        root: String,
        #[arg(long = "file", value_name = "PATH", required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        parent: Option<String>,
        #[arg(long = "dataset", value_name = "GROUP")]
        datasets: Vec<String>,
        #[arg(long)]
        allow_cross_algorithm: bool,
    },
    /// Recompute artifact digests against the manifest.
    Verify {
        id: String,
        #[arg(long, env = "MLFORGE_ZOO_ROOT")]
        root: String,
    },
}
