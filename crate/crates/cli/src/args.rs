use std::path::PathBuf;

use aidetect_core::{Formulation, Subset};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Toggle {
    On,
    Off,
}

impl Toggle {
    pub fn on(self) -> bool {
        self == Toggle::On
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    /// One random 80/20 train/test split.
    Holdout,
    /// k-fold cross-validation partitions.
    Kfold,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadArg {
    TwoWay,
    ThousandWay,
}

#[derive(Debug, Parser, Serialize)]
#[command(name = "aidetect", version, about = "Detect assisted play in dial-tuning trajectories on toroidal landscapes")]
pub struct Cli {
    /// Master seed; every stage derives its own stream from it.
    #[arg(long, global = true, env = "AIDETECT_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Worker threads for trials and grid cells (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Measure move distances with wrap-around when classifying moves.
    #[arg(long, global = true, value_enum, default_value = "on")]
    pub wrap_distance: Toggle,

    /// JSON file of flag values; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate height maps and write them as JSON lines.
    GenLandscapes(GenLandscapes),
    /// Simulate solo and assisted participants; writes trajectories and maps.
    Simulate(Simulate),
    /// Encode trajectories into a tensor pack.
    Encode(Encode),
    /// Drop the shortest and longest 2.5% of trials (once per corpus).
    Trim(Trim),
    /// Write a train/test split or k-fold partition of a pack.
    Split(SplitCmd),
    /// Train one model on one split and save a checkpoint.
    Train(Train),
    /// Run the repeated random-split protocol and write its report.
    Protocol(Protocol),
    /// Grid-search hyperparameters with k-fold cross-validation.
    Tune(Tune),
    /// Combine protocol reports into a table, curves and a JSON summary.
    Report(Report),
    /// Check analytic gradients against finite differences.
    Gradcheck(Gradcheck),
    /// Print parameter counts against the published table.
    AuditParams(AuditParams),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenLandscapes(_) => "gen-landscapes",
            Command::Simulate(_) => "simulate",
            Command::Encode(_) => "encode",
            Command::Trim(_) => "trim",
            Command::Split(_) => "split",
            Command::Train(_) => "train",
            Command::Protocol(_) => "protocol",
            Command::Tune(_) => "tune",
            Command::Report(_) => "report",
            Command::Gradcheck(_) => "gradcheck",
            Command::AuditParams(_) => "audit-params",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LandscapeArgs {
    /// Minimum prominence every peak must have.
    #[arg(long, default_value_t = 2.0)]
    pub min_prominence: f64,

    /// Number of 3x3 box-smoothing passes.
    #[arg(long, default_value_t = 2)]
    pub smoothing_passes: usize,

    /// Minimum wrapped distance between peaks.
    #[arg(long, default_value_t = 6)]
    pub min_peak_distance: usize,

    /// Rejection-sampling attempts per map before giving up.
    #[arg(long, default_value_t = 1000)]
    pub max_attempts: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct GenLandscapes {
    /// Number of maps.
    #[arg(long, default_value_t = 10)]
    pub count: usize,

    /// Peaks per map (1 or 4).
    #[arg(long, default_value_t = 1)]
    pub peaks: usize,

    #[command(flatten)]
    pub landscape: LandscapeArgs,

    /// Output JSON-lines file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct Simulate {
    /// Number of simulated participants (four sessions each).
    #[arg(long, default_value_t = 398)]
    pub participants: usize,

    /// Probability of a local step rather than a jump.
    #[arg(long, default_value_t = 0.6)]
    pub local_prob: f64,

    /// Largest wrapped distance of a local step.
    #[arg(long, default_value_t = 2)]
    pub step_radius: usize,

    /// Stop after this many submissions without improvement.
    #[arg(long, default_value_t = 15)]
    pub patience: usize,

    /// Maximum submissions per session.
    #[arg(long, default_value_t = 126)]
    pub budget: usize,

    /// Every k-th submission of an assisted session is the annealer's proposal (0 disables help).
    #[arg(long, default_value_t = 2)]
    pub assist_every: usize,

    /// Starting temperature of the annealing assistant.
    #[arg(long, default_value_t = 4.0)]
    pub initial_temperature: f64,

    /// Geometric cooling factor of the annealing assistant.
    #[arg(long, default_value_t = 0.9)]
    pub cooling: f64,

    /// Wrapped distance of annealing proposals.
    #[arg(long, default_value_t = 1)]
    pub proposal_radius: usize,

    #[command(flatten)]
    pub landscape: LandscapeArgs,

    /// Output JSON-lines file of trajectories.
    #[arg(long)]
    pub out: PathBuf,

    /// Output JSON-lines file of maps (default: maps.jsonl next to --out).
    #[arg(long)]
    pub maps_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct Encode {
    /// Image formulation.
    #[arg(long, value_parser = parse_formulation)]
    pub formulation: Formulation,

    /// Trajectory JSON-lines file.
    #[arg(long)]
    pub corpus: PathBuf,

    /// Map JSON-lines file.
    #[arg(long)]
    pub landscapes: PathBuf,

    /// Keep only sessions on 1-peak (x1), 4-peak (x4) or all maps.
    #[arg(long, value_parser = parse_subset, default_value = "all")]
    pub subset: Subset,

    /// Output tensor pack.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct Trim {
    /// Trajectory JSON-lines file.
    #[arg(long)]
    pub corpus: PathBuf,

    /// Output JSON-lines file; a provenance file is written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SplitCmd {
    /// Tensor pack whose samples are split.
    #[arg(long)]
    pub pack: PathBuf,

    /// Holdout (80/20) or k-fold.
    #[arg(long, value_enum, default_value = "holdout")]
    pub kind: SplitKind,

    /// Number of folds for k-fold.
    #[arg(long, default_value_t = 10)]
    pub folds: usize,

    /// Output JSON file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct HpArgs {
    /// Learning rate (default: tuned per architecture).
    #[arg(long)]
    pub lr: Option<f64>,

    /// L2 weight decay (default: tuned per architecture).
    #[arg(long)]
    pub weight_decay: Option<f64>,

    /// Linear learning-rate decay over the epochs (default: tuned per architecture).
    #[arg(long, value_enum)]
    pub scheduler: Option<Toggle>,

    /// Dropout on the series branch of fusion models.
    #[arg(long)]
    pub dropout: Option<f64>,

    /// Training epochs (default: 25, 45 or 110 by image backbone).
    #[arg(long)]
    pub epochs: Option<usize>,

    /// Mini-batch size.
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct Train {
    /// Tensor pack to train on.
    #[arg(long)]
    pub pack: PathBuf,

    /// Architecture: lenet5, resnet18, sb-resnet18, optionally with +lstm, or lstm.
    #[arg(long)]
    pub arch: String,

    /// Split JSON from `split --kind holdout` (default: a fresh 80/20 split).
    #[arg(long)]
    pub split: Option<PathBuf>,

    #[command(flatten)]
    pub hp: HpArgs,

    /// Output directory for the checkpoint, curves and normalization stats.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct Protocol {
    /// Tensor pack.
    #[arg(long)]
    pub pack: PathBuf,

    /// Architecture: lenet5, resnet18, sb-resnet18, optionally with +lstm.
    #[arg(long)]
    pub arch: String,

    /// Subset to evaluate; must be admitted by the pack.
    #[arg(long, value_parser = parse_subset, default_value = "all")]
    pub subset: Subset,

    /// Independent random-split trials.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,

    /// Permute labels before splitting (a leakage control).
    #[arg(long)]
    pub shuffle_labels: bool,

    #[command(flatten)]
    pub hp: HpArgs,

    /// Output directory for report.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct Tune {
    /// Tensor pack.
    #[arg(long)]
    pub pack: PathBuf,

    /// Architecture: lenet5, resnet18, sb-resnet18, optionally with +lstm.
    #[arg(long)]
    pub arch: String,

    /// Cross-validation folds.
    #[arg(long, default_value_t = 10)]
    pub folds: usize,

    /// Learning rates to try.
    #[arg(long, value_delimiter = ',', default_value = "1e-5,1e-4,1e-3")]
    pub lrs: Vec<f64>,

    /// Weight decays to try.
    #[arg(long, value_delimiter = ',', default_value = "0,5e-6,5e-5")]
    pub weight_decays: Vec<f64>,

    /// Dropout rates swept afterwards for fusion models.
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.3,0.5,0.7,0.9")]
    pub dropouts: Vec<f64>,

    /// Training epochs per run (default: tuned per architecture).
    #[arg(long)]
    pub epochs: Option<usize>,

    /// Mini-batch size.
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,

    /// Output directory for grid.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct Report {
    /// Protocol report files (report.json) to combine.
    #[arg(long, required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,

    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct Gradcheck {
    /// Entries checked per parameter tensor of full models (0 checks all).
    #[arg(long, default_value_t = 64)]
    pub max_entries: usize,

    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,

    /// Optional output directory for gradcheck.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct AuditParams {
    /// Count a single architecture instead of printing the full matrix.
    #[arg(long)]
    pub arch: Option<String>,

    /// Input channels for --arch (1, 3 or 5).
    #[arg(long, default_value_t = 3)]
    pub channels: usize,

    /// Classifier head for --arch.
    #[arg(long, value_enum, default_value = "two-way")]
    pub head: HeadArg,

    /// Optional output directory for the run log.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_formulation(s: &str) -> Result<Formulation, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_subset(s: &str) -> Result<Subset, String> {
    s.parse().map_err(|e| format!("{e}"))
}
