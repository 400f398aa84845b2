use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "inbetween", version, about = "Motion in-betweening toolkit")]
pub struct Cli {
    /// Seed for every random draw of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML file with [training], [search], [gallery], [corpus] and [model] tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base directory for relative paths (default: $INBETWEEN_DATA_DIR).
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// One JSON log record per line on stderr.
    #[arg(long, global = true)]
    pub log_json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic motion corpus.
    Synth(SynthArgs),
    /// Convert BVH files into a clip cache.
    Ingest(IngestArgs),
    /// Add phase proxies to a clip cache.
    Phases(PhasesArgs),
    /// Build or query a trajectory gallery.
    Gallery {
        #[command(subcommand)]
        action: GalleryCommand,
    },
    /// Train a pose predictor.
    Train(TrainArgs),
    /// Generate a transition with a trained model.
    Rollout(RolloutArgs),
    /// Score a method on held-out transitions.
    Eval(EvalArgs),
    /// Serve the HTTP authoring API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub styles: Option<usize>,
    #[arg(long)]
    pub minutes: Option<f64>,
    #[arg(long)]
    pub clip_seconds: Option<f64>,
    #[arg(long)]
    pub max_turn: Option<f64>,
    /// Also write one BVH file per clip.
    #[arg(long)]
    pub bvh: bool,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// BVH files or directories holding them.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Unit conversion applied to offsets and root positions (0.01 for centimeters).
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 1)]
    pub style: usize,
}

#[derive(Debug, Args)]
pub struct PhasesArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum GalleryCommand {
    Build(GalleryBuildArgs),
    Query(GalleryQueryArgs),
}

#[derive(Debug, Args)]
pub struct GalleryBuildArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Also write every trajectory as a JSON line.
    #[arg(long)]
    pub jsonl: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GalleryQueryArgs {
    #[arg(long)]
    pub gallery: PathBuf,
    /// Start position `x,z`.
    #[arg(long)]
    pub from: String,
    /// Start facing `x,z`.
    #[arg(long, default_value = "0,1")]
    pub from_facing: String,
    #[arg(long)]
    pub to: String,
    #[arg(long, default_value = "0,1")]
    pub to_facing: String,
    /// fast, medium or slow.
    #[arg(long)]
    pub duration: Option<String>,
    #[arg(long)]
    pub style: Option<usize>,
    #[arg(long, default_value_t = 7)]
    pub count: usize,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Write candidates as JSON lines here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelPreset {
    Toy,
    Full,
    Reduced,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub model: Option<ModelPreset>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Log the loss every this many steps.
    #[arg(long, default_value_t = 100)]
    pub log_every: usize,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    #[arg(long)]
    pub weights: PathBuf,
    /// Clip cache providing the start context and target pose.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub clip: usize,
    #[arg(long)]
    pub start: usize,
    /// Target frame; defaults to `start + frames`.
    #[arg(long)]
    pub target: Option<usize>,
    #[arg(long, default_value_t = 30)]
    pub frames: usize,
    /// Guide with a gallery chain instead of the clip's own root path.
    #[arg(long)]
    pub gallery: Option<PathBuf>,
    /// Output BVH file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMethod {
    /// Linear root and spherical rotation interpolation.
    Interp,
    /// Trained model guided by the ground-truth root path.
    Model,
    /// The ground truth itself.
    Truth,
}

impl EvalMethod {
    pub fn name(self) -> &'static str {
        match self {
            EvalMethod::Interp => "interp",
            EvalMethod::Model => "model",
            EvalMethod::Truth => "truth",
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "interp")]
    pub method: Vec<EvalMethod>,
    /// Transition lengths; defaults to 15 through 90 in steps of 15.
    #[arg(long, value_delimiter = ',')]
    pub frames: Vec<usize>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Transitions drawn per clip and length.
    #[arg(long, default_value_t = 4)]
    pub pairs: usize,
    /// JSON lines report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub gallery: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    /// Candidates returned per gallery query.
    #[arg(long, default_value_t = 7)]
    pub count: usize,
}
