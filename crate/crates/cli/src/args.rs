use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use vandal_core::corpus::SampleMode;
use vandal_core::features::GroupSet;
use vandal_core::forest::{ClassWeight, ForestParams, MaxFeatures};
use vandal_core::ingestion::SimulatedLatency;
use vandal_core::synth::SignalPlacement;

/// Vandalism scoring for structured knowledge-base edits.
///
/// Every command talks to a scoring service over HTTP. Without `--service`
/// an in-process service is started on a loopback port for the duration of
/// the command. Settings come from flags, then `VS_*` environment
/// variables, then the TOML file named by `--config`.
#[derive(Debug, Parser)]
#[command(name = "vandal-sentinel", version)]
pub struct Cli {
    /// Base URL of a running service.
    #[arg(long, global = true, env = "VS_SERVICE")]
    pub service: Option<String>,

    /// TOML file with per-command defaults.
    #[arg(long, global = true, env = "VS_CONFIG")]
    pub config: Option<PathBuf>,

    /// Print command results as JSON.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic fixture directory and its labeled corpus.
    SynthCorpus(SynthArgs),
    /// Label a revision stream into a corpus file.
    BuildCorpus(BuildArgs),
    /// Fit a forest on the training split of a corpus.
    Train(TrainArgs),
    /// Run the feature-group ablation, or score one model on the test split.
    Evaluate(EvaluateArgs),
    /// Render an evaluation report as a table and curve files.
    Report(ReportArgs),
    /// Re-run the command recorded in a run manifest.
    Rerun(RerunArgs),
    /// Score revisions.
    Score(ScoreArgs),
    /// Run the scoring service until interrupted.
    Serve(ServeArgs),
    /// Time single, batch and cached scoring over a sample of revisions.
    ReplayLatency(ReplayArgs),
    /// Write the patrol queue, labels and curves for offline review.
    ExportUiData(ExportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SynthCorpus(_) => "synth-corpus",
            Command::BuildCorpus(_) => "build-corpus",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Report(_) => "report",
            Command::Rerun(_) => "rerun",
            Command::Score(_) => "score",
            Command::Serve(_) => "serve",
            Command::ReplayLatency(_) => "replay-latency",
            Command::ExportUiData(_) => "export-ui-data",
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for fixtures, ground truth and corpus.jsonl.
    #[arg(long)]
    pub out: PathBuf,
    /// Non-bot revisions to generate.
    #[arg(long, default_value_t = 20_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.028)]
    pub prevalence: f64,
    /// Where the class signal lives: user or content.
    #[arg(long, default_value_t = SignalPlacement::User)]
    pub signal: SignalPlacement,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Extra bot revisions as a fraction of n.
    #[arg(long, default_value_t = 0.03)]
    pub bot_fraction: f64,
    #[arg(long, default_value_t = 0.7)]
    pub train_ratio: f64,
    /// Write fixtures only.
    #[arg(long)]
    pub no_corpus: bool,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// live:<api-url> or fixture:<dir>.
    #[arg(long)]
    pub source: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Property datatype registry (JSON); a builtin table is used otherwise.
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Language and pattern lists (TOML).
    #[arg(long)]
    pub patterns: Option<PathBuf>,
    #[arg(long, default_value_t = 15)]
    pub revert_radius: usize,
    /// Such as 30d, 12h or 3600s.
    #[arg(long, default_value = "30d")]
    pub revert_window: String,
    /// Sample unit: edits or items.
    #[arg(long = "sample", default_value = "edits")]
    pub sample_mode: SampleMode,
    /// Draw this many records before splitting.
    #[arg(long)]
    pub sample_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.7)]
    pub train_ratio: f64,
    /// Reviewer label export (JSONL) overriding revert-derived labels.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Stream start, UTC seconds.
    #[arg(long = "from", default_value_t = 0)]
    pub from_ts: i64,
    /// Stop after this many revisions.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ForestArgs {
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_samples_leaf: Option<usize>,
    /// sqrt, log2 or all.
    #[arg(long)]
    pub max_features: Option<MaxFeatures>,
    /// balanced or none.
    #[arg(long)]
    pub class_weight: Option<ClassWeight>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML grid searched by cross-validation.
    #[arg(long)]
    pub params_grid: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
}

impl ForestArgs {
    pub fn params(&self) -> ForestParams {
        let d = ForestParams::default();
        ForestParams {
            n_trees: self.n_trees.unwrap_or(d.n_trees),
            max_depth: self.max_depth.or(d.max_depth),
            min_samples_leaf: self.min_samples_leaf.unwrap_or(d.min_samples_leaf),
            features_per_split: self.max_features.unwrap_or(d.features_per_split),
            class_weight: self.class_weight.unwrap_or(d.class_weight),
            seed: self.seed.unwrap_or(d.seed),
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// all, or a comma list of general, context, type, user.
    #[arg(long, default_value = "all")]
    pub groups: GroupSet,
    #[command(flatten)]
    pub forest: ForestArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Report, table and curves go here.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Score this model instead of running the ablation.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Recall at which to read off the filter rate.
    #[arg(long)]
    pub recall: Option<f64>,
    /// Feature-group combinations; repeat the flag for several.
    #[arg(long = "combo")]
    pub combos: Vec<GroupSet>,
    #[command(flatten)]
    pub forest: ForestArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub report: PathBuf,
    /// Curve directory; defaults to curves/ beside the report.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    /// A *.manifest.json or run.manifest.json written by an earlier run.
    #[arg(long)]
    pub manifest: PathBuf,
}

/// Settings for a service started by this process.
#[derive(Debug, Args, Clone)]
pub struct ServiceArgs {
    /// Trained model file.
    #[arg(long, env = "VS_MODEL")]
    pub model: Option<PathBuf>,
    /// live:<api-url> or fixture:<dir>.
    #[arg(long, env = "VS_SOURCE")]
    pub source: Option<String>,
    /// Persistent score cache, label log and precache checkpoint.
    #[arg(long, env = "VS_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Cache budget in MiB.
    #[arg(long, default_value_t = 64)]
    pub cache_mib: usize,
    #[arg(long, env = "VS_THRESHOLD", default_value_t = vandal_core::api::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, env = "VS_MAX_BATCH", default_value_t = vandal_core::api::DEFAULT_MAX_BATCH)]
    pub max_batch: usize,
    /// Curve CSVs served to the patrol UI.
    #[arg(long)]
    pub curves_dir: Option<PathBuf>,
    /// Score the revision stream in the background.
    #[arg(long)]
    pub precache: bool,
    /// Stream start for the precache worker, UTC seconds.
    #[arg(long, default_value_t = 0)]
    pub precache_from: i64,
    /// Added fixture cost, <per-call-ms>:<per-revision-ms>.
    #[arg(long, env = "VS_UPSTREAM_LATENCY")]
    pub upstream_latency: Option<SimulatedLatency>,
    #[arg(long)]
    pub registry: Option<PathBuf>,
    #[arg(long)]
    pub patterns: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "VS_BIND", default_value = "127.0.0.1:8080")]
    pub bind: String,
    #[command(flatten)]
    pub service: ServiceArgs,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(required = true)]
    pub rev_ids: Vec<u64>,
    /// Recompute even when cached.
    #[arg(long)]
    pub refresh: bool,
    #[command(flatten)]
    pub service: ServiceArgs,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Revisions to sample.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Candidate revision ids, one per line; defaults to a fixture source's manifest.
    #[arg(long)]
    pub rev_ids: Option<PathBuf>,
    /// Latency CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fail unless median cached < batch per revision < single.
    #[arg(long)]
    pub assert_ordering: bool,
    #[command(flatten)]
    pub service: ServiceArgs,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub min_score: f64,
    #[arg(long, default_value_t = 500)]
    pub page_size: usize,
    /// Curve combinations to copy; repeat the flag for several.
    #[arg(long = "combo")]
    pub combos: Vec<GroupSet>,
    #[command(flatten)]
    pub service: ServiceArgs,
}
