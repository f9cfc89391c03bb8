//! Pipeline stages as plain functions. Each one writes its artifact and a
//! run manifest beside it; the manifest's `job` re-runs the stage.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::api::ErrorKind;
use crate::config::{ConfigError, PatternConfig};
use crate::corpus::{
    apply_label_overrides, build_corpus, parse_duration, read_corpus, read_label_overrides, sample, split_train_test,
    write_corpus, CorpusError, CorpusHeader, CorpusRecord, CorpusSummary, RevertConfig, SampleMode, Split,
    CORPUS_SCHEMA_VERSION,
};
use crate::eval::{ablation_run, design_matrix, score_split, AblationConfig, EvalError, EvalReport, REPORT_SCHEMA_VERSION};
use crate::features::{GroupSet, FEATURE_SCHEMA_VERSION};
use crate::forest::{grid_search, parse_grid, train, ForestError, ForestParams, TrainedModel, MODEL_FORMAT_VERSION};
use crate::ingestion::{IngestError, RetryConfig, SimulatedLatency, SourceSpec};
use crate::pipeline::model_version;
use crate::registry::{PropertyRegistry, RegistryError};
use crate::synth::{generate, SynthError, SynthSpec, SYNTH_VERSION};

pub const MANIFEST_SUFFIX: &str = ".manifest.json";
pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TABLE: &str = "report.txt";
pub const CURVES_DIR: &str = "curves";

#[derive(Debug, Error)]
pub enum JobError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("upstream: {0}")]
    Upstream(String),
    #[error("{0}")]
    MissingReport(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
}

impl JobError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            JobError::Config(_) => ErrorKind::InvalidRequest,
            JobError::Data(_) => ErrorKind::InvalidData,
            JobError::Upstream(_) => ErrorKind::UpstreamUnavailable,
            JobError::MissingReport(_) => ErrorKind::MissingReport,
            JobError::SchemaMismatch(_) => ErrorKind::SchemaMismatch,
        }
    }
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> JobError + '_ {
    move |e| JobError::Data(format!("{}: {e}", path.display()))
}

impl From<CorpusError> for JobError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::InvalidRatio(_) | CorpusError::InvalidRevertConfig(_) => JobError::Config(e.to_string()),
            CorpusError::SchemaMismatch { .. } => JobError::SchemaMismatch(e.to_string()),
            _ => JobError::Data(e.to_string()),
        }
    }
}

impl From<IngestError> for JobError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Transport(_) => JobError::Upstream(e.to_string()),
            IngestError::Config(_) | IngestError::CheckpointInvalid(_) => JobError::Config(e.to_string()),
            _ => JobError::Data(e.to_string()),
        }
    }
}

impl From<ForestError> for JobError {
    fn from(e: ForestError) -> Self {
        match e {
            ForestError::InvalidParams(_) | ForestError::Grid(_) => JobError::Config(e.to_string()),
            ForestError::SchemaMismatch { .. } => JobError::SchemaMismatch(e.to_string()),
            _ => JobError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for JobError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Forest(f) => f.into(),
            EvalError::SchemaMismatch { .. } => JobError::SchemaMismatch(e.to_string()),
            EvalError::MissingReport => JobError::MissingReport(e.to_string()),
            _ => JobError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for JobError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidSpec(_) => JobError::Config(e.to_string()),
            SynthError::Io(_) => JobError::Data(e.to_string()),
        }
    }
}

impl From<ConfigError> for JobError {
    fn from(e: ConfigError) -> Self {
        JobError::Config(e.to_string())
    }
}

impl From<RegistryError> for JobError {
    fn from(e: RegistryError) -> Self {
        JobError::Config(e.to_string())
    }
}

fn default_ratio() -> f64 {
    0.7
}

fn default_folds() -> usize {
    5
}

/// Generates fixtures and, unless disabled, builds the corpus over them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthJob {
    pub out_dir: PathBuf,
    pub spec: SynthSpec,
    #[serde(default = "default_true")]
    pub build_corpus: bool,
    #[serde(default = "default_ratio")]
    pub train_ratio: f64,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildCorpusJob {
    /// `fixture:<dir>` or `live:<api url>`.
    pub source: String,
    pub out: PathBuf,
    #[serde(default)]
    pub registry: Option<PathBuf>,
    #[serde(default)]
    pub patterns: Option<PathBuf>,
    #[serde(default)]
    pub revert: Option<RevertConfig>,
    /// Keep this many records after labeling.
    #[serde(default)]
    pub sample: Option<usize>,
    #[serde(default)]
    pub sample_mode: SampleMode,
    #[serde(default = "default_ratio")]
    pub train_ratio: f64,
    #[serde(default)]
    pub seed: u64,
    /// Exported reviewer labels applied after revert labeling.
    #[serde(default)]
    pub labels: Option<PathBuf>,
    /// Stream start, UTC seconds.
    #[serde(default)]
    pub from_ts: i64,
    /// Stop after this many revisions from the stream.
    #[serde(default)]
    pub limit: Option<usize>,
}

impl BuildCorpusJob {
    pub fn new(source: impl Into<String>, out: impl Into<PathBuf>) -> Self {
        BuildCorpusJob {
            source: source.into(),
            out: out.into(),
            registry: None,
            patterns: None,
            revert: None,
            sample: None,
            sample_mode: SampleMode::Edits,
            train_ratio: default_ratio(),
            seed: 0,
            labels: None,
            from_ts: 0,
            limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainJob {
    pub corpus: PathBuf,
    pub out: PathBuf,
    #[serde(default = "GroupSet::all")]
    pub groups: GroupSet,
    #[serde(default)]
    pub params: ForestParams,
    /// TOML grid; when set, a cross-validated search picks the parameters.
    #[serde(default)]
    pub grid: Option<PathBuf>,
    #[serde(default = "default_folds")]
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateJob {
    pub corpus: PathBuf,
    pub out_dir: PathBuf,
    /// Score one trained model instead of running the ablation.
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub params: ForestParams,
    #[serde(default)]
    pub grid: Option<PathBuf>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub target_recall: Option<f64>,
    /// Defaults to the five ablation combinations.
    #[serde(default)]
    pub combos: Option<Vec<GroupSet>>,
}

impl TrainJob {
    pub fn new(corpus: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        TrainJob {
            corpus: corpus.into(),
            out: out.into(),
            groups: GroupSet::all(),
            params: ForestParams::default(),
            grid: None,
            folds: default_folds(),
        }
    }
}

impl EvaluateJob {
    pub fn new(corpus: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        EvaluateJob {
            corpus: corpus.into(),
            out_dir: out_dir.into(),
            model: None,
            params: ForestParams::default(),
            grid: None,
            folds: default_folds(),
            target_recall: None,
            combos: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJob {
    pub report: PathBuf,
    /// Where curve CSVs go; defaults to `curves/` beside the report.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Job {
    SynthCorpus(SynthJob),
    BuildCorpus(BuildCorpusJob),
    Train(TrainJob),
    Evaluate(EvaluateJob),
    Report(ReportJob),
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::SynthCorpus(_) => "synth-corpus",
            Job::BuildCorpus(_) => "build-corpus",
            Job::Train(_) => "train",
            Job::Evaluate(_) => "evaluate",
            Job::Report(_) => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    /// The job as run; feed it back to reproduce the artifacts.
    pub job: Job,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub schema_versions: BTreeMap<String, String>,
    pub wall_seconds: f64,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self, JobError> {
        let bytes = std::fs::read(path).map_err(io_at(path))?;
        serde_json::from_slice(&bytes).map_err(|e| JobError::Config(format!("{}: {e}", path.display())))
    }
}

/// `<artifact>.manifest.json`, or `run.manifest.json` inside a directory artifact.
pub fn manifest_path(artifact: &Path) -> PathBuf {
    if artifact.is_dir() {
        artifact.join(format!("run{MANIFEST_SUFFIX}"))
    } else {
        let mut name = artifact.file_name().unwrap_or_default().to_os_string();
        name.push(MANIFEST_SUFFIX);
        artifact.with_file_name(name)
    }
}

fn schema_versions() -> BTreeMap<String, String> {
    [
        ("corpus", CORPUS_SCHEMA_VERSION),
        ("features", FEATURE_SCHEMA_VERSION),
        ("model", MODEL_FORMAT_VERSION),
        ("report", REPORT_SCHEMA_VERSION),
        ("synth", SYNTH_VERSION),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v.to_owned()))
    .collect()
}

struct Recorder {
    started: Instant,
    job: Job,
}

impl Recorder {
    fn start(job: Job) -> Self {
        Recorder { started: Instant::now(), job }
    }

    fn finish(self, artifact: &Path, inputs: Vec<PathBuf>, outputs: Vec<PathBuf>, seed: Option<u64>) -> Result<PathBuf, JobError> {
        let m = RunManifest {
            subcommand: self.job.name().to_owned(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            job: self.job,
            inputs,
            outputs,
            seed,
            schema_versions: schema_versions(),
            wall_seconds: self.started.elapsed().as_secs_f64(),
        };
        let path = manifest_path(artifact);
        let bytes = serde_json::to_vec_pretty(&m).expect("manifest serializes");
        std::fs::write(&path, bytes).map_err(io_at(&path))?;
        Ok(path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOutcome {
    pub fixture_dir: PathBuf,
    pub revisions: usize,
    pub planted_positives: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<CorpusOutcome>,
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusOutcome {
    pub path: PathBuf,
    pub records: usize,
    pub positives: usize,
    pub overrides_applied: usize,
    pub summary: CorpusSummary,
    pub summary_table: String,
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub path: PathBuf,
    pub model_version: String,
    pub params: ForestParams,
    pub n: usize,
    pub n_positive: usize,
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateOutcome {
    pub report: EvalReport,
    pub table: String,
    pub report_path: PathBuf,
    pub curve_files: Vec<PathBuf>,
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOutcome {
    pub table: String,
    pub curve_files: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Outcome {
    SynthCorpus(SynthOutcome),
    BuildCorpus(CorpusOutcome),
    Train(TrainOutcome),
    Evaluate(EvaluateOutcome),
    Report(ReportOutcome),
}

pub fn run(job: Job) -> Result<Outcome, JobError> {
    Ok(match job {
        Job::SynthCorpus(j) => Outcome::SynthCorpus(synth_corpus(j)?),
        Job::BuildCorpus(j) => Outcome::BuildCorpus(build(j)?),
        Job::Train(j) => Outcome::Train(train_model(j)?),
        Job::Evaluate(j) => Outcome::Evaluate(evaluate(j)?),
        Job::Report(j) => Outcome::Report(report(j)?),
    })
}

pub fn synth_corpus(job: SynthJob) -> Result<SynthOutcome, JobError> {
    let rec = Recorder::start(Job::SynthCorpus(job.clone()));
    let out = generate(&job.spec)?;
    let dir = &job.out_dir;
    out.write_fixture_dir(dir)?;
    let corpus = if job.build_corpus {
        let mut b = BuildCorpusJob::new(format!("fixture:{}", dir.display()), dir.join(CORPUS_FILE));
        b.seed = job.spec.seed;
        b.train_ratio = job.train_ratio;
        Some(build(b)?)
    } else {
        None
    };
    let manifest = rec.finish(dir, vec![], vec![dir.clone()], Some(job.spec.seed))?;
    Ok(SynthOutcome {
        fixture_dir: dir.clone(),
        revisions: out.envelopes.len(),
        planted_positives: out.planted_positives(),
        corpus,
        manifest,
    })
}

fn load_registry(path: Option<&Path>) -> Result<PropertyRegistry, JobError> {
    Ok(match path {
        Some(p) => PropertyRegistry::load(p)?,
        None => PropertyRegistry::builtin(),
    })
}

fn load_patterns(path: Option<&Path>) -> Result<PatternConfig, JobError> {
    Ok(match path {
        Some(p) => PatternConfig::load(p)?,
        None => PatternConfig::default(),
    })
}

pub fn build(job: BuildCorpusJob) -> Result<CorpusOutcome, JobError> {
    let rec = Recorder::start(Job::BuildCorpus(job.clone()));
    let registry = load_registry(job.registry.as_deref())?;
    let patterns = load_patterns(job.patterns.as_deref())?;
    let revert = job.revert.unwrap_or_default();
    RevertConfig::new(revert.radius, revert.window)?;
    if !(job.train_ratio > 0.0 && job.train_ratio < 1.0) {
        return Err(CorpusError::InvalidRatio(job.train_ratio).into());
    }
    let spec = SourceSpec::parse(&job.source)?;
    let source = spec.open(RetryConfig::default(), SimulatedLatency::default())?;
    let mut envelopes = Vec::new();
    for env in source.stream_recent(job.from_ts, None)?.take(job.limit.unwrap_or(usize::MAX)) {
        match env {
            Ok(e) => envelopes.push(e),
            // revisions deleted upstream are skipped; anything else aborts
            Err(IngestError::NotFound(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    let corpus = build_corpus(envelopes, &registry, &revert, &patterns);
    let mut records = match job.sample {
        Some(n) => sample(corpus.records, job.sample_mode, n, job.seed),
        None => corpus.records,
    };
    let mut overrides_applied = 0;
    let mut inputs = vec![];
    if let Some(path) = &job.labels {
        let f = File::open(path).map_err(io_at(path))?;
        overrides_applied = apply_label_overrides(&mut records, &read_label_overrides(BufReader::new(f))?);
        inputs.push(path.clone());
    }
    split_train_test(&mut records, job.train_ratio, job.seed)?;
    let mut summary = CorpusSummary::from_records(&records);
    summary.bot_edits_excluded = corpus.summary.bot_edits_excluded;
    summary.malformed = corpus.summary.malformed;
    if let Some(parent) = job.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_at(parent))?;
    }
    let f = File::create(&job.out).map_err(io_at(&job.out))?;
    write_corpus(BufWriter::new(f), &records, &revert, &summary)?;
    if let SourceSpec::Fixture { dir } = &spec {
        inputs.insert(0, dir.clone());
    }
    let manifest = rec.finish(&job.out, inputs, vec![job.out.clone()], Some(job.seed))?;
    Ok(CorpusOutcome {
        path: job.out,
        records: records.len(),
        positives: records.iter().filter(|r| r.label).count(),
        overrides_applied,
        summary_table: summary.to_table(),
        summary,
        manifest,
    })
}

/// Reads a corpus and refuses one built under another feature schema.
pub fn load_corpus(path: &Path) -> Result<(CorpusHeader, Vec<CorpusRecord>), JobError> {
    let f = File::open(path).map_err(io_at(path))?;
    let (header, records) = read_corpus(BufReader::new(f))?;
    if header.feature_schema_version != FEATURE_SCHEMA_VERSION {
        return Err(JobError::SchemaMismatch(format!(
            "corpus features {}, expected {FEATURE_SCHEMA_VERSION}",
            header.feature_schema_version
        )));
    }
    Ok((header, records))
}

fn read_grid(path: Option<&Path>, seed: u64) -> Result<Option<Vec<ForestParams>>, JobError> {
    path.map(|p| {
        let text = std::fs::read_to_string(p).map_err(io_at(p))?;
        Ok(parse_grid(&text, seed)?)
    })
    .transpose()
}

pub fn train_model(job: TrainJob) -> Result<TrainOutcome, JobError> {
    let rec = Recorder::start(Job::Train(job.clone()));
    job.params.validate()?;
    let (_, records) = load_corpus(&job.corpus)?;
    let (x, y) = design_matrix(&records, Split::Train, &job.groups)?;
    let params = match read_grid(job.grid.as_deref(), job.params.seed)? {
        Some(grid) => grid_search(&x, &y, &grid, job.folds)?.best,
        None => job.params.clone(),
    };
    let model = train(&x, &y, &job.groups, &params)?;
    let bytes = model.to_json();
    if let Some(parent) = job.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_at(parent))?;
    }
    std::fs::write(&job.out, &bytes).map_err(io_at(&job.out))?;
    let mut inputs = vec![job.corpus.clone()];
    inputs.extend(job.grid.clone());
    let manifest = rec.finish(&job.out, inputs, vec![job.out.clone()], Some(params.seed))?;
    Ok(TrainOutcome {
        path: job.out,
        model_version: model_version(&bytes),
        params,
        n: model.summary.n,
        n_positive: model.summary.n_positive,
        manifest,
    })
}

fn write_report(report: &EvalReport, dir: &Path) -> Result<(PathBuf, String, Vec<PathBuf>), JobError> {
    std::fs::create_dir_all(dir).map_err(io_at(dir))?;
    let json = dir.join(REPORT_JSON);
    std::fs::write(&json, report.to_json()).map_err(io_at(&json))?;
    let table = report.to_table();
    let txt = dir.join(REPORT_TABLE);
    std::fs::write(&txt, &table).map_err(io_at(&txt))?;
    let curves = report.write_curves(&dir.join(CURVES_DIR))?;
    Ok((json, table, curves))
}

pub fn evaluate(job: EvaluateJob) -> Result<EvaluateOutcome, JobError> {
    let rec = Recorder::start(Job::Evaluate(job.clone()));
    if let Some(r) = job.target_recall {
        if !(r > 0.0 && r <= 1.0) {
            return Err(JobError::Config(format!("target recall {r} must lie in (0, 1]")));
        }
    }
    let (header, records) = load_corpus(&job.corpus)?;
    let mut inputs = vec![job.corpus.clone()];
    let report = match &job.model {
        Some(path) => {
            let bytes = std::fs::read(path).map_err(io_at(path))?;
            let model = TrainedModel::from_json(&bytes)?;
            if model.feature_schema_version != header.feature_schema_version {
                return Err(JobError::SchemaMismatch(format!(
                    "model features {}, corpus features {}",
                    model.feature_schema_version, header.feature_schema_version
                )));
            }
            inputs.push(path.clone());
            let row = score_split(&model, &records, job.target_recall)?;
            let mut report = ablation_shell(&records, job.target_recall, model.params.seed);
            report.rows = vec![row];
            report
        }
        None => {
            let mut cfg = AblationConfig::new(job.params.clone());
            if let Some(grid) = read_grid(job.grid.as_deref(), job.params.seed)? {
                cfg.grid = grid;
            }
            cfg.folds = job.folds;
            cfg.target_recall = job.target_recall;
            if let Some(c) = &job.combos {
                cfg.combos = c.clone();
            }
            ablation_run(&records, &cfg)?
        }
    };
    let (report_path, table, curve_files) = write_report(&report, &job.out_dir)?;
    let mut outputs = vec![report_path.clone(), job.out_dir.join(REPORT_TABLE)];
    outputs.extend(curve_files.iter().cloned());
    let manifest = rec.finish(&report_path, inputs, outputs, Some(report.seed))?;
    Ok(EvaluateOutcome { report, table, report_path, curve_files, manifest })
}

/// Report metadata for a single-model evaluation, rows filled by the caller.
fn ablation_shell(records: &[CorpusRecord], target_recall: Option<f64>, seed: u64) -> EvalReport {
    let test: Vec<&CorpusRecord> = records.iter().filter(|r| r.split == Split::Test).collect();
    let positives = test.iter().filter(|r| r.label).count();
    let mut report = EvalReport::empty(seed, target_recall);
    report.n_train = records.iter().filter(|r| r.split == Split::Train).count();
    report.n_test = test.len();
    report.test_prevalence = if test.is_empty() { 0.0 } else { positives as f64 / test.len() as f64 };
    report
}

pub fn report(job: ReportJob) -> Result<ReportOutcome, JobError> {
    let bytes = std::fs::read(&job.report).map_err(|e| JobError::MissingReport(format!("{}: {e}", job.report.display())))?;
    let report: EvalReport =
        serde_json::from_slice(&bytes).map_err(|e| JobError::Data(format!("{}: {e}", job.report.display())))?;
    let dir = job
        .out_dir
        .clone()
        .unwrap_or_else(|| job.report.parent().unwrap_or(Path::new(".")).join(CURVES_DIR));
    let curve_files = report.write_curves(&dir)?;
    Ok(ReportOutcome { table: report.to_table(), curve_files })
}

/// Re-runs the job recorded in a manifest.
pub fn rerun(manifest: &Path) -> Result<Outcome, JobError> {
    run(RunManifest::read(manifest)?.job)
}

pub fn parse_window(text: &str) -> Result<i64, JobError> {
    parse_duration(text).ok_or_else(|| JobError::Config(format!("duration {text:?}")))
}
