//! HTTP wire types shared by the scoring service and its clients.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::LabelClass;
use crate::pipeline::EditSummary;

pub const DEFAULT_MAX_BATCH: usize = 50;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreSource {
    Cache,
    Fresh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probability {
    #[serde(rename = "true")]
    pub vandalism: f64,
    #[serde(rename = "false")]
    pub good: f64,
}

impl Probability {
    pub fn new(p_true: f64) -> Self {
        Probability { vandalism: p_true, good: 1.0 - p_true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub rev_id: u64,
    pub probability: Probability,
    pub prediction: bool,
    pub model_version: String,
    /// UTC, RFC 3339.
    pub computed_at: String,
    pub source: ScoreSource,
}

/// Error names used in bodies and per-revision batch slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorKind {
    RevisionNotFound,
    UpstreamUnavailable,
    ModelUnavailable,
    BatchTooLarge,
    InvalidRequest,
    ScoringFailed,
    UnknownRevision,
    ConflictingConcurrentLabel,
    MissingCurves,
    MissingReport,
    InvalidData,
    SchemaMismatch,
    ServiceUnreachable,
}

impl ErrorKind {
    pub fn http_status(self) -> u16 {
        match self {
            ErrorKind::RevisionNotFound | ErrorKind::UnknownRevision | ErrorKind::MissingCurves | ErrorKind::MissingReport => 404,
            ErrorKind::UpstreamUnavailable | ErrorKind::ServiceUnreachable => 502,
            ErrorKind::ModelUnavailable => 503,
            ErrorKind::BatchTooLarge | ErrorKind::InvalidRequest => 400,
            ErrorKind::ScoringFailed | ErrorKind::InvalidData | ErrorKind::SchemaMismatch => 422,
            ErrorKind::ConflictingConcurrentLabel => 409,
        }
    }

    /// Process exit code for command-line tools: 2 configuration, 3 data,
    /// 4 upstream.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::InvalidRequest | ErrorKind::BatchTooLarge => 2,
            ErrorKind::UpstreamUnavailable | ErrorKind::ServiceUnreachable => 4,
            _ => 3,
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorKind,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRequest {
    pub rev_ids: Vec<u64>,
    /// Recompute even when cached; the cached entry is left as it was.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub refresh: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatchSlot {
    Entry(ScoreEntry),
    Error(ErrorBody),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResponse {
    /// Keyed by the decimal rev_id.
    pub scores: BTreeMap<String, BatchSlot>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatencyMode {
    Single,
    Batch,
    Cached,
    Precache,
}

impl LatencyMode {
    pub const ALL: [LatencyMode; 4] = [LatencyMode::Single, LatencyMode::Batch, LatencyMode::Cached, LatencyMode::Precache];

    pub fn as_str(self) -> &'static str {
        match self {
            LatencyMode::Single => "single",
            LatencyMode::Batch => "batch",
            LatencyMode::Cached => "cached",
            LatencyMode::Precache => "precache",
        }
    }
}

impl FromStr for LatencyMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LatencyMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown latency mode {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyRecord {
    pub mode: LatencyMode,
    /// Wall time per revision; batch time is divided by batch size.
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub mode: LatencyMode,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
}

impl LatencySummary {
    /// `None` for an empty sample.
    pub fn of(mode: LatencyMode, seconds: &[f64]) -> Option<Self> {
        if seconds.is_empty() {
            return None;
        }
        let mut s = seconds.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 { s[n / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 };
        let p95 = s[((n as f64 * 0.95).ceil() as usize).clamp(1, n) - 1];
        Some(LatencySummary { mode, count: n, mean: s.iter().sum::<f64>() / n as f64, median, p95 })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub summaries: Vec<LatencySummary>,
    pub records: Vec<LatencyRecord>,
}

impl LatencyReport {
    pub fn from_records(records: Vec<LatencyRecord>) -> Self {
        let summaries = LatencyMode::ALL
            .into_iter()
            .filter_map(|m| {
                let s: Vec<f64> = records.iter().filter(|r| r.mode == m).map(|r| r.seconds).collect();
                LatencySummary::of(m, &s)
            })
            .collect();
        LatencyReport { summaries, records }
    }

    pub fn summary(&self, mode: LatencyMode) -> Option<&LatencySummary> {
        self.summaries.iter().find(|s| s.mode == mode)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode,seconds,batch_size\n");
        for r in &self.records {
            let b = r.batch_size.map(|b| b.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{b}\n", r.mode.as_str(), r.seconds));
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrecacheStatus {
    pub running: bool,
    pub scored: u64,
    pub failed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_version: String,
    pub cache_entries: usize,
    pub precache: PrecacheStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelState {
    #[default]
    Unlabeled,
    Vandalism,
    GoodfaithDamaging,
    Good,
}

impl From<LabelClass> for LabelState {
    fn from(c: LabelClass) -> Self {
        match c {
            LabelClass::Vandalism => LabelState::Vandalism,
            LabelClass::GoodfaithDamaging => LabelState::GoodfaithDamaging,
            LabelClass::Good => LabelState::Good,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub rev_id: u64,
    pub item_id: String,
    pub probability_true: f64,
    pub summary: EditSummary,
    pub label_state: LabelState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labeled_by: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labeled_at: Option<String>,
    /// Number of label events so far; echo it back when labeling.
    pub label_version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuePage {
    pub items: Vec<QueueItem>,
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub rev_id: u64,
    pub class: LabelClass,
    pub reviewer: String,
    /// Label events the reviewer saw; a mismatch is a conflict unless `confirm`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_version: Option<u64>,
    #[serde(default)]
    pub confirm: bool,
}

/// One line of the label log and of the export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEvent {
    pub rev_id: u64,
    pub class: LabelClass,
    pub reviewer: String,
    pub labeled_at: String,
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelConflict {
    pub error: ErrorKind,
    pub current: LabelEvent,
}
