//! Revision sources: a directory of fixtures, or a live MediaWiki Action API.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;
use std::thread::sleep;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::edit::{is_ip_name, EditMeta, UserInfo};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionEnvelope {
    pub meta: EditMeta,
    #[serde(default)]
    pub parent_json: Option<String>,
    pub child_json: String,
}

impl RevisionEnvelope {
    pub fn is_consistent(&self) -> bool {
        self.parent_json.is_none() == self.meta.is_creation() && self.meta.is_consistent()
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("revision {0} not found")]
    NotFound(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed upstream data: {0}")]
    Malformed(String),
    #[error("invalid checkpoint: {0}")]
    CheckpointInvalid(String),
    #[error("invalid source: {0}")]
    Config(String),
}

impl IngestError {
    pub fn is_not_found(&self) -> bool {
        matches!(self, IngestError::NotFound(_))
    }
}

/// Resume cursor, serialized as `<timestamp>:<rev_id>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Checkpoint {
    pub timestamp: i64,
    pub rev_id: u64,
}

impl Checkpoint {
    pub fn of(meta: &EditMeta) -> Self {
        Checkpoint { timestamp: meta.timestamp, rev_id: meta.rev_id }
    }
}

impl fmt::Display for Checkpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.timestamp, self.rev_id)
    }
}

impl FromStr for Checkpoint {
    type Err = IngestError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || IngestError::CheckpointInvalid(s.to_owned());
        let (ts, rev) = s.trim().split_once(':').ok_or_else(bad)?;
        Ok(Checkpoint {
            timestamp: ts.parse().map_err(|_| bad())?,
            rev_id: rev.parse().map_err(|_| bad())?,
        })
    }
}

pub type EnvelopeStream<'a> = Box<dyn Iterator<Item = Result<RevisionEnvelope, IngestError>> + Send + 'a>;

pub trait RevisionSource: Send + Sync {
    fn fetch_revision(&self, rev_id: u64) -> Result<RevisionEnvelope, IngestError>;

    /// One result per requested id, in request order.
    fn fetch_revisions(&self, rev_ids: &[u64]) -> Vec<(u64, Result<RevisionEnvelope, IngestError>)> {
        rev_ids.iter().map(|&r| (r, self.fetch_revision(r))).collect()
    }

    fn fetch_user(&self, name: &str) -> Result<UserInfo, IngestError>;

    /// Envelopes at or after `from_ts`, strictly after `checkpoint` when given.
    fn stream_recent(&self, from_ts: i64, checkpoint: Option<Checkpoint>) -> Result<EnvelopeStream<'_>, IngestError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryConfig {
    pub max_attempts: u32,
    pub backoff_base: Duration,
}

impl Default for RetryConfig {
    fn default() -> Self {
        RetryConfig { max_attempts: 4, backoff_base: Duration::from_millis(500) }
    }
}

/// Artificial upstream cost for fixtures: a fixed cost per call plus a
/// cost per revision fetched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SimulatedLatency {
    pub per_call: Duration,
    pub per_revision: Duration,
}

impl SimulatedLatency {
    fn pay(&self, revisions: usize) {
        let total = self.per_call + self.per_revision * revisions as u32;
        if !total.is_zero() {
            sleep(total);
        }
    }
}

impl FromStr for SimulatedLatency {
    type Err = IngestError;
    /// `<per_call_ms>:<per_revision_ms>`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || IngestError::Config(format!("latency {s:?}, expected <call_ms>:<revision_ms>"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let ms = |t: &str| t.trim().parse::<f64>().ok().filter(|v| *v >= 0.0).ok_or_else(bad);
        Ok(SimulatedLatency {
            per_call: Duration::from_secs_f64(ms(a)? / 1000.0),
            per_revision: Duration::from_secs_f64(ms(b)? / 1000.0),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    Live { api_url: String, rate_limit: f64, user_agent: String },
    Fixture { dir: PathBuf },
}

pub const DEFAULT_USER_AGENT: &str = "vandal-sentinel/0.1 (edit scoring research tool)";

impl SourceSpec {
    /// `live:<url>` or `fixture:<dir>`.
    pub fn parse(text: &str) -> Result<Self, IngestError> {
        if let Some(url) = text.strip_prefix("live:") {
            url::Url::parse(url).map_err(|e| IngestError::Config(format!("{url}: {e}")))?;
            let user_agent = std::env::var("VS_USER_AGENT").unwrap_or_else(|_| DEFAULT_USER_AGENT.to_owned());
            Ok(SourceSpec::Live { api_url: url.to_owned(), rate_limit: 5.0, user_agent })
        } else if let Some(dir) = text.strip_prefix("fixture:") {
            Ok(SourceSpec::Fixture { dir: PathBuf::from(dir) })
        } else {
            Err(IngestError::Config(format!("{text:?}: expected live:<url> or fixture:<dir>")))
        }
    }

    pub fn open(&self, retry: RetryConfig, latency: SimulatedLatency) -> Result<Box<dyn RevisionSource>, IngestError> {
        Ok(match self {
            SourceSpec::Fixture { dir } => Box::new(FixtureSource::open(dir)?.with_latency(latency)),
            SourceSpec::Live { api_url, rate_limit, user_agent } => {
                Box::new(LiveSource::new(api_url, *rate_limit, user_agent, retry)?)
            }
        })
    }
}

impl fmt::Display for SourceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceSpec::Live { api_url, .. } => write!(f, "live:{api_url}"),
            SourceSpec::Fixture { dir } => write!(f, "fixture:{}", dir.display()),
        }
    }
}

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const USERS_FILE: &str = "users.json";

/// `<rev_id>.json` envelopes, a `manifest.txt` giving stream order, and an
/// optional `users.json` map of user name to info.
#[derive(Debug)]
pub struct FixtureSource {
    dir: PathBuf,
    manifest: Vec<u64>,
    users: HashMap<String, UserInfo>,
    latency: SimulatedLatency,
}

impl FixtureSource {
    pub fn open(dir: &Path) -> Result<Self, IngestError> {
        if !dir.is_dir() {
            return Err(IngestError::Config(format!("{} is not a directory", dir.display())));
        }
        let manifest = match std::fs::read_to_string(dir.join(MANIFEST_FILE)) {
            Ok(text) => text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| l.parse::<u64>().map_err(|e| IngestError::Malformed(format!("manifest {l:?}: {e}"))))
                .collect::<Result<_, _>>()?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(IngestError::Transport(e.to_string())),
        };
        let users = match std::fs::read(dir.join(USERS_FILE)) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| IngestError::Malformed(format!("users: {e}")))?,
            Err(_) => HashMap::new(),
        };
        Ok(FixtureSource { dir: dir.to_owned(), manifest, users, latency: SimulatedLatency::default() })
    }

    pub fn with_latency(mut self, latency: SimulatedLatency) -> Self {
        self.latency = latency;
        self
    }

    pub fn manifest(&self) -> &[u64] {
        &self.manifest
    }

    fn read(&self, rev_id: u64) -> Result<RevisionEnvelope, IngestError> {
        let path = self.dir.join(format!("{rev_id}.json"));
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(IngestError::NotFound(rev_id.to_string())),
            Err(e) => return Err(IngestError::Transport(e.to_string())),
        };
        let env: RevisionEnvelope =
            serde_json::from_slice(&bytes).map_err(|e| IngestError::Malformed(format!("{}: {e}", path.display())))?;
        if env.meta.rev_id != rev_id || !env.is_consistent() {
            return Err(IngestError::Malformed(format!("{}: inconsistent envelope", path.display())));
        }
        Ok(env)
    }
}

pub fn write_fixture(dir: &Path, env: &RevisionEnvelope) -> std::io::Result<()> {
    let bytes = serde_json::to_vec(env)?;
    std::fs::write(dir.join(format!("{}.json", env.meta.rev_id)), bytes)
}

impl RevisionSource for FixtureSource {
    fn fetch_revision(&self, rev_id: u64) -> Result<RevisionEnvelope, IngestError> {
        self.latency.pay(1);
        self.read(rev_id)
    }

    fn fetch_revisions(&self, rev_ids: &[u64]) -> Vec<(u64, Result<RevisionEnvelope, IngestError>)> {
        self.latency.pay(rev_ids.len());
        rev_ids.iter().map(|&r| (r, self.read(r))).collect()
    }

    fn fetch_user(&self, name: &str) -> Result<UserInfo, IngestError> {
        if is_ip_name(name) {
            return Ok(UserInfo::anonymous(name));
        }
        self.users.get(name).cloned().ok_or_else(|| IngestError::NotFound(name.to_owned()))
    }

    fn stream_recent(&self, from_ts: i64, checkpoint: Option<Checkpoint>) -> Result<EnvelopeStream<'_>, IngestError> {
        let start = match checkpoint {
            None => 0,
            Some(cp) => {
                let pos = self
                    .manifest
                    .iter()
                    .position(|&r| r == cp.rev_id)
                    .ok_or_else(|| IngestError::CheckpointInvalid(cp.to_string()))?;
                let env = self.read(cp.rev_id)?;
                if env.meta.timestamp != cp.timestamp {
                    return Err(IngestError::CheckpointInvalid(cp.to_string()));
                }
                pos + 1
            }
        };
        Ok(Box::new(
            self.manifest[start..]
                .iter()
                .map(move |&r| self.read(r))
                .filter(move |e| !matches!(e, Ok(env) if env.meta.timestamp < from_ts)),
        ))
    }
}

/// At most `capacity` requests in any window of `window` length.
#[derive(Debug)]
pub struct RateLimiter {
    capacity: usize,
    window: Duration,
    sent: Mutex<VecDeque<Instant>>,
}

impl RateLimiter {
    pub fn per_second(rate: f64) -> Self {
        let capacity = rate.floor().max(1.0);
        RateLimiter {
            capacity: capacity as usize,
            window: Duration::from_secs_f64(capacity / rate),
            sent: Mutex::new(VecDeque::new()),
        }
    }

    /// Blocks until a request may be sent, then records it.
    pub fn acquire(&self) {
        let mut sent = self.sent.lock().expect("limiter lock");
        loop {
            let now = Instant::now();
            while sent.front().is_some_and(|t| now.duration_since(*t) >= self.window) {
                sent.pop_front();
            }
            if sent.len() < self.capacity {
                sent.push_back(now);
                return;
            }
            let wait = self.window - now.duration_since(*sent.front().expect("nonempty"));
            sleep(wait);
        }
    }
}

/// Batches of this many ids go into one `revids=` query.
pub const API_BATCH: usize = 50;

pub struct LiveSource {
    api_url: String,
    http: reqwest::blocking::Client,
    limiter: RateLimiter,
    retry: RetryConfig,
    users: Mutex<HashMap<String, UserInfo>>,
}

fn parse_ts(s: &str) -> Result<i64, IngestError> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc).timestamp())
        .map_err(|e| IngestError::Malformed(format!("timestamp {s:?}: {e}")))
}

fn iso(ts: i64) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .unwrap_or_default()
        .format("%Y-%m-%dT%H:%M:%SZ")
        .to_string()
}

struct RawRevision {
    rev_id: u64,
    parent_id: u64,
    user: String,
    comment: String,
    timestamp: i64,
    content: String,
}

impl LiveSource {
    pub fn new(api_url: &str, rate_limit: f64, user_agent: &str, retry: RetryConfig) -> Result<Self, IngestError> {
        if !(rate_limit > 0.0) {
            return Err(IngestError::Config("rate limit must be positive".into()));
        }
        if retry.max_attempts < 1 {
            return Err(IngestError::Config("max_attempts must be at least 1".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .user_agent(user_agent)
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| IngestError::Config(e.to_string()))?;
        Ok(LiveSource {
            api_url: api_url.to_owned(),
            http,
            limiter: RateLimiter::per_second(rate_limit),
            retry,
            users: Mutex::new(HashMap::new()),
        })
    }

    fn get(&self, params: &[(&str, String)]) -> Result<Value, IngestError> {
        let mut last = String::new();
        for attempt in 0..self.retry.max_attempts {
            if attempt > 0 {
                sleep(self.retry.backoff_base * 2u32.pow(attempt - 1));
            }
            self.limiter.acquire();
            let resp = self
                .http
                .get(&self.api_url)
                .query(&[("format", "json"), ("formatversion", "2")])
                .query(params)
                .send();
            match resp {
                Ok(r) if r.status().is_success() => {
                    let body: Value = r.json().map_err(|e| IngestError::Malformed(e.to_string()))?;
                    if let Some(err) = body.get("error") {
                        return Err(IngestError::Malformed(format!("api error: {err}")));
                    }
                    return Ok(body);
                }
                Ok(r) if r.status().is_server_error() || r.status() == reqwest::StatusCode::TOO_MANY_REQUESTS => {
                    last = format!("HTTP {}", r.status());
                }
                Ok(r) => return Err(IngestError::Transport(format!("HTTP {}", r.status()))),
                Err(e) => last = e.to_string(),
            }
        }
        Err(IngestError::Transport(format!("{} attempts failed, last: {last}", self.retry.max_attempts)))
    }

    fn query_revisions(&self, ids: &[u64]) -> Result<HashMap<u64, Result<RawRevision, IngestError>>, IngestError> {
        let mut out = HashMap::new();
        for chunk in ids.chunks(API_BATCH) {
            let joined = chunk.iter().map(u64::to_string).collect::<Vec<_>>().join("|");
            let body = self.get(&[
                ("action", "query".into()),
                ("prop", "revisions".into()),
                ("revids", joined),
                ("rvprop", "ids|timestamp|user|comment|content".into()),
                ("rvslots", "main".into()),
            ])?;
            let query = &body["query"];
            for bad in query["badrevids"].as_object().into_iter().flat_map(|m| m.values()) {
                if let Some(r) = bad["revid"].as_u64() {
                    out.insert(r, Err(IngestError::NotFound(r.to_string())));
                }
            }
            let pages = query["pages"].as_array().cloned().unwrap_or_default();
            for rev in pages.iter().flat_map(|p| p["revisions"].as_array().cloned().unwrap_or_default()) {
                let Some(rev_id) = rev["revid"].as_u64() else {
                    return Err(IngestError::Malformed("revision without revid".into()));
                };
                let content = rev["slots"]["main"]["content"].as_str();
                let hidden = rev.get("texthidden").is_some() || rev.get("userhidden").is_some();
                let entry = match (content, hidden) {
                    (Some(c), false) => Ok(RawRevision {
                        rev_id,
                        parent_id: rev["parentid"].as_u64().unwrap_or(0),
                        user: rev["user"].as_str().unwrap_or_default().to_owned(),
                        comment: rev["comment"].as_str().unwrap_or_default().to_owned(),
                        timestamp: parse_ts(rev["timestamp"].as_str().unwrap_or_default())?,
                        content: c.to_owned(),
                    }),
                    _ => Err(IngestError::NotFound(rev_id.to_string())),
                };
                out.insert(rev_id, entry);
            }
        }
        Ok(out)
    }

    fn assemble(&self, ids: &[u64]) -> Result<Vec<(u64, Result<RevisionEnvelope, IngestError>)>, IngestError> {
        let mut children = self.query_revisions(ids)?;
        let parent_ids: Vec<u64> = children
            .values()
            .filter_map(|r| r.as_ref().ok())
            .map(|r| r.parent_id)
            .filter(|p| *p != 0)
            .collect();
        let mut parents = self.query_revisions(&parent_ids)?;
        let mut out = Vec::with_capacity(ids.len());
        for &id in ids {
            let entry = match children.remove(&id) {
                None => Err(IngestError::NotFound(id.to_string())),
                Some(Err(e)) => Err(e),
                Some(Ok(raw)) => self.envelope(raw, &mut parents),
            };
            out.push((id, entry));
        }
        Ok(out)
    }

    fn envelope(
        &self,
        raw: RawRevision,
        parents: &mut HashMap<u64, Result<RawRevision, IngestError>>,
    ) -> Result<RevisionEnvelope, IngestError> {
        let parent_json = match raw.parent_id {
            0 => None,
            p => match parents.get(&p) {
                Some(Ok(pr)) => Some(pr.content.clone()),
                _ => return Err(IngestError::NotFound(format!("parent {p} of {}", raw.rev_id))),
            },
        };
        let user = self.fetch_user(&raw.user)?;
        Ok(RevisionEnvelope {
            meta: EditMeta {
                rev_id: raw.rev_id,
                parent_rev_id: raw.parent_id,
                user,
                comment: raw.comment,
                timestamp: raw.timestamp,
            },
            parent_json,
            child_json: raw.content,
        })
    }
}

impl RevisionSource for LiveSource {
    fn fetch_revision(&self, rev_id: u64) -> Result<RevisionEnvelope, IngestError> {
        self.assemble(&[rev_id])?.pop().map(|(_, r)| r).unwrap_or_else(|| Err(IngestError::NotFound(rev_id.to_string())))
    }

    fn fetch_revisions(&self, rev_ids: &[u64]) -> Vec<(u64, Result<RevisionEnvelope, IngestError>)> {
        match self.assemble(rev_ids) {
            Ok(v) => v,
            Err(e) => {
                let msg = e.to_string();
                rev_ids.iter().map(|&r| (r, Err(IngestError::Transport(msg.clone())))).collect()
            }
        }
    }

    fn fetch_user(&self, name: &str) -> Result<UserInfo, IngestError> {
        if is_ip_name(name) {
            return Ok(UserInfo::anonymous(name));
        }
        if let Some(u) = self.users.lock().expect("user cache").get(name) {
            return Ok(u.clone());
        }
        let body = self.get(&[
            ("action", "query".into()),
            ("list", "users".into()),
            ("ususers", name.to_owned()),
            ("usprop", "groups|registration".into()),
        ])?;
        let entry = body["query"]["users"]
            .as_array()
            .and_then(|a| a.first())
            .ok_or_else(|| IngestError::Malformed("users query without users".into()))?;
        if entry.get("missing").is_some() || entry.get("invalid").is_some() {
            return Err(IngestError::NotFound(name.to_owned()));
        }
        let groups: Vec<&str> = entry["groups"]
            .as_array()
            .map(|g| g.iter().filter_map(Value::as_str).filter(|g| *g != "*").collect())
            .unwrap_or_default();
        let registration = entry["registration"].as_str().map(parse_ts).transpose()?;
        let user = UserInfo::registered(name, registration, &groups);
        self.users.lock().expect("user cache").insert(name.to_owned(), user.clone());
        Ok(user)
    }

    fn stream_recent(&self, from_ts: i64, checkpoint: Option<Checkpoint>) -> Result<EnvelopeStream<'_>, IngestError> {
        let mut cont: Option<String> = None;
        let mut ids: Vec<(i64, u64)> = Vec::new();
        loop {
            let mut params = vec![
                ("action", "query".to_owned()),
                ("list", "recentchanges".to_owned()),
                ("rcstart", iso(from_ts)),
                ("rcdir", "newer".to_owned()),
                ("rctype", "edit|new".to_owned()),
                ("rcnamespace", "0".to_owned()),
                ("rcprop", "ids|timestamp".to_owned()),
                ("rclimit", "500".to_owned()),
            ];
            if let Some(c) = &cont {
                params.push(("rccontinue", c.clone()));
            }
            let body = self.get(&params)?;
            for rc in body["query"]["recentchanges"].as_array().into_iter().flatten() {
                let (Some(rev), Some(ts)) = (rc["revid"].as_u64(), rc["timestamp"].as_str()) else {
                    return Err(IngestError::Malformed("recentchanges entry without revid".into()));
                };
                ids.push((parse_ts(ts)?, rev));
            }
            match body["continue"]["rccontinue"].as_str() {
                Some(c) => cont = Some(c.to_owned()),
                None => break,
            }
        }
        ids.sort_unstable();
        if let Some(cp) = checkpoint {
            ids.retain(|&(ts, rev)| (ts, rev) > (cp.timestamp, cp.rev_id));
        }
        let ordered: Vec<u64> = ids.into_iter().map(|(_, r)| r).collect();
        Ok(Box::new(
            ordered
                .chunks(API_BATCH)
                .map(|c| c.to_vec())
                .collect::<Vec<_>>()
                .into_iter()
                .flat_map(move |chunk| self.fetch_revisions(&chunk).into_iter().map(|(_, r)| r)),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(rev: u64, parent: u64, ts: i64) -> RevisionEnvelope {
        RevisionEnvelope {
            meta: EditMeta {
                rev_id: rev,
                parent_rev_id: parent,
                user: UserInfo::anonymous("192.0.2.7"),
                comment: String::new(),
                timestamp: ts,
            },
            parent_json: (parent != 0).then(|| "{\"id\":\"Q1\"}".to_owned()),
            child_json: "{\"id\":\"Q1\"}".to_owned(),
        }
    }

    fn fixture(revs: &[(u64, u64, i64)]) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = String::new();
        for &(r, p, t) in revs {
            write_fixture(dir.path(), &env(r, p, t)).unwrap();
            manifest.push_str(&format!("{r}\n"));
        }
        std::fs::write(dir.path().join(MANIFEST_FILE), manifest).unwrap();
        let users = r#"{"Admin":{"name":"Admin","groups":["sysop"],"registration":1388534400}}"#;
        std::fs::write(dir.path().join(USERS_FILE), users).unwrap();
        dir
    }

    #[test]
    fn fixture_fetch_and_missing() {
        let d = fixture(&[(123, 0, 5)]);
        let src = FixtureSource::open(d.path()).unwrap();
        assert_eq!(src.fetch_revision(123).unwrap().meta.rev_id, 123);
        assert!(src.fetch_revision(124).unwrap_err().is_not_found());
    }

    #[test]
    fn stream_order_and_resume() {
        let revs = [(1, 0, 10), (2, 1, 20), (3, 2, 30), (4, 3, 40), (5, 4, 50)];
        let d = fixture(&revs);
        let src = FixtureSource::open(d.path()).unwrap();
        let all: Vec<u64> = src.stream_recent(0, None).unwrap().map(|e| e.unwrap().meta.rev_id).collect();
        assert_eq!(all, vec![1, 2, 3, 4, 5]);
        let cp: Checkpoint = "30:3".parse().unwrap();
        let rest: Vec<u64> = src.stream_recent(0, Some(cp)).unwrap().map(|e| e.unwrap().meta.rev_id).collect();
        assert_eq!(rest, vec![4, 5]);
        assert!(matches!(
            src.stream_recent(0, Some("31:3".parse().unwrap())),
            Err(IngestError::CheckpointInvalid(_))
        ));
        assert!(matches!("x".parse::<Checkpoint>(), Err(IngestError::CheckpointInvalid(_))));
        let late: Vec<u64> = src.stream_recent(35, None).unwrap().map(|e| e.unwrap().meta.rev_id).collect();
        assert_eq!(late, vec![4, 5]);
    }

    #[test]
    fn empty_manifest() {
        let d = fixture(&[]);
        let src = FixtureSource::open(d.path()).unwrap();
        assert_eq!(src.stream_recent(0, None).unwrap().count(), 0);
    }

    #[test]
    fn fixture_users() {
        let d = fixture(&[]);
        let src = FixtureSource::open(d.path()).unwrap();
        assert!(src.fetch_user("192.0.2.7").unwrap().is_anonymous);
        let admin = src.fetch_user("Admin").unwrap();
        assert!(admin.groups.contains("sysop"));
        let m = EditMeta { rev_id: 2, parent_rev_id: 1, user: admin, comment: String::new(), timestamp: 1_420_070_400 };
        assert_eq!(m.editor_age(), Some(31_536_000));
        assert!(src.fetch_user("Nobody").unwrap_err().is_not_found());
    }

    #[test]
    fn source_spec_parsing() {
        assert!(matches!(SourceSpec::parse("fixture:/tmp/x").unwrap(), SourceSpec::Fixture { .. }));
        assert!(matches!(SourceSpec::parse("live:https://example.org/w/api.php").unwrap(), SourceSpec::Live { .. }));
        assert!(SourceSpec::parse("ftp:x").is_err());
        let l: SimulatedLatency = "20:2.5".parse().unwrap();
        assert_eq!(l.per_call, Duration::from_millis(20));
        assert_eq!(l.per_revision, Duration::from_micros(2500));
    }

    #[test]
    fn limiter_spacing() {
        let lim = RateLimiter::per_second(20.0);
        let start = Instant::now();
        for _ in 0..25 {
            lim.acquire();
        }
        assert!(start.elapsed() >= Duration::from_secs(1));
    }

    #[test]
    fn fractional_rate() {
        let lim = RateLimiter::per_second(4.0);
        assert_eq!(lim.capacity, 4);
        let lim = RateLimiter::per_second(0.5);
        assert_eq!((lim.capacity, lim.window), (1, Duration::from_secs(2)));
    }
}
