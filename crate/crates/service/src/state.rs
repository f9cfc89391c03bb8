//! Scoring logic behind the HTTP handlers.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use chrono::{SecondsFormat, Utc};
use vandal_core::api::{
    BatchResponse, BatchSlot, ErrorBody, ErrorKind, Health, LabelState, LatencyMode, LatencyRecord, LatencyReport,
    PrecacheStatus, Probability, QueueItem, QueuePage, ScoreEntry, ScoreSource, DEFAULT_MAX_BATCH, DEFAULT_THRESHOLD,
};
use vandal_core::ingestion::{Checkpoint, IngestError, RevisionEnvelope, RevisionSource};
use vandal_core::pipeline::Scorer;

use crate::cache::{follow, CachedScore, Claim, Flights, Key, Lead, ScoreCache, DEFAULT_BUDGET};
use crate::error::ApiError;
use crate::labels::LabelStore;

pub const CHECKPOINT_FILE: &str = "precache.checkpoint";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub threshold: f64,
    pub max_batch: usize,
    /// Holds the score cache, the label log and the precache checkpoint.
    pub cache_dir: Option<PathBuf>,
    pub cache_budget: usize,
    /// Directory of `curve_*.csv` files written by an evaluation.
    pub curves_dir: Option<PathBuf>,
    pub precache: bool,
    /// Stream start for the precache worker, UTC seconds.
    pub precache_from: i64,
    /// Pause between passes over an exhausted stream.
    pub poll_interval: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            threshold: DEFAULT_THRESHOLD,
            max_batch: DEFAULT_MAX_BATCH,
            cache_dir: None,
            cache_budget: DEFAULT_BUDGET,
            curves_dir: None,
            precache: false,
            precache_from: 0,
            poll_interval: Duration::from_secs(5),
        }
    }
}

pub struct Service {
    scorer: Option<Arc<Scorer>>,
    source: Option<Arc<dyn RevisionSource>>,
    cache: ScoreCache,
    flights: Arc<Flights>,
    pub(crate) labels: LabelStore,
    pub(crate) config: ServiceConfig,
    latency: Mutex<Vec<LatencyRecord>>,
    precache: Mutex<PrecacheStatus>,
    checkpoint: Mutex<Option<Checkpoint>>,
    stop: AtomicBool,
}

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn ingest_error(e: &IngestError) -> ApiError {
    match e {
        IngestError::NotFound(m) => ApiError::new(ErrorKind::RevisionNotFound, format!("revision {m} not found")),
        IngestError::Malformed(m) => ApiError::new(ErrorKind::ScoringFailed, m.clone()),
        other => ApiError::new(ErrorKind::UpstreamUnavailable, other.to_string()),
    }
}

impl Service {
    pub fn new(
        scorer: Option<Scorer>,
        source: Option<Arc<dyn RevisionSource>>,
        config: ServiceConfig,
    ) -> std::io::Result<Self> {
        if !(0.0..=1.0).contains(&config.threshold) {
            return Err(std::io::Error::new(std::io::ErrorKind::InvalidInput, "threshold must lie in [0, 1]"));
        }
        if config.max_batch < 1 {
            return Err(std::io::Error::new(std::io::ErrorKind::InvalidInput, "max batch must be at least 1"));
        }
        let (cache, labels) = match &config.cache_dir {
            Some(dir) => (ScoreCache::open(dir, config.cache_budget)?, LabelStore::open(dir)?),
            None => (ScoreCache::in_memory(config.cache_budget), LabelStore::in_memory()),
        };
        Ok(Service {
            scorer: scorer.map(Arc::new),
            source,
            cache,
            flights: Arc::new(Flights::default()),
            labels,
            config,
            latency: Mutex::new(Vec::new()),
            precache: Mutex::new(PrecacheStatus::default()),
            checkpoint: Mutex::new(None),
            stop: AtomicBool::new(false),
        })
    }

    fn ready(&self) -> Result<(Arc<Scorer>, Arc<dyn RevisionSource>), ApiError> {
        let scorer = self.scorer.clone().ok_or_else(|| ApiError::new(ErrorKind::ModelUnavailable, "no model loaded"))?;
        let source = self
            .source
            .clone()
            .ok_or_else(|| ApiError::new(ErrorKind::UpstreamUnavailable, "no revision source configured"))?;
        Ok((scorer, source))
    }

    pub fn model_version(&self) -> Option<&str> {
        self.scorer.as_deref().map(Scorer::model_version)
    }

    fn key(&self, rev_id: u64) -> Option<Key> {
        self.model_version().map(|mv| Key { model_version: mv.to_owned(), rev_id })
    }

    fn entry(&self, c: &CachedScore, source: ScoreSource) -> ScoreEntry {
        ScoreEntry {
            rev_id: c.rev_id,
            probability: Probability::new(c.probability),
            prediction: c.probability >= self.config.threshold,
            model_version: c.model_version.clone(),
            computed_at: c.computed_at.clone(),
            source,
        }
    }

    fn record(&self, mode: LatencyMode, seconds: f64, batch_size: Option<usize>) {
        // a zero reading would mean the clock is too coarse; keep times positive
        let seconds = seconds.max(1e-9);
        self.latency.lock().expect("latency lock").push(LatencyRecord { mode, seconds, batch_size });
    }

    fn compute(scorer: &Scorer, env: &RevisionEnvelope) -> Result<Arc<CachedScore>, ApiError> {
        let s = scorer.score(env).map_err(|e| ApiError::new(ErrorKind::ScoringFailed, e.to_string()))?;
        Ok(Arc::new(CachedScore {
            model_version: scorer.model_version().to_owned(),
            rev_id: s.rev_id,
            probability: s.probability,
            computed_at: now(),
            summary: s.summary,
        }))
    }

    fn settle(&self, lead: Lead, result: Result<Arc<CachedScore>, ApiError>) -> Result<Arc<CachedScore>, ApiError> {
        let result = result.map(|c| self.cache.insert(c));
        lead.finish(result.clone().map_err(ErrorBody::from));
        result
    }

    /// Fetches and scores on the blocking pool with one upstream call.
    async fn compute_many(
        scorer: Arc<Scorer>,
        source: Arc<dyn RevisionSource>,
        ids: Vec<u64>,
    ) -> BTreeMap<u64, Result<Arc<CachedScore>, ApiError>> {
        let fallback = ids.clone();
        let joined = tokio::task::spawn_blocking(move || {
            let fetched = if ids.len() == 1 {
                vec![(ids[0], source.fetch_revision(ids[0]))]
            } else {
                source.fetch_revisions(&ids)
            };
            fetched
                .into_iter()
                .map(|(r, env)| (r, env.map_err(|e| ingest_error(&e)).and_then(|env| Self::compute(&scorer, &env))))
                .collect::<BTreeMap<u64, _>>()
        })
        .await;
        joined.unwrap_or_else(|e| {
            let err = ApiError::new(ErrorKind::ScoringFailed, e.to_string());
            fallback.into_iter().map(|r| (r, Err(err.clone()))).collect()
        })
    }

    fn take(computed: &mut BTreeMap<u64, Result<Arc<CachedScore>, ApiError>>, rev: u64) -> Result<Arc<CachedScore>, ApiError> {
        computed
            .remove(&rev)
            .unwrap_or_else(|| Err(ApiError::new(ErrorKind::RevisionNotFound, format!("revision {rev} not returned"))))
    }

    /// With `refresh`, the cache is bypassed for reading; the recomputed
    /// score is returned and the cached entry, if any, is kept.
    pub async fn score_single(&self, rev_id: u64, refresh: bool) -> Result<ScoreEntry, ApiError> {
        let started = Instant::now();
        let (scorer, source) = self.ready()?;
        let key = self.key(rev_id).expect("scorer present");
        if refresh {
            let fresh = Self::take(&mut Self::compute_many(scorer, source, vec![rev_id]).await, rev_id)?;
            self.cache.insert(fresh.clone());
            self.record(LatencyMode::Single, started.elapsed().as_secs_f64(), None);
            return Ok(self.entry(&fresh, ScoreSource::Fresh));
        }
        if let Some(hit) = self.cache.get(&key) {
            self.record(LatencyMode::Cached, started.elapsed().as_secs_f64(), None);
            return Ok(self.entry(&hit, ScoreSource::Cache));
        }
        let (scored, source_tag) = match self.flights.claim(key) {
            Claim::Follow(rx) => (follow_result(rx).await?, ScoreSource::Cache),
            Claim::Lead(lead) => {
                if let Some(hit) = self.cache.get(lead.key()) {
                    // another request finished between the lookup and the claim
                    lead.finish(Ok(hit.clone()));
                    self.record(LatencyMode::Cached, started.elapsed().as_secs_f64(), None);
                    return Ok(self.entry(&hit, ScoreSource::Cache));
                }
                let result = Self::take(&mut Self::compute_many(scorer, source, vec![rev_id]).await, rev_id);
                (self.settle(lead, result)?, ScoreSource::Fresh)
            }
        };
        self.record(LatencyMode::Single, started.elapsed().as_secs_f64(), None);
        Ok(self.entry(&scored, source_tag))
    }

    /// Every requested id gets an entry or an error; uncached ids are
    /// fetched with one batched upstream call.
    pub async fn score_batch(&self, rev_ids: &[u64], refresh: bool) -> Result<BatchResponse, ApiError> {
        let started = Instant::now();
        if rev_ids.is_empty() {
            return Err(ApiError::new(ErrorKind::InvalidRequest, "rev_ids must not be empty"));
        }
        if rev_ids.len() > self.config.max_batch {
            return Err(ApiError::new(
                ErrorKind::BatchTooLarge,
                format!("{} revisions requested, limit {}", rev_ids.len(), self.config.max_batch),
            ));
        }
        let (scorer, source) = self.ready()?;
        let unique: Vec<u64> = rev_ids.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let mut slots: BTreeMap<u64, BatchSlot> = BTreeMap::new();
        let mut leads: Vec<Lead> = Vec::new();
        let mut waits = Vec::new();
        let mut bypass = Vec::new();
        for &rev in &unique {
            let key = self.key(rev).expect("scorer present");
            if refresh {
                bypass.push(rev);
                continue;
            }
            if let Some(hit) = self.cache.get(&key) {
                slots.insert(rev, BatchSlot::Entry(self.entry(&hit, ScoreSource::Cache)));
                continue;
            }
            match self.flights.claim(key) {
                Claim::Lead(l) => match self.cache.get(l.key()) {
                    Some(hit) => {
                        slots.insert(rev, BatchSlot::Entry(self.entry(&hit, ScoreSource::Cache)));
                        l.finish(Ok(hit));
                    }
                    None => leads.push(l),
                },
                Claim::Follow(rx) => waits.push((rev, rx)),
            }
        }
        let wanted: Vec<u64> = bypass.iter().copied().chain(leads.iter().map(|l| l.key().rev_id)).collect();
        if !wanted.is_empty() {
            let mut computed = Self::compute_many(scorer, source, wanted).await;
            for rev in bypass {
                let slot = match Self::take(&mut computed, rev) {
                    Ok(c) => {
                        self.cache.insert(c.clone());
                        BatchSlot::Entry(self.entry(&c, ScoreSource::Fresh))
                    }
                    Err(e) => BatchSlot::Error(e.into()),
                };
                slots.insert(rev, slot);
            }
            for lead in leads {
                let rev = lead.key().rev_id;
                let result = Self::take(&mut computed, rev);
                let slot = match self.settle(lead, result) {
                    Ok(c) => BatchSlot::Entry(self.entry(&c, ScoreSource::Fresh)),
                    Err(e) => BatchSlot::Error(e.into()),
                };
                slots.insert(rev, slot);
            }
        }
        for (rev, rx) in waits {
            let slot = match follow_result(rx).await {
                Ok(c) => BatchSlot::Entry(self.entry(&c, ScoreSource::Cache)),
                Err(e) => BatchSlot::Error(e.into()),
            };
            slots.insert(rev, slot);
        }
        let n = unique.len();
        self.record(LatencyMode::Batch, started.elapsed().as_secs_f64() / n as f64, Some(n));
        Ok(BatchResponse { scores: slots.into_iter().map(|(r, s)| (r.to_string(), s)).collect() })
    }

    pub fn latency_report(&self) -> LatencyReport {
        LatencyReport::from_records(self.latency.lock().expect("latency lock").clone())
    }

    pub fn health(&self) -> Health {
        let precache = self.precache.lock().expect("precache lock").clone();
        let status = match (&self.scorer, &precache.halted) {
            (None, _) => "degraded: no model",
            (Some(_), Some(_)) => "degraded: precache halted",
            _ => "ok",
        };
        Health {
            status: status.to_owned(),
            model_version: self.model_version().unwrap_or_default().to_owned(),
            cache_entries: self.cache.len(),
            precache,
        }
    }

    /// Whether a revision has been scored by the current model.
    pub fn is_queued(&self, rev_id: u64) -> bool {
        self.key(rev_id).is_some_and(|k| self.cache.contains(&k))
    }

    /// Scored revisions at or above `min_score`, by probability descending
    /// then rev_id ascending. Pages count from 1.
    pub fn queue(&self, min_score: f64, page: usize, page_size: usize) -> Result<QueuePage, ApiError> {
        if page < 1 || page_size < 1 || page_size > 1000 {
            return Err(ApiError::new(ErrorKind::InvalidRequest, "page >= 1 and 1 <= page_size <= 1000"));
        }
        let mut scored: Vec<Arc<CachedScore>> = match self.model_version() {
            Some(mv) => self.cache.for_model(mv).into_iter().filter(|c| c.probability >= min_score).collect(),
            None => Vec::new(),
        };
        scored.sort_by(|a, b| b.probability.total_cmp(&a.probability).then(a.rev_id.cmp(&b.rev_id)));
        let total = scored.len();
        let items = scored
            .iter()
            .skip((page - 1) * page_size)
            .take(page_size)
            .map(|c| {
                let latest = self.labels.latest(c.rev_id);
                QueueItem {
                    rev_id: c.rev_id,
                    item_id: c.summary.item_id.clone(),
                    probability_true: c.probability,
                    summary: c.summary.clone(),
                    label_state: latest.as_ref().map_or(LabelState::Unlabeled, |e| e.class.into()),
                    labeled_by: latest.as_ref().map(|e| e.reviewer.clone()),
                    labeled_at: latest.as_ref().map(|e| e.labeled_at.clone()),
                    label_version: self.labels.version(c.rev_id),
                }
            })
            .collect();
        Ok(QueuePage { items, page, page_size, total })
    }

    pub fn curves_dir(&self) -> Option<&Path> {
        self.config.curves_dir.as_deref()
    }

    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    fn stopped(&self) -> bool {
        self.stop.load(Ordering::SeqCst)
    }

    fn checkpoint_path(&self) -> Option<PathBuf> {
        self.config.cache_dir.as_ref().map(|d| d.join(CHECKPOINT_FILE))
    }

    fn load_checkpoint(&self) -> Result<Option<Checkpoint>, String> {
        let Some(path) = self.checkpoint_path() else { return Ok(None) };
        match std::fs::read_to_string(&path) {
            Ok(text) => {
                let t = text.trim();
                let parsed = t.split_once(':').and_then(|(ts, rev)| Some(Checkpoint { timestamp: ts.parse().ok()?, rev_id: rev.parse().ok()? }));
                parsed.map(Some).ok_or_else(|| format!("{}: unreadable checkpoint {t:?}", path.display()))
            }
            Err(_) => Ok(None),
        }
    }

    fn save_checkpoint(&self, cp: Checkpoint) {
        *self.checkpoint.lock().expect("checkpoint lock") = Some(cp);
        if let Some(path) = self.checkpoint_path() {
            if let Err(e) = std::fs::write(&path, cp.to_string()) {
                tracing::warn!("saving checkpoint: {e}");
            }
        }
        self.precache.lock().expect("precache lock").checkpoint = Some(cp.to_string());
    }

    fn halt(&self, why: String) {
        tracing::error!("precache halted: {why}");
        let mut st = self.precache.lock().expect("precache lock");
        st.halted = Some(why);
        st.running = false;
    }

    /// One pass over the stream from the saved checkpoint. Returns false
    /// when the worker must halt.
    fn precache_pass(&self, scorer: &Scorer, source: &dyn RevisionSource) -> bool {
        let checkpoint = *self.checkpoint.lock().expect("checkpoint lock");
        let stream = match source.stream_recent(self.config.precache_from, checkpoint) {
            Ok(s) => s,
            Err(IngestError::CheckpointInvalid(m)) => {
                self.halt(format!("invalid checkpoint {m}"));
                return false;
            }
            Err(e) => {
                tracing::warn!("precache stream: {e}");
                return true;
            }
        };
        for env in stream {
            if self.stopped() {
                break;
            }
            let env = match env {
                Ok(env) => env,
                Err(e) => {
                    tracing::warn!("precache read: {e}");
                    self.precache.lock().expect("precache lock").failed += 1;
                    continue;
                }
            };
            let key = Key { model_version: scorer.model_version().to_owned(), rev_id: env.meta.rev_id };
            if !self.cache.contains(&key) {
                if let Claim::Lead(lead) = self.flights.claim(key) {
                    let started = Instant::now();
                    let result = Self::compute(scorer, &env);
                    let ok = result.is_ok();
                    if let Err(e) = &result {
                        tracing::warn!(rev_id = env.meta.rev_id, "precache scoring: {}", e.message);
                    }
                    let _ = self.settle(lead, result);
                    let mut st = self.precache.lock().expect("precache lock");
                    if ok {
                        st.scored += 1;
                        drop(st);
                        self.record(LatencyMode::Precache, started.elapsed().as_secs_f64(), None);
                    } else {
                        st.failed += 1;
                    }
                }
            }
            self.save_checkpoint(Checkpoint::of(&env.meta));
        }
        true
    }

    /// Runs on the calling thread until `stop` or a halt.
    pub fn run_precache(&self) {
        let Ok((scorer, source)) = self.ready() else {
            self.halt("precache needs a model and a source".into());
            return;
        };
        match self.load_checkpoint() {
            Ok(cp) => *self.checkpoint.lock().expect("checkpoint lock") = cp,
            Err(e) => return self.halt(e),
        }
        self.precache.lock().expect("precache lock").running = true;
        while !self.stopped() {
            if !self.precache_pass(&scorer, source.as_ref()) {
                return;
            }
            let until = Instant::now() + self.config.poll_interval;
            while !self.stopped() && Instant::now() < until {
                std::thread::sleep(Duration::from_millis(20).min(self.config.poll_interval));
            }
        }
        self.precache.lock().expect("precache lock").running = false;
    }

    pub fn precache_status(&self) -> PrecacheStatus {
        self.precache.lock().expect("precache lock").clone()
    }
}

async fn follow_result(rx: tokio::sync::watch::Receiver<Option<crate::cache::FlightResult>>) -> Result<Arc<CachedScore>, ApiError> {
    match follow(rx).await {
        Some(Ok(c)) => Ok(c),
        Some(Err(body)) => Err(ApiError::new(body.error, body.message)),
        None => Err(ApiError::new(ErrorKind::ScoringFailed, "concurrent computation was abandoned")),
    }
}

/// Starts the precache worker on its own thread.
pub fn spawn_precache(service: Arc<Service>) -> std::thread::JoinHandle<()> {
    std::thread::Builder::new()
        .name("precache".into())
        .spawn(move || service.run_precache())
        .expect("spawn precache thread")
}
