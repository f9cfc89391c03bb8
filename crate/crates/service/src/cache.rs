//! Score cache keyed by (model_version, rev_id), bounded by an LRU byte
//! budget and mirrored to an append-only JSONL file.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use lru::LruCache;
use serde::{Deserialize, Serialize};
use tokio::sync::watch;
use vandal_core::api::ErrorBody;
use vandal_core::pipeline::EditSummary;

pub const CACHE_FILE: &str = "scores.jsonl";
pub const DEFAULT_BUDGET: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Key {
    pub model_version: String,
    pub rev_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedScore {
    pub model_version: String,
    pub rev_id: u64,
    pub probability: f64,
    pub computed_at: String,
    pub summary: EditSummary,
}

impl CachedScore {
    pub fn key(&self) -> Key {
        Key { model_version: self.model_version.clone(), rev_id: self.rev_id }
    }
}

struct Inner {
    lru: LruCache<Key, (Arc<CachedScore>, usize)>,
    bytes: usize,
}

pub struct ScoreCache {
    inner: Mutex<Inner>,
    log: Option<Mutex<BufWriter<File>>>,
    budget: usize,
}

fn line_of(s: &CachedScore) -> String {
    serde_json::to_string(s).expect("cache entry serializes")
}

impl ScoreCache {
    pub fn in_memory(budget: usize) -> Self {
        ScoreCache { inner: Mutex::new(Inner { lru: LruCache::unbounded(), bytes: 0 }), log: None, budget }
    }

    /// Loads `scores.jsonl` from `dir`, drops what no longer fits and
    /// rewrites the file compacted. Unparseable lines are skipped.
    pub fn open(dir: &Path, budget: usize) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path: PathBuf = dir.join(CACHE_FILE);
        let mut cache = ScoreCache::in_memory(budget);
        if let Ok(f) = File::open(&path) {
            for line in BufReader::new(f).lines() {
                if let Ok(entry) = serde_json::from_str::<CachedScore>(&line?) {
                    cache.put(Arc::new(entry));
                }
            }
        }
        let tmp = dir.join(format!("{CACHE_FILE}.tmp"));
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            let inner = cache.inner.lock().expect("cache lock");
            for (_, (entry, _)) in inner.lru.iter().rev() {
                writeln!(w, "{}", line_of(entry))?;
            }
            w.flush()?;
        }
        std::fs::rename(&tmp, &path)?;
        let f = OpenOptions::new().append(true).open(&path)?;
        cache.log = Some(Mutex::new(BufWriter::new(f)));
        Ok(cache)
    }

    /// Returns false when the key was already present; entries never change.
    fn put(&self, entry: Arc<CachedScore>) -> bool {
        let key = entry.key();
        let size = line_of(&entry).len() + 1;
        let mut inner = self.inner.lock().expect("cache lock");
        if inner.lru.contains(&key) {
            return false;
        }
        inner.lru.put(key, (entry, size));
        inner.bytes += size;
        while inner.bytes > self.budget && inner.lru.len() > 1 {
            if let Some((_, (_, s))) = inner.lru.pop_lru() {
                inner.bytes -= s;
            }
        }
        true
    }

    pub fn get(&self, key: &Key) -> Option<Arc<CachedScore>> {
        self.inner.lock().expect("cache lock").lru.get(key).map(|(e, _)| e.clone())
    }

    pub fn contains(&self, key: &Key) -> bool {
        self.inner.lock().expect("cache lock").lru.contains(key)
    }

    /// Inserts unless present and appends new entries to the log.
    pub fn insert(&self, entry: Arc<CachedScore>) -> Arc<CachedScore> {
        let key = entry.key();
        if self.put(entry.clone()) {
            if let Some(log) = &self.log {
                let mut w = log.lock().expect("cache log lock");
                if writeln!(w, "{}", line_of(&entry)).and_then(|_| w.flush()).is_err() {
                    tracing::warn!(rev_id = entry.rev_id, "could not persist cache entry");
                }
            }
            entry
        } else {
            self.get(&key).unwrap_or(entry)
        }
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").lru.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bytes(&self) -> usize {
        self.inner.lock().expect("cache lock").bytes
    }

    /// Entries for one model, without touching recency.
    pub fn for_model(&self, model_version: &str) -> Vec<Arc<CachedScore>> {
        let inner = self.inner.lock().expect("cache lock");
        inner.lru.iter().filter(|(k, _)| k.model_version == model_version).map(|(_, (e, _))| e.clone()).collect()
    }
}

pub type FlightResult = Result<Arc<CachedScore>, ErrorBody>;

/// In-flight computations; the first caller for a key leads, the rest wait.
#[derive(Default)]
pub struct Flights {
    map: Mutex<HashMap<Key, watch::Receiver<Option<FlightResult>>>>,
}

pub enum Claim {
    Lead(Lead),
    Follow(watch::Receiver<Option<FlightResult>>),
}

pub struct Lead {
    key: Key,
    tx: watch::Sender<Option<FlightResult>>,
    flights: Arc<Flights>,
}

impl Flights {
    pub fn claim(self: &Arc<Self>, key: Key) -> Claim {
        let mut map = self.map.lock().expect("flight lock");
        if let Some(rx) = map.get(&key) {
            return Claim::Follow(rx.clone());
        }
        let (tx, rx) = watch::channel(None);
        map.insert(key.clone(), rx);
        Claim::Lead(Lead { key, tx, flights: self.clone() })
    }

    pub fn in_flight(&self) -> usize {
        self.map.lock().expect("flight lock").len()
    }
}

impl Lead {
    pub fn key(&self) -> &Key {
        &self.key
    }

    pub fn finish(self, result: FlightResult) {
        // followers read the value even after the sender is gone
        self.tx.send_replace(Some(result));
    }
}

impl Drop for Lead {
    fn drop(&mut self) {
        self.flights.map.lock().expect("flight lock").remove(&self.key);
    }
}

/// Waits for a leader; a leader that vanished without a result is an error.
pub async fn follow(mut rx: watch::Receiver<Option<FlightResult>>) -> Option<FlightResult> {
    if let Ok(v) = rx.wait_for(Option::is_some).await {
        return v.clone();
    }
    let last = rx.borrow().clone();
    last
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(mv: &str, rev: u64) -> Arc<CachedScore> {
        Arc::new(CachedScore {
            model_version: mv.into(),
            rev_id: rev,
            probability: 0.25,
            computed_at: "2016-01-01T00:00:00Z".into(),
            summary: EditSummary::default(),
        })
    }

    #[test]
    fn versions_are_separate_keys() {
        let c = ScoreCache::in_memory(DEFAULT_BUDGET);
        c.insert(entry("a", 1));
        assert!(c.get(&Key { model_version: "a".into(), rev_id: 1 }).is_some());
        assert!(c.get(&Key { model_version: "b".into(), rev_id: 1 }).is_none());
    }

    #[test]
    fn entries_are_immutable() {
        let c = ScoreCache::in_memory(DEFAULT_BUDGET);
        c.insert(entry("a", 1));
        let mut other = (*entry("a", 1)).clone();
        other.probability = 0.9;
        assert_eq!(c.insert(Arc::new(other)).probability, 0.25);
    }

    #[test]
    fn budget_evicts_least_recent() {
        let size = line_of(&entry("a", 1)).len() + 1;
        let c = ScoreCache::in_memory(size * 3);
        for r in 1..=3 {
            c.insert(entry("a", r));
        }
        c.get(&Key { model_version: "a".into(), rev_id: 1 });
        c.insert(entry("a", 4));
        assert_eq!(c.len(), 3);
        assert!(!c.contains(&Key { model_version: "a".into(), rev_id: 2 }));
        assert!(c.bytes() <= size * 3);
    }

    #[test]
    fn persists_and_compacts() {
        let dir = tempfile::tempdir().unwrap();
        {
            let c = ScoreCache::open(dir.path(), DEFAULT_BUDGET).unwrap();
            for r in 1..=5 {
                c.insert(entry("a", r));
            }
        }
        std::fs::OpenOptions::new().append(true).open(dir.path().join(CACHE_FILE)).unwrap().write_all(b"{torn").unwrap();
        let c = ScoreCache::open(dir.path(), DEFAULT_BUDGET).unwrap();
        assert_eq!(c.len(), 5);
        let text = std::fs::read_to_string(dir.path().join(CACHE_FILE)).unwrap();
        assert_eq!(text.lines().count(), 5);
    }

    #[tokio::test]
    async fn single_flight() {
        let f = Arc::new(Flights::default());
        let key = Key { model_version: "a".into(), rev_id: 1 };
        let Claim::Lead(lead) = f.claim(key.clone()) else { panic!("first claim leads") };
        let Claim::Follow(rx) = f.claim(key.clone()) else { panic!("second claim follows") };
        let waiter = tokio::spawn(follow(rx));
        lead.finish(Ok(entry("a", 1)));
        assert_eq!(waiter.await.unwrap().unwrap().unwrap().rev_id, 1);
        assert_eq!(f.in_flight(), 0);
        assert!(matches!(f.claim(key), Claim::Lead(_)));
    }

    #[tokio::test]
    async fn abandoned_lead_releases_followers() {
        let f = Arc::new(Flights::default());
        let key = Key { model_version: "a".into(), rev_id: 2 };
        let Claim::Lead(lead) = f.claim(key.clone()) else { panic!() };
        let Claim::Follow(rx) = f.claim(key) else { panic!() };
        drop(lead);
        assert!(follow(rx).await.is_none());
    }
}
