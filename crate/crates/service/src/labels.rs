//! Append-only reviewer label log with optimistic concurrency.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use vandal_core::api::{LabelEvent, LabelRequest};

pub const LABELS_FILE: &str = "labels.jsonl";

#[derive(Debug, PartialEq)]
pub enum LabelError {
    UnknownRevision(u64),
    /// Someone labeled since the reviewer looked; carries the latest event.
    Conflict(LabelEvent),
    Invalid(String),
    Io(String),
}

#[derive(Default)]
struct Log {
    events: Vec<LabelEvent>,
    /// Index into `events` of each revision's events.
    by_rev: BTreeMap<u64, Vec<usize>>,
}

impl Log {
    fn push(&mut self, e: LabelEvent) {
        self.by_rev.entry(e.rev_id).or_default().push(self.events.len());
        self.events.push(e);
    }

    fn latest(&self, rev_id: u64) -> Option<&LabelEvent> {
        self.by_rev.get(&rev_id).and_then(|v| v.last()).map(|&i| &self.events[i])
    }
}

#[derive(Default)]
pub struct LabelStore {
    log: Mutex<Log>,
    file: Option<Mutex<File>>,
}

impl LabelStore {
    pub fn in_memory() -> Self {
        LabelStore::default()
    }

    pub fn open(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(LABELS_FILE);
        let mut log = Log::default();
        if let Ok(f) = File::open(&path) {
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let e: LabelEvent = serde_json::from_str(&line).map_err(|err| {
                    std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}:{}: {err}", path.display(), i + 1))
                })?;
                log.push(e);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(LabelStore { log: Mutex::new(log), file: Some(Mutex::new(file)) })
    }

    /// Number of label events for a revision.
    pub fn version(&self, rev_id: u64) -> u64 {
        self.log.lock().expect("label lock").by_rev.get(&rev_id).map_or(0, |v| v.len() as u64)
    }

    pub fn latest(&self, rev_id: u64) -> Option<LabelEvent> {
        self.log.lock().expect("label lock").latest(rev_id).cloned()
    }

    /// `expected_version` defaults to 0: the reviewer saw the edit unlabeled.
    pub fn submit(&self, req: &LabelRequest, known: bool, now: String) -> Result<LabelEvent, LabelError> {
        if req.reviewer.trim().is_empty() {
            return Err(LabelError::Invalid("reviewer must not be empty".into()));
        }
        if !known {
            return Err(LabelError::UnknownRevision(req.rev_id));
        }
        let mut log = self.log.lock().expect("label lock");
        let current = log.by_rev.get(&req.rev_id).map_or(0, |v| v.len() as u64);
        if req.expected_version.unwrap_or(0) != current && !req.confirm {
            let latest = log.latest(req.rev_id).cloned().expect("nonzero version has events");
            return Err(LabelError::Conflict(latest));
        }
        let event = LabelEvent {
            rev_id: req.rev_id,
            class: req.class,
            reviewer: req.reviewer.clone(),
            labeled_at: now,
            version: current + 1,
        };
        if let Some(f) = &self.file {
            let line = serde_json::to_string(&event).expect("label serializes");
            let mut f = f.lock().expect("label file lock");
            writeln!(f, "{line}").and_then(|_| f.flush()).map_err(|e| LabelError::Io(e.to_string()))?;
        }
        log.push(event.clone());
        Ok(event)
    }

    /// JSONL: the latest event per revision in rev_id order, or every event
    /// in arrival order.
    pub fn export(&self, history: bool) -> String {
        let log = self.log.lock().expect("label lock");
        let events: Vec<&LabelEvent> = if history {
            log.events.iter().collect()
        } else {
            log.by_rev.keys().filter_map(|&r| log.latest(r)).collect()
        };
        events.into_iter().map(|e| serde_json::to_string(e).expect("label serializes") + "\n").collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use vandal_core::corpus::{read_label_overrides, LabelClass};

    fn req(rev: u64, class: LabelClass, who: &str, expected: Option<u64>) -> LabelRequest {
        LabelRequest { rev_id: rev, class, reviewer: who.into(), expected_version: expected, confirm: false }
    }

    #[test]
    fn relabel_keeps_history_and_latest_wins() {
        let s = LabelStore::in_memory();
        s.submit(&req(7, LabelClass::Vandalism, "ann", None), true, "t1".into()).unwrap();
        s.submit(&req(7, LabelClass::Good, "bo", Some(1)), true, "t2".into()).unwrap();
        assert_eq!(s.export(true).lines().count(), 2);
        let latest = s.export(false);
        assert_eq!(latest.lines().count(), 1);
        let overrides = read_label_overrides(latest.as_bytes()).unwrap();
        assert_eq!(overrides[&7], LabelClass::Good);
    }

    #[test]
    fn stale_writer_conflicts_until_confirmed() {
        let s = LabelStore::in_memory();
        s.submit(&req(7, LabelClass::Vandalism, "ann", None), true, "t1".into()).unwrap();
        let mut second = req(7, LabelClass::Good, "bo", None);
        match s.submit(&second, true, "t2".into()) {
            Err(LabelError::Conflict(cur)) => assert_eq!(cur.reviewer, "ann"),
            other => panic!("{other:?}"),
        }
        second.confirm = true;
        assert_eq!(s.submit(&second, true, "t3".into()).unwrap().version, 2);
    }

    #[test]
    fn unknown_and_empty_reviewer() {
        let s = LabelStore::in_memory();
        assert_eq!(s.submit(&req(1, LabelClass::Good, "a", None), false, "t".into()), Err(LabelError::UnknownRevision(1)));
        assert!(matches!(s.submit(&req(1, LabelClass::Good, " ", None), true, "t".into()), Err(LabelError::Invalid(_))));
    }

    #[test]
    fn log_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        {
            let s = LabelStore::open(dir.path()).unwrap();
            s.submit(&req(3, LabelClass::GoodfaithDamaging, "a", None), true, "t".into()).unwrap();
        }
        let s = LabelStore::open(dir.path()).unwrap();
        assert_eq!(s.version(3), 1);
        assert_eq!(s.latest(3).unwrap().class, LabelClass::GoodfaithDamaging);
    }
}
