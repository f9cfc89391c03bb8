//! Revert detection, trust filtering, labeling, sampling and the train/test split.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::PatternConfig;
use crate::diff::diff;
use crate::edit::{EditKind, EditMeta, UserInfo};
use crate::entity::{parse_entity, ContentHash, EntityRevision, ItemId};
use crate::features::{extract, FeatureVector, FEATURE_SCHEMA_VERSION};
use crate::ingestion::RevisionEnvelope;
use crate::registry::PropertyRegistry;

pub const CORPUS_SCHEMA_VERSION: &str = "vs-corpus-1";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("records are already split")]
    AlreadySplit,
    #[error("split ratio must lie in (0, 1), got {0}")]
    InvalidRatio(f64),
    #[error("invalid revert config: {0}")]
    InvalidRevertConfig(String),
    #[error("corpus line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("corpus schema {found}, expected {expected}")]
    SchemaMismatch { expected: String, found: String },
    #[error("corpus io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserTrust {
    Trusted,
    NonTrusted,
}

impl UserTrust {
    pub fn of(user: &UserInfo, trusted: &BTreeSet<String>) -> Self {
        if user.in_any(trusted) {
            UserTrust::Trusted
        } else {
            UserTrust::NonTrusted
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    #[default]
    Unassigned,
}

/// Identity-revert limits. Both bounds are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevertConfig {
    /// Revisions after the target that may restore an earlier state.
    pub radius: usize,
    /// Seconds after the target's timestamp.
    pub window: i64,
}

impl Default for RevertConfig {
    fn default() -> Self {
        RevertConfig { radius: 15, window: 30 * 86_400 }
    }
}

impl RevertConfig {
    pub fn new(radius: usize, window: i64) -> Result<Self, CorpusError> {
        if radius < 1 {
            return Err(CorpusError::InvalidRevertConfig("radius must be at least 1".into()));
        }
        if window <= 0 {
            return Err(CorpusError::InvalidRevertConfig("window must be positive".into()));
        }
        Ok(RevertConfig { radius, window })
    }
}

/// Parses `30d`, `12h`, `90m`, `45s` or bare seconds.
pub fn parse_duration(text: &str) -> Option<i64> {
    let t = text.trim();
    let (num, mult) = match t.chars().last()? {
        'd' => (&t[..t.len() - 1], 86_400),
        'h' => (&t[..t.len() - 1], 3_600),
        'm' => (&t[..t.len() - 1], 60),
        's' => (&t[..t.len() - 1], 1),
        _ => (t, 1),
    };
    num.parse::<i64>().ok().and_then(|n| n.checked_mul(mult))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistoryEntry {
    pub rev_id: u64,
    pub timestamp: i64,
    pub hash: ContentHash,
}

/// True when a revision at most `radius` positions and `window` seconds
/// after the target has the same content as some state before the target
/// (and not the target's own content).
pub fn detect_reverted(history: &[HistoryEntry], target: usize, cfg: &RevertConfig) -> bool {
    let Some(t) = history.get(target) else {
        return false;
    };
    let earlier: BTreeSet<&ContentHash> = history[..target].iter().map(|h| &h.hash).collect();
    if earlier.is_empty() {
        return false;
    }
    history[target + 1..]
        .iter()
        .take(cfg.radius)
        .take_while(|h| h.timestamp - t.timestamp <= cfg.window)
        .any(|h| h.hash != t.hash && earlier.contains(&h.hash))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub rev_id: u64,
    pub item_id: ItemId,
    pub timestamp: i64,
    pub user_trust: UserTrust,
    pub edit_kind: EditKind,
    pub reverted: bool,
    pub label: bool,
    /// History was truncated inside the revert window; `reverted` forced false.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub incomplete_history: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureVector>,
    #[serde(default)]
    pub split: Split,
}

impl CorpusRecord {
    pub fn label_rule(reverted: bool, trust: UserTrust, kind: EditKind) -> bool {
        reverted
            && trust == UserTrust::NonTrusted
            && matches!(kind, EditKind::Regular | EditKind::Creation)
    }

    /// A positive label implies reverted, non-trusted, regular or creation.
    pub fn is_sound(&self) -> bool {
        !self.label || Self::label_rule(true, self.user_trust, self.edit_kind) && self.reverted
    }
}

/// Mutually exclusive edit categories; trust takes precedence over kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryRow {
    Trusted,
    Merge,
    Client,
    Revertish,
    Creation,
    Regular,
}

impl SummaryRow {
    pub const ALL: [SummaryRow; 6] = [
        SummaryRow::Trusted,
        SummaryRow::Merge,
        SummaryRow::Client,
        SummaryRow::Revertish,
        SummaryRow::Creation,
        SummaryRow::Regular,
    ];

    pub fn of(r: &CorpusRecord) -> Self {
        if r.user_trust == UserTrust::Trusted {
            return SummaryRow::Trusted;
        }
        match r.edit_kind {
            EditKind::Merge => SummaryRow::Merge,
            EditKind::Client => SummaryRow::Client,
            EditKind::Revertish => SummaryRow::Revertish,
            EditKind::Creation => SummaryRow::Creation,
            EditKind::Regular => SummaryRow::Regular,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            SummaryRow::Trusted => "trusted user edit",
            SummaryRow::Merge => "merge edit",
            SummaryRow::Client => "client edit",
            SummaryRow::Revertish => "non-trusted revert edit",
            SummaryRow::Creation => "non-trusted item creation",
            SummaryRow::Regular => "non-trusted regular edit",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowCounts {
    pub edits: u64,
    pub reverted: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub total: u64,
    pub rows: BTreeMap<SummaryRow, RowCounts>,
    pub labeled_true: u64,
    pub bot_edits_excluded: u64,
    pub incomplete_history: u64,
    pub malformed: u64,
}

impl CorpusSummary {
    pub fn from_records(records: &[CorpusRecord]) -> Self {
        let mut s = CorpusSummary {
            rows: SummaryRow::ALL.iter().map(|r| (*r, RowCounts::default())).collect(),
            ..Default::default()
        };
        for r in records {
            s.total += 1;
            let row = s.rows.entry(SummaryRow::of(r)).or_default();
            row.edits += 1;
            row.reverted += u64::from(r.reverted);
            s.labeled_true += u64::from(r.label);
            s.incomplete_history += u64::from(r.incomplete_history);
        }
        s
    }

    pub fn row_total(&self) -> u64 {
        self.rows.values().map(|c| c.edits).sum()
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<28}{:>10}{:>20}\n", "", "edits", "reverted");
        for row in SummaryRow::ALL {
            let c = self.rows.get(&row).copied().unwrap_or_default();
            let pct = if c.edits == 0 { 0.0 } else { 100.0 * c.reverted as f64 / c.edits as f64 };
            out.push_str(&format!(
                "{:<28}{:>10}{:>20}\n",
                row.title(),
                c.edits,
                format!("{} ({:.2}%)", c.reverted, pct)
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    #[default]
    Edits,
    Items,
}

impl FromStr for SampleMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "edits" => Ok(SampleMode::Edits),
            "items" => Ok(SampleMode::Items),
            other => Err(format!("unknown sample mode {other:?} (edits|items)")),
        }
    }
}

impl fmt::Display for SampleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleMode::Edits => "edits",
            SampleMode::Items => "items",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub records: Vec<CorpusRecord>,
    pub summary: CorpusSummary,
}

struct Prepared {
    meta: EditMeta,
    item_id: ItemId,
    parent: Option<EntityRevision>,
    child: EntityRevision,
}

fn prepare(env: &RevisionEnvelope) -> Option<Prepared> {
    let child = parse_entity(&env.child_json).ok()?;
    let parent = match &env.parent_json {
        Some(p) => Some(parse_entity(p).ok()?),
        None => None,
    };
    if parent.is_some() == env.meta.is_creation() {
        return None;
    }
    Some(Prepared { item_id: child.item_id.clone(), meta: env.meta.clone(), parent, child })
}

/// Labels every non-bot edit. Bot edits still take part in revert detection.
/// Output is sorted by rev_id.
pub fn build_corpus(
    envelopes: impl IntoIterator<Item = RevisionEnvelope>,
    registry: &PropertyRegistry,
    revert: &RevertConfig,
    patterns: &PatternConfig,
) -> Corpus {
    let envelopes: Vec<RevisionEnvelope> = envelopes.into_iter().collect();
    let prepared: Vec<Option<Prepared>> = envelopes.par_iter().map(prepare).collect();
    let malformed = prepared.iter().filter(|p| p.is_none()).count() as u64;

    let mut by_item: BTreeMap<ItemId, Vec<Prepared>> = BTreeMap::new();
    for p in prepared.into_iter().flatten() {
        by_item.entry(p.item_id.clone()).or_default().push(p);
    }
    let per_item: Vec<(Vec<CorpusRecord>, u64)> = by_item
        .into_par_iter()
        .map(|(_, mut revs)| {
            revs.sort_by_key(|p| p.meta.rev_id);
            revs.dedup_by_key(|p| p.meta.rev_id);
            label_item(&revs, registry, revert, patterns)
        })
        .collect();

    let mut records = Vec::new();
    let mut bots = 0;
    for (r, b) in per_item {
        records.extend(r);
        bots += b;
    }
    records.sort_by_key(|r| r.rev_id);
    let mut summary = CorpusSummary::from_records(&records);
    summary.bot_edits_excluded = bots;
    summary.malformed = malformed;
    Corpus { records, summary }
}

fn label_item(
    revs: &[Prepared],
    registry: &PropertyRegistry,
    revert: &RevertConfig,
    patterns: &PatternConfig,
) -> (Vec<CorpusRecord>, u64) {
    // Flatten into a hash history; a parent not present as its own revision
    // is inserted ahead of its child as an earlier state.
    let mut history = Vec::with_capacity(revs.len() + 1);
    let mut position = Vec::with_capacity(revs.len());
    let mut gap_after = Vec::with_capacity(revs.len());
    for (i, p) in revs.iter().enumerate() {
        let contiguous = i > 0 && revs[i - 1].meta.rev_id == p.meta.parent_rev_id;
        gap_after.push(i > 0 && !contiguous);
        if !contiguous {
            if let Some(parent) = &p.parent {
                history.push(HistoryEntry {
                    rev_id: p.meta.parent_rev_id,
                    timestamp: p.meta.timestamp,
                    hash: parent.canonical_hash(),
                });
            }
        }
        position.push(history.len());
        history.push(HistoryEntry {
            rev_id: p.meta.rev_id,
            timestamp: p.meta.timestamp,
            hash: p.child.canonical_hash(),
        });
    }

    let classifier = patterns.classifier();
    let mut out = Vec::new();
    let mut bots = 0;
    for (i, p) in revs.iter().enumerate() {
        if p.meta.user.is_bot {
            bots += 1;
            continue;
        }
        let incomplete = revs[i + 1..]
            .iter()
            .zip(&gap_after[i + 1..])
            .take(revert.radius)
            .take_while(|(r, _)| r.meta.timestamp - p.meta.timestamp <= revert.window)
            .any(|(_, gap)| *gap);
        let reverted = !incomplete && detect_reverted(&history, position[i], revert);
        let trust = UserTrust::of(&p.meta.user, &patterns.groups.trusted);
        let kind = classifier.classify(&p.meta.comment, &p.meta);
        let features = diff(p.parent.as_ref(), &p.child, registry)
            .ok()
            .and_then(|d| extract(&d, &p.child, &p.meta, patterns).ok());
        out.push(CorpusRecord {
            rev_id: p.meta.rev_id,
            item_id: p.item_id.clone(),
            timestamp: p.meta.timestamp,
            user_trust: trust,
            edit_kind: kind,
            reverted,
            label: CorpusRecord::label_rule(reverted, trust, kind),
            incomplete_history: incomplete,
            features,
            split: Split::Unassigned,
        });
    }
    (out, bots)
}

/// Keeps `size` records, drawn uniformly by edit or by whole item.
pub fn sample(records: Vec<CorpusRecord>, mode: SampleMode, size: usize, seed: u64) -> Vec<CorpusRecord> {
    if size >= records.len() {
        return records;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept: Vec<CorpusRecord> = match mode {
        SampleMode::Edits => {
            let mut idx: Vec<usize> = (0..records.len()).collect();
            idx.shuffle(&mut rng);
            let keep: BTreeSet<usize> = idx.into_iter().take(size).collect();
            records.into_iter().enumerate().filter(|(i, _)| keep.contains(i)).map(|(_, r)| r).collect()
        }
        SampleMode::Items => {
            let mut items: Vec<ItemId> =
                records.iter().map(|r| r.item_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
            items.shuffle(&mut rng);
            let mut counts: BTreeMap<&ItemId, usize> = BTreeMap::new();
            for r in &records {
                *counts.entry(&r.item_id).or_default() += 1;
            }
            let mut chosen = BTreeSet::new();
            let mut total = 0;
            for q in &items {
                if total >= size {
                    break;
                }
                total += counts[q];
                chosen.insert(q.clone());
            }
            records.into_iter().filter(|r| chosen.contains(&r.item_id)).collect()
        }
    };
    kept.sort_by_key(|r| r.rev_id);
    kept
}

/// Shuffles by seed and assigns the first `floor(n * ratio)` records to train.
pub fn split_train_test(records: &mut [CorpusRecord], ratio: f64, seed: u64) -> Result<(), CorpusError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(CorpusError::InvalidRatio(ratio));
    }
    if records.iter().any(|r| r.split != Split::Unassigned) {
        return Err(CorpusError::AlreadySplit);
    }
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (records.len() as f64 * ratio).floor() as usize;
    for (k, i) in idx.into_iter().enumerate() {
        records[i].split = if k < n_train { Split::Train } else { Split::Test };
    }
    Ok(())
}

/// Reviewer classes used by the labeling queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelClass {
    Vandalism,
    GoodfaithDamaging,
    Good,
}

impl LabelClass {
    pub fn is_vandalism(self) -> bool {
        self == LabelClass::Vandalism
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelOverride {
    pub rev_id: u64,
    pub class: LabelClass,
    #[serde(default)]
    pub reviewer: String,
}

/// Reads exported label JSONL; later lines for the same revision win.
pub fn read_label_overrides(reader: impl BufRead) -> Result<BTreeMap<u64, LabelClass>, CorpusError> {
    let mut out = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let o: LabelOverride = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Format { line: i + 1, message: e.to_string() })?;
        out.insert(o.rev_id, o.class);
    }
    Ok(out)
}

/// Replaces labels with reviewer judgements. Returns how many records matched.
pub fn apply_label_overrides(records: &mut [CorpusRecord], overrides: &BTreeMap<u64, LabelClass>) -> usize {
    let mut hit = 0;
    for r in records.iter_mut() {
        if let Some(class) = overrides.get(&r.rev_id) {
            r.label = class.is_vandalism();
            hit += 1;
        }
    }
    hit
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusHeader {
    pub schema: String,
    pub feature_schema_version: String,
    pub records: u64,
    pub revert: RevertConfig,
    pub summary: CorpusSummary,
}

pub fn write_corpus(
    mut w: impl Write,
    records: &[CorpusRecord],
    revert: &RevertConfig,
    summary: &CorpusSummary,
) -> Result<(), CorpusError> {
    let header = CorpusHeader {
        schema: CORPUS_SCHEMA_VERSION.to_owned(),
        feature_schema_version: FEATURE_SCHEMA_VERSION.to_owned(),
        records: records.len() as u64,
        revert: *revert,
        summary: summary.clone(),
    };
    serde_json::to_writer(&mut w, &header).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_corpus(reader: impl BufRead) -> Result<(CorpusHeader, Vec<CorpusRecord>), CorpusError> {
    let mut lines = reader.lines().enumerate();
    let header: CorpusHeader = match lines.next() {
        Some((_, line)) => serde_json::from_str(&line?)
            .map_err(|e| CorpusError::Format { line: 1, message: e.to_string() })?,
        None => return Err(CorpusError::Format { line: 1, message: "missing header".into() }),
    };
    if header.schema != CORPUS_SCHEMA_VERSION {
        return Err(CorpusError::SchemaMismatch {
            expected: CORPUS_SCHEMA_VERSION.into(),
            found: header.schema,
        });
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(&line)
                .map_err(|e| CorpusError::Format { line: i + 1, message: e.to_string() })?,
        );
    }
    Ok((header, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(b: u8) -> ContentHash {
        ContentHash([b; 20])
    }

    fn hist(hashes: &[u8], times: &[i64]) -> Vec<HistoryEntry> {
        hashes
            .iter()
            .zip(times)
            .enumerate()
            .map(|(i, (b, t))| HistoryEntry { rev_id: i as u64 + 1, timestamp: *t, hash: h(*b) })
            .collect()
    }

    #[test]
    fn restore_marks_middle_revision() {
        let cfg = RevertConfig::default();
        let hs = hist(&[1, 2, 1], &[0, 10, 20]);
        assert!(!detect_reverted(&hs, 0, &cfg));
        assert!(detect_reverted(&hs, 1, &cfg));
        assert!(!detect_reverted(&hs, 2, &cfg));
    }

    #[test]
    fn distinct_states_never_reverted() {
        let hs = hist(&[1, 2, 3], &[0, 1, 2]);
        assert!((0..3).all(|i| !detect_reverted(&hs, i, &RevertConfig::default())));
    }

    #[test]
    fn window_is_inclusive() {
        let cfg = RevertConfig::default();
        let day = 86_400;
        assert!(detect_reverted(&hist(&[1, 2, 1], &[0, 0, 30 * day]), 1, &cfg));
        assert!(!detect_reverted(&hist(&[1, 2, 1], &[0, 0, 31 * day]), 1, &cfg));
        assert!(!detect_reverted(&hist(&[1, 2, 1], &[0, 0, 30 * day + 1]), 1, &cfg));
    }

    #[test]
    fn radius_is_inclusive() {
        let cfg = RevertConfig::new(3, 1_000).unwrap();
        assert!(detect_reverted(&hist(&[1, 2, 3, 4, 1], &[0; 5]), 1, &cfg));
        assert!(!detect_reverted(&hist(&[1, 2, 3, 4, 5, 1], &[0; 6]), 1, &cfg));
    }

    #[test]
    fn null_edit_is_not_a_revert() {
        let hs = hist(&[1, 1, 1], &[0, 1, 2]);
        assert!(!detect_reverted(&hs, 1, &RevertConfig::default()));
    }

    #[test]
    fn durations() {
        assert_eq!(parse_duration("30d"), Some(2_592_000));
        assert_eq!(parse_duration("12h"), Some(43_200));
        assert_eq!(parse_duration("15"), Some(15));
        assert_eq!(parse_duration("x"), None);
    }

    fn record(rev_id: u64, trust: UserTrust, kind: EditKind, reverted: bool) -> CorpusRecord {
        CorpusRecord {
            rev_id,
            item_id: "Q1".parse().unwrap(),
            timestamp: 0,
            user_trust: trust,
            edit_kind: kind,
            reverted,
            label: CorpusRecord::label_rule(reverted, trust, kind),
            incomplete_history: false,
            features: None,
            split: Split::Unassigned,
        }
    }

    #[test]
    fn label_rule_cases() {
        assert!(!record(1, UserTrust::Trusted, EditKind::Regular, true).label);
        assert!(record(2, UserTrust::NonTrusted, EditKind::Regular, true).label);
        assert!(!record(3, UserTrust::NonTrusted, EditKind::Client, true).label);
        assert!(record(4, UserTrust::NonTrusted, EditKind::Creation, true).label);
        assert!(!record(5, UserTrust::NonTrusted, EditKind::Merge, true).label);
        assert!(!record(6, UserTrust::NonTrusted, EditKind::Regular, false).label);
    }

    #[test]
    fn small_split_rounds_down() {
        let mut rs: Vec<_> = (1..=10).map(|i| record(i, UserTrust::NonTrusted, EditKind::Regular, false)).collect();
        split_train_test(&mut rs, 0.8, 7).unwrap();
        assert_eq!(rs.iter().filter(|r| r.split == Split::Train).count(), 8);
        assert!(matches!(split_train_test(&mut rs, 0.8, 7), Err(CorpusError::AlreadySplit)));

        let mut again: Vec<_> = (1..=10).map(|i| record(i, UserTrust::NonTrusted, EditKind::Regular, false)).collect();
        split_train_test(&mut again, 0.8, 7).unwrap();
        assert_eq!(rs, again);

        let mut odd: Vec<_> = (1..=7).map(|i| record(i, UserTrust::NonTrusted, EditKind::Regular, false)).collect();
        split_train_test(&mut odd, 0.8, 1).unwrap();
        assert_eq!(odd.iter().filter(|r| r.split == Split::Train).count(), 5);
    }

    #[test]
    fn large_split_within_tolerance() {
        let mut rs: Vec<_> = (1..=500_000u64)
            .map(|i| record(i, UserTrust::NonTrusted, EditKind::Regular, false))
            .collect();
        split_train_test(&mut rs, 0.8, 2015).unwrap();
        let train = rs.iter().filter(|r| r.split == Split::Train).count();
        assert!((train as i64 - 400_000).abs() <= 2_500);
    }

    #[test]
    fn overrides_collapse_to_binary() {
        let mut rs: Vec<_> = (1..=3).map(|i| record(i, UserTrust::NonTrusted, EditKind::Regular, true)).collect();
        let text = "{\"rev_id\":1,\"class\":\"good\",\"reviewer\":\"a\"}\n\
                    {\"rev_id\":2,\"class\":\"goodfaith_damaging\"}\n\
                    {\"rev_id\":3,\"class\":\"good\"}\n\
                    {\"rev_id\":3,\"class\":\"vandalism\"}\n";
        let o = read_label_overrides(text.as_bytes()).unwrap();
        assert_eq!(apply_label_overrides(&mut rs, &o), 3);
        assert_eq!(rs.iter().map(|r| r.label).collect::<Vec<_>>(), vec![false, false, true]);
    }

    #[test]
    fn summary_partitions() {
        let rs = vec![
            record(1, UserTrust::Trusted, EditKind::Merge, true),
            record(2, UserTrust::NonTrusted, EditKind::Merge, false),
            record(3, UserTrust::NonTrusted, EditKind::Regular, true),
        ];
        let s = CorpusSummary::from_records(&rs);
        assert_eq!(s.row_total(), s.total);
        assert_eq!(s.rows[&SummaryRow::Trusted].reverted, 1);
        assert_eq!(s.labeled_true, 1);
        assert!(s.to_table().contains("non-trusted regular edit"));
    }

    #[test]
    fn corpus_file_round_trip() {
        let mut rs: Vec<_> = (1..=4).map(|i| record(i, UserTrust::NonTrusted, EditKind::Regular, i == 2)).collect();
        rs[0].features = Some(FeatureVector::try_from(vec![0.25; crate::features::FEATURE_COUNT]).unwrap());
        let s = CorpusSummary::from_records(&rs);
        let mut buf = Vec::new();
        write_corpus(&mut buf, &rs, &RevertConfig::default(), &s).unwrap();
        let (header, back) = read_corpus(buf.as_slice()).unwrap();
        assert_eq!(header.records, 4);
        assert_eq!(back, rs);
    }
}
