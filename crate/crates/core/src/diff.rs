//! Structured difference between a parent and a child item revision.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entity::{EntityRevision, ItemId, PropertyId, Statement};
use crate::registry::PropertyRegistry;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiffError {
    #[error("parent item {parent} does not match child item {child}")]
    ItemMismatch { parent: ItemId, child: ItemId },
}

/// Counts for sections whose entries have a key (language, site, property).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyedDelta {
    pub added: u32,
    pub removed: u32,
    pub changed: u32,
    pub current: u32,
}

/// Counts for sections compared as item-wide multisets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultisetDelta {
    pub added: u32,
    pub removed: u32,
    pub current: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityDiff {
    pub sitelinks: KeyedDelta,
    pub labels: KeyedDelta,
    pub descriptions: KeyedDelta,
    pub statements: KeyedDelta,
    pub aliases: MultisetDelta,
    pub badges: MultisetDelta,
    pub qualifiers: MultisetDelta,
    pub references: MultisetDelta,
    /// Added, removed or changed statements on external-id properties.
    pub changed_identifiers: u32,
    pub changed_properties: BTreeSet<PropertyId>,
    /// Languages whose label was added, removed or changed.
    pub changed_label_languages: BTreeSet<String>,
    /// Item-valued snaks (main, qualifier, reference) in child statements with
    /// no structurally equal counterpart in the parent.
    pub added_item_refs: u32,
    pub removed_item_refs: u32,
    pub added_item_ids: BTreeMap<ItemId, u32>,
    pub added_urls: u32,
    pub removed_urls: u32,
    pub parent_item_refs: u32,
    pub parent_urls: u32,
    pub is_creation: bool,
}

fn count(n: usize) -> u32 {
    u32::try_from(n).unwrap_or(u32::MAX)
}

fn keyed<V: PartialEq>(parent: &BTreeMap<String, V>, child: &BTreeMap<String, V>) -> (KeyedDelta, BTreeSet<String>) {
    let mut delta = KeyedDelta {
        current: count(child.len()),
        ..KeyedDelta::default()
    };
    let mut touched = BTreeSet::new();
    for (k, v) in child {
        match parent.get(k) {
            None => {
                delta.added += 1;
                touched.insert(k.clone());
            }
            Some(pv) if pv != v => {
                delta.changed += 1;
                touched.insert(k.clone());
            }
            Some(_) => {}
        }
    }
    for k in parent.keys() {
        if !child.contains_key(k) {
            delta.removed += 1;
            touched.insert(k.clone());
        }
    }
    (delta, touched)
}

/// (added, removed) between two multisets.
fn multiset_delta<K: Ord>(parent: impl IntoIterator<Item = K>, child: impl IntoIterator<Item = K>) -> (u32, u32) {
    let mut balance: BTreeMap<K, i64> = BTreeMap::new();
    for k in parent {
        *balance.entry(k).or_default() -= 1;
    }
    for k in child {
        *balance.entry(k).or_default() += 1;
    }
    let added = balance.values().filter(|&&b| b > 0).sum::<i64>();
    let removed = -balance.values().filter(|&&b| b < 0).sum::<i64>();
    (count(added as usize), count(removed as usize))
}

struct Keyed<'a> {
    bytes: Vec<u8>,
    value: Vec<u8>,
    statement: &'a Statement,
}

/// Pairing of unmatched statements under one property.
#[derive(Debug, Default)]
struct PropertyMatch<'a> {
    changed: Vec<(&'a Statement, &'a Statement)>,
    added: Vec<&'a Statement>,
    removed: Vec<&'a Statement>,
}

impl PropertyMatch<'_> {
    fn child_side(&self) -> impl Iterator<Item = &Statement> {
        self.changed.iter().map(|(_, c)| *c).chain(self.added.iter().copied())
    }

    fn parent_side(&self) -> impl Iterator<Item = &Statement> {
        self.changed.iter().map(|(p, _)| *p).chain(self.removed.iter().copied())
    }
}

/// Exact (structural) matches are removed first; the rest are paired by
/// equal main value, then by property alone, in canonical byte order.
fn match_statements<'a>(parent: &'a [Statement], child: &'a [Statement]) -> PropertyMatch<'a> {
    let keyed = |list: &'a [Statement]| -> Vec<Keyed<'a>> {
        let mut out: Vec<Keyed<'a>> = list
            .iter()
            .map(|s| Keyed {
                bytes: s.canonical_bytes(),
                value: s.value_bytes(),
                statement: s,
            })
            .collect();
        out.sort_by(|a, b| a.bytes.cmp(&b.bytes));
        out
    };
    let parent = keyed(parent);
    let child = keyed(child);

    // both lists are sorted, so exact matches fall out of a merge walk
    let (mut p_left, mut c_left) = (Vec::new(), Vec::new());
    let (mut i, mut j) = (0, 0);
    while i < parent.len() && j < child.len() {
        match parent[i].bytes.cmp(&child[j].bytes) {
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
            std::cmp::Ordering::Less => {
                p_left.push(&parent[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                c_left.push(&child[j]);
                j += 1;
            }
        }
    }
    p_left.extend(parent[i..].iter());
    c_left.extend(child[j..].iter());

    let mut result = PropertyMatch::default();
    let mut p_used = vec![false; p_left.len()];
    let mut c_pending = Vec::new();
    for c in c_left {
        let hit = p_left
            .iter()
            .enumerate()
            .find(|(k, p)| !p_used[*k] && p.value == c.value)
            .map(|(k, _)| k);
        match hit {
            Some(k) => {
                p_used[k] = true;
                result.changed.push((p_left[k].statement, c.statement));
            }
            None => c_pending.push(c),
        }
    }
    let mut p_rest = p_left
        .iter()
        .zip(&p_used)
        .filter(|(_, used)| !**used)
        .map(|(p, _)| p.statement);
    for c in c_pending {
        match p_rest.next() {
            Some(p) => result.changed.push((p, c.statement)),
            None => result.added.push(c.statement),
        }
    }
    result.removed.extend(p_rest);
    result
}

fn item_refs(s: &Statement) -> impl Iterator<Item = &ItemId> {
    s.snak_values().filter_map(|v| v.as_item())
}

fn url_count(s: &Statement) -> u32 {
    count(s.snak_values().filter(|v| v.is_url()).count())
}

fn qualifier_keys(rev: &EntityRevision) -> Vec<Vec<u8>> {
    rev.all_statements()
        .flat_map(|s| s.qualifiers.iter().map(|q| q.canonical_bytes()))
        .collect()
}

fn reference_keys(rev: &EntityRevision) -> Vec<Vec<u8>> {
    rev.all_statements()
        .flat_map(|s| s.references.iter().map(|g| Statement::canonical_reference_bytes(g)))
        .collect()
}

fn alias_keys(rev: &EntityRevision) -> Vec<(&str, &str)> {
    rev.aliases
        .iter()
        .flat_map(|(lang, list)| list.iter().map(move |a| (lang.as_str(), a.as_str())))
        .collect()
}

fn badge_keys(rev: &EntityRevision) -> Vec<(&str, &str)> {
    rev.sitelinks
        .iter()
        .flat_map(|(site, l)| l.badges.iter().map(move |b| (site.as_str(), b.as_str())))
        .collect()
}

/// Computes every section count between `parent` (absent for an item
/// creation) and `child`. Current counts always refer to the child.
pub fn diff(
    parent: Option<&EntityRevision>,
    child: &EntityRevision,
    registry: &PropertyRegistry,
) -> Result<EntityDiff, DiffError> {
    if let Some(p) = parent {
        if p.item_id != child.item_id {
            return Err(DiffError::ItemMismatch {
                parent: p.item_id.clone(),
                child: child.item_id.clone(),
            });
        }
    }
    let empty = EntityRevision::empty(child.item_id.clone());
    let parent_rev = parent.unwrap_or(&empty);

    let mut d = EntityDiff {
        is_creation: parent.is_none(),
        ..EntityDiff::default()
    };
    d.labels = {
        let (delta, langs) = keyed(&parent_rev.labels, &child.labels);
        d.changed_label_languages = langs;
        delta
    };
    d.descriptions = keyed(&parent_rev.descriptions, &child.descriptions).0;
    d.sitelinks = keyed(&parent_rev.sitelinks, &child.sitelinks).0;

    let (added, removed) = multiset_delta(alias_keys(parent_rev), alias_keys(child));
    d.aliases = MultisetDelta { added, removed, current: count(alias_keys(child).len()) };
    let (added, removed) = multiset_delta(badge_keys(parent_rev), badge_keys(child));
    d.badges = MultisetDelta { added, removed, current: count(badge_keys(child).len()) };
    let child_qualifiers = qualifier_keys(child);
    let current = count(child_qualifiers.len());
    let (added, removed) = multiset_delta(qualifier_keys(parent_rev), child_qualifiers);
    d.qualifiers = MultisetDelta { added, removed, current };
    let child_refs = reference_keys(child);
    let current = count(child_refs.len());
    let (added, removed) = multiset_delta(reference_keys(parent_rev), child_refs);
    d.references = MultisetDelta { added, removed, current };

    d.statements.current = count(child.statement_count());
    for s in parent_rev.all_statements() {
        d.parent_item_refs += count(item_refs(s).count());
        d.parent_urls += url_count(s);
    }

    let no_statements: Vec<Statement> = Vec::new();
    let properties: BTreeSet<&PropertyId> = parent_rev.statements.keys().chain(child.statements.keys()).collect();
    for property in properties {
        let p_list = parent_rev.statements.get(property).unwrap_or(&no_statements);
        let c_list = child.statements.get(property).unwrap_or(&no_statements);
        let m = match_statements(p_list, c_list);
        let (added, removed, changed) = (count(m.added.len()), count(m.removed.len()), count(m.changed.len()));
        if added + removed + changed == 0 {
            continue;
        }
        d.statements.added += added;
        d.statements.removed += removed;
        d.statements.changed += changed;
        d.changed_properties.insert(property.clone());
        if registry.is_identifier(property) {
            d.changed_identifiers += added + removed + changed;
        }
        for s in m.child_side() {
            for q in item_refs(s) {
                d.added_item_refs += 1;
                *d.added_item_ids.entry(q.clone()).or_default() += 1;
            }
            d.added_urls += url_count(s);
        }
        for s in m.parent_side() {
            d.removed_item_refs += count(item_refs(s).count());
            d.removed_urls += url_count(s);
        }
    }
    Ok(d)
}
