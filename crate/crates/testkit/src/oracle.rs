//! Brute-force counterparts of the production algorithms. They favor
//! obviousness over speed and work from the public wire serialization.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;
use vandal_core::diff::{EntityDiff, KeyedDelta, MultisetDelta};
use vandal_core::entity::{to_entity_json, EntityRevision, ItemId, PropertyId};
use vandal_core::registry::PropertyRegistry;

fn obj(v: &Value) -> BTreeMap<String, Value> {
    v.as_object().map(|m| m.clone().into_iter().collect()).unwrap_or_default()
}

fn keyed_oracle(parent: &BTreeMap<String, Value>, child: &BTreeMap<String, Value>) -> KeyedDelta {
    let pk: BTreeSet<&String> = parent.keys().collect();
    let ck: BTreeSet<&String> = child.keys().collect();
    KeyedDelta {
        added: ck.difference(&pk).count() as u32,
        removed: pk.difference(&ck).count() as u32,
        changed: ck.intersection(&pk).filter(|k| parent[**k].to_string() != child[**k].to_string()).count() as u32,
        current: ck.len() as u32,
    }
}

/// Elements of `a` left over after removing one copy per element of `b`.
fn multiset_minus(a: &[String], b: &[String]) -> Vec<String> {
    let mut rest = b.to_vec();
    let mut out = Vec::new();
    for x in a {
        match rest.iter().position(|y| y == x) {
            Some(i) => {
                rest.remove(i);
            }
            None => out.push(x.clone()),
        }
    }
    out
}

fn multiset_oracle(parent: &[String], child: &[String]) -> MultisetDelta {
    MultisetDelta {
        added: multiset_minus(child, parent).len() as u32,
        removed: multiset_minus(parent, child).len() as u32,
        current: child.len() as u32,
    }
}

fn snak_list(map: &Value) -> Vec<String> {
    let mut out: Vec<String> = obj(map)
        .values()
        .flat_map(|list| list.as_array().cloned().unwrap_or_default())
        .map(|s| s.to_string())
        .collect();
    out.sort();
    out
}

fn reference_keys(statement: &Value) -> Vec<String> {
    statement["references"]
        .as_array()
        .map(|refs| refs.iter().map(|r| snak_list(&r["snaks"]).join("\u{1}")).collect())
        .unwrap_or_default()
}

/// Order-insensitive key over qualifiers and reference groups.
fn statement_key(statement: &Value) -> String {
    let mut refs = reference_keys(statement);
    refs.sort();
    serde_json::json!([statement["mainsnak"].to_string(), statement["rank"], snak_list(&statement["qualifiers"]), refs]).to_string()
}

fn item_ids(v: &Value, out: &mut Vec<String>) {
    match v {
        Value::Object(m) => {
            if m.get("entity-type").and_then(Value::as_str) == Some("item") {
                if let Some(id) = m.get("id").and_then(Value::as_str) {
                    out.push(id.to_owned());
                }
            }
            m.values().for_each(|x| item_ids(x, out));
        }
        Value::Array(a) => a.iter().for_each(|x| item_ids(x, out)),
        _ => {}
    }
}

fn url_count(statement_text: &str) -> u32 {
    statement_text.matches(r#""datatype":"url""#).count() as u32
}

struct Side {
    labels: BTreeMap<String, Value>,
    descriptions: BTreeMap<String, Value>,
    sitelinks: BTreeMap<String, Value>,
    aliases: Vec<String>,
    badges: Vec<String>,
    qualifiers: Vec<String>,
    references: Vec<String>,
    /// property -> (key, serialized statement)
    statements: BTreeMap<String, Vec<(String, Value)>>,
}

fn side(rev: &EntityRevision) -> Side {
    let j = to_entity_json(rev);
    let aliases = obj(&j["aliases"])
        .values()
        .flat_map(|l| l.as_array().cloned().unwrap_or_default())
        .map(|a| format!("{}|{}", a["language"], a["value"]))
        .collect();
    let badges = obj(&j["sitelinks"])
        .values()
        .flat_map(|s| {
            let site = s["site"].to_string();
            s["badges"].as_array().cloned().unwrap_or_default().into_iter().map(move |b| format!("{site}|{b}"))
        })
        .collect();
    let mut statements: BTreeMap<String, Vec<(String, Value)>> = BTreeMap::new();
    let mut qualifiers = Vec::new();
    let mut references = Vec::new();
    for (p, list) in obj(&j["claims"]) {
        for s in list.as_array().cloned().unwrap_or_default() {
            qualifiers.extend(snak_list(&s["qualifiers"]));
            references.extend(reference_keys(&s));
            statements.entry(p.clone()).or_default().push((statement_key(&s), s));
        }
    }
    Side {
        labels: obj(&j["labels"]),
        descriptions: obj(&j["descriptions"]),
        sitelinks: obj(&j["sitelinks"]),
        aliases,
        badges,
        qualifiers,
        references,
        statements,
    }
}

/// Section counts by multiset difference over serialized elements.
pub fn diff_counts_oracle(parent: Option<&EntityRevision>, child: &EntityRevision, registry: &PropertyRegistry) -> EntityDiff {
    let empty = EntityRevision::empty(child.item_id.clone());
    let p = side(parent.unwrap_or(&empty));
    let c = side(child);
    let mut d = EntityDiff {
        labels: keyed_oracle(&p.labels, &c.labels),
        descriptions: keyed_oracle(&p.descriptions, &c.descriptions),
        sitelinks: keyed_oracle(&p.sitelinks, &c.sitelinks),
        aliases: multiset_oracle(&p.aliases, &c.aliases),
        badges: multiset_oracle(&p.badges, &c.badges),
        qualifiers: multiset_oracle(&p.qualifiers, &c.qualifiers),
        references: multiset_oracle(&p.references, &c.references),
        is_creation: parent.is_none(),
        ..EntityDiff::default()
    };
    d.changed_label_languages = p
        .labels
        .keys()
        .chain(c.labels.keys())
        .filter(|k| p.labels.get(*k).map(Value::to_string) != c.labels.get(*k).map(Value::to_string))
        .cloned()
        .collect();
    d.statements.current = c.statements.values().map(Vec::len).sum::<usize>() as u32;
    for (_, s) in p.statements.values().flatten() {
        let mut ids = Vec::new();
        item_ids(s, &mut ids);
        d.parent_item_refs += ids.len() as u32;
        d.parent_urls += url_count(&s.to_string());
    }
    let props: BTreeSet<&String> = p.statements.keys().chain(c.statements.keys()).collect();
    let none = Vec::new();
    for prop in props {
        let pl = p.statements.get(prop).unwrap_or(&none);
        let cl = c.statements.get(prop).unwrap_or(&none);
        let pk: Vec<String> = pl.iter().map(|(k, _)| k.clone()).collect();
        let ck: Vec<String> = cl.iter().map(|(k, _)| k.clone()).collect();
        let new = multiset_minus(&ck, &pk);
        let gone = multiset_minus(&pk, &ck);
        let changed = new.len().min(gone.len()) as u32;
        let added = new.len() as u32 - changed;
        let removed = gone.len() as u32 - changed;
        if new.is_empty() && gone.is_empty() {
            continue;
        }
        d.statements.added += added;
        d.statements.removed += removed;
        d.statements.changed += changed;
        let pid: PropertyId = prop.parse().expect("property id");
        if registry.is_identifier(&pid) {
            d.changed_identifiers += added + removed + changed;
        }
        d.changed_properties.insert(pid);
        let value_of = |list: &[(String, Value)], key: &str| list.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone()).expect("key");
        for k in &new {
            let s = value_of(cl, k);
            let mut ids = Vec::new();
            item_ids(&s, &mut ids);
            d.added_item_refs += ids.len() as u32;
            for id in ids {
                *d.added_item_ids.entry(id.parse::<ItemId>().expect("item id")).or_default() += 1;
            }
            d.added_urls += url_count(&s.to_string());
        }
        for k in &gone {
            let s = value_of(pl, k);
            let mut ids = Vec::new();
            item_ids(&s, &mut ids);
            d.removed_item_refs += ids.len() as u32;
            d.removed_urls += url_count(&s.to_string());
        }
    }
    d
}

/// Every later revision in range against every earlier one. A later
/// revision equal to the target itself restores nothing.
pub fn revert_oracle<H: PartialEq>(history: &[(H, i64)], target: usize, radius: usize, window: i64) -> bool {
    let (ref t_hash, t_ts) = history[target];
    (target + 1..history.len()).any(|j| {
        let (ref h, ts) = history[j];
        j - target <= radius && ts - t_ts <= window && h != t_hash && (0..target).any(|k| history[k].0 == *h)
    })
}

/// Mann-Whitney over all positive/negative pairs, ties 1/2.
pub fn roc_oracle(pairs: &[(f64, bool)]) -> f64 {
    let (mut wins, mut total) = (0.0, 0.0);
    for (sp, _) in pairs.iter().filter(|p| p.1) {
        for (sn, _) in pairs.iter().filter(|p| !p.1) {
            total += 1.0;
            wins += if sp > sn {
                1.0
            } else if sp == sn {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / total
}

fn distinct_desc(pairs: &[(f64, bool)]) -> Vec<f64> {
    let mut t: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    t.sort_by(|a, b| b.total_cmp(a));
    t.dedup();
    t
}

/// Precision times recall step at each distinct threshold, counted afresh.
pub fn ap_oracle(pairs: &[(f64, bool)]) -> f64 {
    let n_pos = pairs.iter().filter(|p| p.1).count() as f64;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in distinct_desc(pairs) {
        let tp = pairs.iter().filter(|p| p.0 >= t && p.1).count() as f64;
        let flagged = pairs.iter().filter(|p| p.0 >= t).count() as f64;
        let recall = tp / n_pos;
        ap += (tp / flagged) * (recall - prev_recall);
        prev_recall = recall;
    }
    ap
}

/// (filter_rate, recall, threshold) at the largest threshold reaching `target`.
pub fn filter_rate_oracle(pairs: &[(f64, bool)], target: f64) -> (f64, f64, f64) {
    let n_pos = pairs.iter().filter(|p| p.1).count() as f64;
    for t in distinct_desc(pairs) {
        let recall = pairs.iter().filter(|p| p.0 >= t && p.1).count() as f64 / n_pos;
        if recall >= target {
            let skipped = pairs.iter().filter(|p| p.0 < t).count() as f64;
            return (skipped / pairs.len() as f64, recall, t);
        }
    }
    unreachable!("the lowest threshold flags every positive")
}
