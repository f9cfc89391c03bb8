//! Proptest generators over small vocabularies so that parents and children
//! share many elements.

use proptest::collection::{btree_map, btree_set, vec};
use proptest::prelude::*;
use vandal_core::entity::{EntityRevision, ItemId, PropertyId, Rank, Sitelink, Snak, SnakValue, Statement};

const LANGS: &[&str] = &["en", "de", "fr", "nl", "ja"];
const WORDS: &[&str] = &["Paris", "Berlin", "Tokyo", "x", "Zoë", "名前"];
const PROPS: &[&str] = &["P31", "P214", "P856", "P569", "P18"];
const SITES: &[&str] = &["enwiki", "dewiki", "frwiki", "commonswiki"];

fn item() -> impl Strategy<Value = ItemId> {
    (1u64..6).prop_map(|n| ItemId::new(format!("Q{n}")).expect("item id"))
}

fn property() -> impl Strategy<Value = PropertyId> {
    prop::sample::select(PROPS).prop_map(|p| PropertyId::new(p).expect("property id"))
}

fn word() -> impl Strategy<Value = String> {
    prop::sample::select(WORDS).prop_map(str::to_owned)
}

pub fn snak_value() -> impl Strategy<Value = SnakValue> {
    prop_oneof![
        4 => item().prop_map(SnakValue::Item),
        1 => word().prop_map(SnakValue::String),
        1 => (0u8..3).prop_map(|n| SnakValue::Url(format!("https://e{n}.example/"))),
        1 => (0u8..3).prop_map(|n| SnakValue::ExternalId(format!("{n}"))),
        1 => (1990i32..1993).prop_map(|y| SnakValue::Time(format!("+{y}-01-01T00:00:00Z"))),
        1 => (0i32..3).prop_map(|n| SnakValue::Quantity(format!("+{n}"))),
        1 => (0i8..2).prop_map(|n| SnakValue::Coordinate { latitude: f64::from(n) * 0.5, longitude: 1.25 }),
        1 => Just(SnakValue::NoValue),
        1 => Just(SnakValue::SomeValue),
    ]
}

fn snak() -> impl Strategy<Value = Snak> {
    (property(), snak_value()).prop_map(|(p, v)| Snak::new(p, v))
}

fn rank() -> impl Strategy<Value = Rank> {
    prop_oneof![6 => Just(Rank::Normal), 1 => Just(Rank::Preferred), 1 => Just(Rank::Deprecated)]
}

pub fn statement() -> impl Strategy<Value = Statement> {
    (property(), snak_value(), vec(snak(), 0..3), vec(vec(snak(), 1..3), 0..3), rank()).prop_map(|(p, v, q, r, k)| {
        let mut s = Statement::new(p, v);
        s.qualifiers = q;
        s.references = r;
        s.rank = k;
        s
    })
}

fn terms() -> impl Strategy<Value = std::collections::BTreeMap<String, String>> {
    btree_map(prop::sample::select(LANGS).prop_map(str::to_owned), word(), 0..5)
}

/// An item with at most 20 entries in each section.
pub fn entity(item_id: ItemId) -> impl Strategy<Value = EntityRevision> {
    let aliases = btree_map(prop::sample::select(LANGS).prop_map(str::to_owned), btree_set(word(), 1..4).prop_map(|s| s.into_iter().collect::<Vec<_>>()), 0..4);
    let sitelinks = btree_map(prop::sample::select(SITES).prop_map(str::to_owned), (word(), btree_set(item(), 0..3)), 0..4);
    (terms(), terms(), aliases, vec(statement(), 0..15), sitelinks).prop_map(move |(labels, descriptions, aliases, statements, links)| {
        let mut e = EntityRevision::empty(item_id.clone());
        e.labels = labels;
        e.descriptions = descriptions;
        e.aliases = aliases;
        for s in statements {
            e.add_statement(s);
        }
        e.sitelinks = links
            .into_iter()
            .map(|(site, (title, badges))| (site.clone(), Sitelink { site, title, badges: badges.into_iter().collect() }))
            .collect();
        e
    })
}

/// Random edits applied to `e`: drop, duplicate or rewrite a few elements.
fn mutate(e: EntityRevision) -> impl Strategy<Value = EntityRevision> {
    (
        vec((0usize..64, 0u8..6), 0..6),
        vec(statement(), 0..3),
        terms(),
    )
        .prop_map(move |(ops, extra, new_terms)| {
            let mut child = e.clone();
            for (at, op) in ops {
                match op {
                    0 => {
                        if let Some(k) = child.labels.keys().nth(at % child.labels.len().max(1)).cloned() {
                            child.labels.remove(&k);
                        }
                    }
                    1 => {
                        if let Some((k, v)) = new_terms.iter().nth(at % new_terms.len().max(1)) {
                            child.labels.insert(k.clone(), v.clone());
                        }
                    }
                    2 => {
                        let n = child.statement_count();
                        if n > 0 {
                            let key = child.statements.keys().nth(at % child.statements.len()).cloned().expect("key");
                            let list = child.statements.get_mut(&key).expect("list");
                            list.remove(at % list.len());
                            if list.is_empty() {
                                child.statements.remove(&key);
                            }
                        }
                    }
                    3 => {
                        if let Some(list) = child.statements.values_mut().next() {
                            let s = list[at % list.len()].clone();
                            list.push(s);
                        }
                    }
                    4 => {
                        if let Some(list) = child.statements.values_mut().next() {
                            let k = at % list.len();
                            list[k].qualifiers.reverse();
                            list[k].references.reverse();
                            if at % 2 == 0 {
                                list[k].rank = Rank::Preferred;
                            }
                        }
                    }
                    _ => {
                        let q9 = ItemId::new("Q9").expect("item id");
                        if let Some(l) = child.sitelinks.values_mut().find(|l| !l.badges.contains(&q9)) {
                            l.badges.push(q9);
                        }
                    }
                }
            }
            for s in extra {
                child.add_statement(s);
            }
            child
        })
}

/// Parent/child pairs: either independent draws or a mutated copy.
pub fn entity_pair() -> impl Strategy<Value = (EntityRevision, EntityRevision)> {
    let id = ItemId::new("Q42").expect("item id");
    prop_oneof![
        (entity(id.clone()), entity(id.clone())),
        entity(id).prop_flat_map(|p| (Just(p.clone()), mutate(p))),
    ]
}

/// (hash symbol, timestamp) histories with timestamps on a coarse grid so
/// that gaps of exactly the window occur.
pub fn history(max_len: usize, window: i64) -> impl Strategy<Value = Vec<(u8, i64)>> {
    vec((0u8..4, prop_oneof![Just(0i64), Just(1), Just(window / 2), Just(window), Just(window + 1)]), 1..=max_len).prop_map(
        |steps| {
            let mut t = 0;
            steps
                .into_iter()
                .map(|(h, dt)| {
                    t += dt;
                    (h, t)
                })
                .collect()
        },
    )
}

/// Scored pairs with both classes present; scores are often tied.
pub fn scored_pairs(max_n: usize) -> impl Strategy<Value = Vec<(f64, bool)>> {
    let score = prop_oneof![(0u8..=10).prop_map(|k| f64::from(k) / 10.0), 0.0f64..=1.0];
    (vec((score, any::<bool>()), 0..=max_n.saturating_sub(2)), 0.0f64..=1.0, 0.0f64..=1.0).prop_map(|(mut v, a, b)| {
        v.push((a, true));
        v.push((b, false));
        v
    })
}
