//! The 53-entry edit feature vector and its four ablation groups.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::PatternConfig;
use crate::diff::EntityDiff;
use crate::edit::{EditKind, EditMeta};
use crate::entity::{EntityRevision, PropertyId};

/// Bumped whenever names, order or semantics of the vector change.
pub const FEATURE_SCHEMA_VERSION: &str = "vs-features-1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureGroup {
    General,
    Context,
    Type,
    User,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 4] = [
        FeatureGroup::General,
        FeatureGroup::Context,
        FeatureGroup::Type,
        FeatureGroup::User,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureGroup::General => "general",
            FeatureGroup::Context => "context",
            FeatureGroup::Type => "type",
            FeatureGroup::User => "user",
        }
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureGroup {
    type Err = FeatureError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "general" => Ok(FeatureGroup::General),
            "context" => Ok(FeatureGroup::Context),
            "type" => Ok(FeatureGroup::Type),
            "user" => Ok(FeatureGroup::User),
            other => Err(FeatureError::UnknownGroup(other.to_owned())),
        }
    }
}

/// A nonempty set of feature groups, displayed like `general,user` or `all`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GroupSet(BTreeSet<FeatureGroup>);

impl GroupSet {
    pub fn new(groups: impl IntoIterator<Item = FeatureGroup>) -> Result<Self, FeatureError> {
        let set: BTreeSet<_> = groups.into_iter().collect();
        if set.is_empty() {
            return Err(FeatureError::EmptyGroupSet);
        }
        Ok(GroupSet(set))
    }

    pub fn all() -> Self {
        GroupSet(FeatureGroup::ALL.into_iter().collect())
    }

    pub fn contains(&self, g: FeatureGroup) -> bool {
        self.0.contains(&g)
    }

    pub fn iter(&self) -> impl Iterator<Item = FeatureGroup> + '_ {
        self.0.iter().copied()
    }

    /// Schema positions of the selected features, in schema order.
    pub fn indices(&self) -> Vec<usize> {
        FEATURES
            .iter()
            .enumerate()
            .filter(|(_, f)| self.0.contains(&f.group))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn feature_names(&self) -> Vec<&'static str> {
        self.indices().into_iter().map(|i| FEATURES[i].name).collect()
    }

    /// The five feature combinations of the ablation table, in table order.
    pub fn ablation_combos() -> Vec<GroupSet> {
        use FeatureGroup::*;
        [
            vec![General],
            vec![General, Context],
            vec![General, Type, Context],
            vec![General, User],
            vec![General, Context, Type, User],
        ]
        .into_iter()
        .map(|g| GroupSet::new(g).expect("nonempty"))
        .collect()
    }
}

impl fmt::Display for GroupSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.len() == FeatureGroup::ALL.len() {
            return f.write_str("all");
        }
        let names: Vec<&str> = self.0.iter().map(|g| g.as_str()).collect();
        f.write_str(&names.join(","))
    }
}

impl FromStr for GroupSet {
    type Err = FeatureError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim() == "all" {
            return Ok(GroupSet::all());
        }
        GroupSet::new(s.split(',').map(str::parse).collect::<Result<Vec<_>, _>>()?)
    }
}

impl TryFrom<String> for GroupSet {
    type Error = FeatureError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<GroupSet> for String {
    fn from(g: GroupSet) -> String {
        g.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("config schema {found} is incompatible with feature schema {expected}")]
    SchemaMismatch { expected: String, found: String },
    #[error("unknown feature group {0:?}")]
    UnknownGroup(String),
    #[error("at least one feature group is required")]
    EmptyGroupSet,
    #[error("feature vector has {found} entries, schema has {expected}")]
    Length { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct FeatureSpec {
    pub name: &'static str,
    pub group: FeatureGroup,
}

const fn f(name: &'static str, group: FeatureGroup) -> FeatureSpec {
    FeatureSpec { name, group }
}

use FeatureGroup::{Context as C, General as G, Type as T, User as U};

pub const FEATURE_COUNT: usize = 53;

pub static FEATURES: [FeatureSpec; FEATURE_COUNT] = [
    f("sitelinks_added", G),
    f("sitelinks_removed", G),
    f("sitelinks_changed", G),
    f("sitelinks_current", G),
    f("labels_added", G),
    f("labels_removed", G),
    f("labels_changed", G),
    f("labels_current", G),
    f("descriptions_added", G),
    f("descriptions_removed", G),
    f("descriptions_changed", G),
    f("descriptions_current", G),
    f("statements_added", G),
    f("statements_removed", G),
    f("statements_changed", G),
    f("statements_current", G),
    f("aliases_added", G),
    f("aliases_removed", G),
    f("aliases_current", G),
    f("badges_added", G),
    f("badges_removed", G),
    f("badges_current", G),
    f("qualifiers_added", G),
    f("qualifiers_removed", G),
    f("qualifiers_current", G),
    f("references_added", G),
    f("references_removed", G),
    f("references_current", G),
    f("identifiers_changed", G),
    f("proportion_qids_added", C),
    f("english_label_changed", C),
    f("proportion_language_names_added", C),
    f("proportion_external_links_added", C),
    f("gender_changed", C),
    f("citizenship_changed", C),
    f("sports_team_changed", C),
    f("dob_changed", C),
    f("image_changed", C),
    f("signature_changed", C),
    f("commons_category_changed", C),
    f("official_website_changed", C),
    f("is_human", C),
    f("is_living_human", C),
    f("is_client_edit", T),
    f("is_merge", T),
    f("is_revertish", T),
    f("is_item_creation", T),
    f("is_bot", U),
    f("has_advanced_rights", U),
    f("is_admin", U),
    f("is_curator", U),
    f("is_anonymous", U),
    f("log_age", U),
];

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURES.iter().position(|f| f.name == name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        feature_index(name).map(|i| self.0[i])
    }

    /// Sub-vector for the requested groups, in schema order.
    pub fn select(&self, groups: &GroupSet) -> Vec<f64> {
        groups.indices().into_iter().map(|i| self.0[i]).collect()
    }

    pub fn select_indices(&self, indices: &[usize]) -> Vec<f64> {
        indices.iter().map(|&i| self.0[i]).collect()
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = FeatureError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        if v.len() != FEATURE_COUNT {
            return Err(FeatureError::Length { expected: FEATURE_COUNT, found: v.len() });
        }
        Ok(FeatureVector(v))
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Vec<f64> {
        v.0
    }
}

pub fn select_group(v: &FeatureVector, groups: &GroupSet) -> Vec<f64> {
    v.select(groups)
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Builds the feature vector from the diff, the child revision and the edit
/// metadata. Nothing that happens after the edit is read.
pub fn extract(
    diff: &EntityDiff,
    child: &EntityRevision,
    meta: &EditMeta,
    cfg: &PatternConfig,
) -> Result<FeatureVector, FeatureError> {
    if cfg.schema_version != FEATURE_SCHEMA_VERSION {
        return Err(FeatureError::SchemaMismatch {
            expected: FEATURE_SCHEMA_VERSION.to_owned(),
            found: cfg.schema_version.clone(),
        });
    }
    let mut v = Vec::with_capacity(FEATURE_COUNT);
    for k in [&diff.sitelinks, &diff.labels, &diff.descriptions, &diff.statements] {
        v.extend([k.added, k.removed, k.changed, k.current].map(f64::from));
    }
    for m in [&diff.aliases, &diff.badges, &diff.qualifiers, &diff.references] {
        v.extend([m.added, m.removed, m.current].map(f64::from));
    }
    v.push(f64::from(diff.changed_identifiers));

    let props = &cfg.properties;
    let changed = |p: &PropertyId| flag(diff.changed_properties.contains(p));
    let language_names: u32 = diff
        .added_item_ids
        .iter()
        .filter(|(q, _)| cfg.language_item_ids.contains(*q))
        .map(|(_, n)| *n)
        .sum();
    let is_human = child.has_claim(&props.instance_of, &cfg.human);
    v.push((f64::from(diff.added_item_refs) - f64::from(diff.removed_item_refs)) / (f64::from(diff.parent_item_refs) + 1.0));
    v.push(flag(diff.changed_label_languages.contains("en")));
    v.push(f64::from(language_names) / (f64::from(diff.added_item_refs) + 1.0));
    v.push(f64::from(diff.added_urls) / (f64::from(diff.parent_urls) + 1.0));
    for p in [
        &props.gender,
        &props.citizenship,
        &props.sports_team,
        &props.date_of_birth,
        &props.image,
        &props.signature,
        &props.commons_category,
        &props.official_website,
    ] {
        v.push(changed(p));
    }
    v.push(flag(is_human));
    v.push(flag(is_human && !child.has_property(&props.date_of_death)));

    let kind = cfg.classifier().classify(&meta.comment, meta);
    v.push(flag(kind == EditKind::Client));
    v.push(flag(kind == EditKind::Merge));
    v.push(flag(kind == EditKind::Revertish));
    v.push(flag(diff.is_creation));

    let user = &meta.user;
    let groups = &cfg.groups;
    v.push(flag(user.is_bot || user.groups.contains("bot")));
    v.push(flag(user.in_any(&groups.advanced)));
    v.push(flag(user.in_any(&groups.admin)));
    v.push(flag(user.in_any(&groups.curator)));
    v.push(flag(user.is_anonymous));
    v.push(meta.editor_age().map_or(0.0, |age| (age as f64 + 1.0).ln()));

    debug_assert_eq!(v.len(), FEATURE_COUNT);
    Ok(FeatureVector(v))
}
