//! Pattern configuration: property bindings, user-group sets, summary
//! patterns and the language item list. Stored as versioned TOML.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edit::{default_comment_patterns, CommentClassifier, CommentPattern};
use crate::entity::{ItemId, PropertyId};
use crate::features::FEATURE_SCHEMA_VERSION;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid comment pattern: {0}")]
    Pattern(#[from] regex::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropertyBindings {
    pub gender: PropertyId,
    pub citizenship: PropertyId,
    pub sports_team: PropertyId,
    pub date_of_birth: PropertyId,
    pub image: PropertyId,
    pub signature: PropertyId,
    pub commons_category: PropertyId,
    pub official_website: PropertyId,
    pub instance_of: PropertyId,
    pub date_of_death: PropertyId,
}

fn pid(s: &str) -> PropertyId {
    PropertyId::new(s).expect("builtin property id")
}

impl Default for PropertyBindings {
    fn default() -> Self {
        PropertyBindings {
            gender: pid("P21"),
            citizenship: pid("P27"),
            sports_team: pid("P54"),
            date_of_birth: pid("P569"),
            image: pid("P18"),
            signature: pid("P109"),
            commons_category: pid("P373"),
            official_website: pid("P856"),
            instance_of: pid("P31"),
            date_of_death: pid("P570"),
        }
    }
}

fn set(names: &[&str]) -> BTreeSet<String> {
    names.iter().map(|s| (*s).to_owned()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupSets {
    /// Edits by members of any of these groups are never labeled vandalism.
    pub trusted: BTreeSet<String>,
    pub advanced: BTreeSet<String>,
    pub curator: BTreeSet<String>,
    pub admin: BTreeSet<String>,
}

impl Default for GroupSets {
    fn default() -> Self {
        GroupSets {
            trusted: set(&[
                "sysop",
                "checkuser",
                "flood",
                "ipblock-exempt",
                "oversight",
                "property-creator",
                "rollbacker",
                "steward",
                "translationadmin",
                "wikidata-staff",
            ]),
            advanced: set(&["checkuser", "bureaucrat", "oversight"]),
            curator: set(&["rollbacker", "abusefilter", "autopatrolled", "reviewer"]),
            admin: set(&["sysop"]),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct RawPatternConfig {
    schema_version: String,
    human: ItemId,
    properties: PropertyBindings,
    groups: GroupSets,
    comment_patterns: Vec<CommentPattern>,
    language_item_ids: BTreeSet<ItemId>,
}

impl Default for RawPatternConfig {
    fn default() -> Self {
        RawPatternConfig {
            schema_version: FEATURE_SCHEMA_VERSION.to_owned(),
            human: ItemId::new("Q5").expect("builtin item id"),
            properties: PropertyBindings::default(),
            groups: GroupSets::default(),
            comment_patterns: default_comment_patterns(),
            language_item_ids: LANGUAGE_ITEMS
                .iter()
                .map(|q| ItemId::new(*q).expect("builtin language id"))
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PatternConfig {
    pub schema_version: String,
    pub human: ItemId,
    pub properties: PropertyBindings,
    pub groups: GroupSets,
    pub comment_patterns: Vec<CommentPattern>,
    pub language_item_ids: BTreeSet<ItemId>,
    classifier: CommentClassifier,
}

impl Default for PatternConfig {
    fn default() -> Self {
        PatternConfig::from_raw(RawPatternConfig::default()).expect("default config is valid")
    }
}

impl PatternConfig {
    fn from_raw(raw: RawPatternConfig) -> Result<Self, ConfigError> {
        let classifier = CommentClassifier::new(&raw.comment_patterns)?;
        Ok(PatternConfig {
            schema_version: raw.schema_version,
            human: raw.human,
            properties: raw.properties,
            groups: raw.groups,
            comment_patterns: raw.comment_patterns,
            language_item_ids: raw.language_item_ids,
            classifier,
        })
    }

    fn to_raw(&self) -> RawPatternConfig {
        RawPatternConfig {
            schema_version: self.schema_version.clone(),
            human: self.human.clone(),
            properties: self.properties.clone(),
            groups: self.groups.clone(),
            comment_patterns: self.comment_patterns.clone(),
            language_item_ids: self.language_item_ids.clone(),
        }
    }

    /// Keys missing from the file take their default values.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Self::from_raw(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_raw()).expect("config serializes")
    }

    pub fn classifier(&self) -> &CommentClassifier {
        &self.classifier
    }
}

/// Items for major languages, used to spot language names entered as
/// statement values.
const LANGUAGE_ITEMS: &[&str] = &[
    "Q1860", "Q188", "Q150", "Q1321", "Q652", "Q7737", "Q5287", "Q7850", "Q5146", "Q13955",
    "Q7411", "Q809", "Q9027", "Q9168", "Q1568", "Q9176", "Q256", "Q8798", "Q9288", "Q9129",
    "Q9056", "Q1412", "Q9035", "Q9043", "Q9067", "Q7913", "Q9240", "Q9199", "Q9217", "Q9610",
    "Q1617", "Q397", "Q7026", "Q8752", "Q9309", "Q9142", "Q143", "Q5885", "Q8097", "Q1571",
    "Q7838", "Q9299", "Q6654", "Q7918", "Q9058", "Q9063", "Q9083", "Q9078", "Q9072", "Q294",
    "Q8748", "Q8785", "Q8108", "Q9292", "Q9252", "Q9237", "Q34057", "Q14196", "Q9091", "Q9296",
    "Q9303", "Q9307", "Q9314", "Q9166", "Q33823", "Q13267", "Q9205", "Q9211", "Q9228", "Q9246",
    "Q28244", "Q34311", "Q56475", "Q10179", "Q13218", "Q13275", "Q58680", "Q36368", "Q25285",
    "Q9051", "Q25258", "Q12107", "Q14185", "Q33111", "Q27175", "Q8641", "Q11059", "Q5218",
    "Q35876", "Q33569", "Q36451", "Q34011", "Q7930", "Q33491", "Q33549", "Q34002", "Q33239",
    "Q9255", "Q9260", "Q9267", "Q13263", "Q34271", "Q58635", "Q5137", "Q33673", "Q36236",
    "Q33810", "Q29401",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = PatternConfig::default();
        let back = PatternConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back.to_raw().properties, cfg.properties);
        assert_eq!(back.groups, cfg.groups);
        assert_eq!(back.language_item_ids, cfg.language_item_ids);
        assert_eq!(back.comment_patterns, cfg.comment_patterns);
    }

    #[test]
    fn partial_file_overrides() {
        let cfg = PatternConfig::from_toml("human = \"Q99\"\n[properties]\ngender = \"P7\"\n").unwrap();
        assert_eq!(cfg.human.as_str(), "Q99");
        assert_eq!(cfg.properties.gender.as_str(), "P7");
        assert_eq!(cfg.properties.citizenship.as_str(), "P27");
        assert!(cfg.groups.trusted.contains("sysop"));
    }

    #[test]
    fn bad_pattern_rejected() {
        let text = "[[comment_patterns]]\nkind = \"merge\"\npattern = \"(\"\n";
        assert!(matches!(PatternConfig::from_toml(text), Err(ConfigError::Pattern(_))));
    }

    #[test]
    fn trusted_defaults() {
        let g = GroupSets::default();
        assert_eq!(g.trusted.len(), 10);
        assert!(g.advanced.contains("bureaucrat"));
        assert!(g.curator.contains("autopatrolled"));
    }
}
