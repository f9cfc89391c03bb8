//! Property-datatype registry.
//!
//! Text format, one property per line: `P569 time`, `P213 external-id`.
//! Blank lines and `#` comments are ignored. Properties not listed have
//! datatype `unknown`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::entity::PropertyId;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Datatype {
    WikibaseItem,
    ExternalId,
    Url,
    Time,
    String,
    Quantity,
    GlobeCoordinate,
    CommonsMedia,
    Monolingualtext,
    Other(std::string::String),
    Unknown,
}

impl FromStr for Datatype {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "wikibase-item" => Datatype::WikibaseItem,
            "external-id" => Datatype::ExternalId,
            "url" => Datatype::Url,
            "time" => Datatype::Time,
            "string" => Datatype::String,
            "quantity" => Datatype::Quantity,
            "globe-coordinate" => Datatype::GlobeCoordinate,
            "commonsMedia" => Datatype::CommonsMedia,
            "monolingualtext" => Datatype::Monolingualtext,
            "unknown" => Datatype::Unknown,
            other => Datatype::Other(other.to_owned()),
        })
    }
}

impl fmt::Display for Datatype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Datatype::WikibaseItem => "wikibase-item",
            Datatype::ExternalId => "external-id",
            Datatype::Url => "url",
            Datatype::Time => "time",
            Datatype::String => "string",
            Datatype::Quantity => "quantity",
            Datatype::GlobeCoordinate => "globe-coordinate",
            Datatype::CommonsMedia => "commonsMedia",
            Datatype::Monolingualtext => "monolingualtext",
            Datatype::Other(s) => s,
            Datatype::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("registry line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("reading registry: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PropertyRegistry {
    types: BTreeMap<PropertyId, Datatype>,
}

impl PropertyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, RegistryError> {
        let mut types = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(p), Some(t), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(RegistryError::Parse {
                    line: i + 1,
                    message: format!("expected `<property> <datatype>`, got {line:?}"),
                });
            };
            let property = PropertyId::new(p).map_err(|e| RegistryError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            types.insert(property, t.parse().expect("infallible"));
        }
        Ok(PropertyRegistry { types })
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn insert(&mut self, property: PropertyId, datatype: Datatype) {
        self.types.insert(property, datatype);
    }

    pub fn datatype(&self, property: &PropertyId) -> Datatype {
        self.types.get(property).cloned().unwrap_or(Datatype::Unknown)
    }

    pub fn is_identifier(&self, property: &PropertyId) -> bool {
        matches!(self.types.get(property), Some(Datatype::ExternalId))
    }

    pub fn to_text(&self) -> String {
        self.types.iter().map(|(p, t)| format!("{p} {t}\n")).collect()
    }

    /// A handful of common identifier and value properties.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN).expect("builtin registry parses")
    }
}

const BUILTIN: &str = "\
P18 commonsMedia
P21 wikibase-item
P27 wikibase-item
P31 wikibase-item
P54 wikibase-item
P106 wikibase-item
P109 commonsMedia
P213 external-id
P214 external-id
P227 external-id
P244 external-id
P345 external-id
P373 string
P569 time
P570 time
P625 globe-coordinate
P646 external-id
P856 url
P1082 quantity
P2002 external-id
";
