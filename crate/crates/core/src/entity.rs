//! Structured item model and the entity JSON reader/writer.
//!
//! An item carries five content sections: labels, descriptions, aliases,
//! statements and sitelinks. Revision metadata (`rev_id`, `timestamp`) is
//! not part of the entity document; it is attached by the caller from the
//! edit metadata.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha1::{Digest, Sha1};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("malformed JSON at {path}: {message}")]
    MalformedJson { path: String, message: String },
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
}

impl ParseError {
    pub fn path(&self) -> &str {
        match self {
            ParseError::MalformedJson { path, .. } | ParseError::SchemaViolation { path, .. } => path,
        }
    }

    fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        ParseError::SchemaViolation {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid {kind} identifier {value:?}")]
pub struct IdError {
    kind: &'static str,
    value: String,
}

fn valid_prefixed_number(s: &str, prefix: char) -> bool {
    let mut chars = s.chars();
    if chars.next() != Some(prefix) {
        return false;
    }
    let digits = &s[1..];
    !digits.is_empty() && !digits.starts_with('0') && digits.bytes().all(|b| b.is_ascii_digit())
}

macro_rules! prefixed_id {
    ($name:ident, $prefix:expr, $kind:expr) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Result<Self, IdError> {
                let s = s.into();
                if valid_prefixed_number(&s, $prefix) {
                    Ok($name(s))
                } else {
                    Err(IdError { kind: $kind, value: s })
                }
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }

            pub fn number(&self) -> u64 {
                self.0[1..].parse().unwrap_or(u64::MAX)
            }
        }

        impl FromStr for $name {
            type Err = IdError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                $name::new(s)
            }
        }

        impl TryFrom<String> for $name {
            type Error = IdError;
            fn try_from(s: String) -> Result<Self, Self::Error> {
                $name::new(s)
            }
        }

        impl From<$name> for String {
            fn from(id: $name) -> String {
                id.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

prefixed_id!(ItemId, 'Q', "item");
prefixed_id!(PropertyId, 'P', "property");

/// The data value of a snak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnakValue {
    Item(ItemId),
    String(String),
    /// Decimal amount as written in the document (e.g. `+10.5`).
    Quantity(String),
    /// Calendar time string (e.g. `+2001-12-31T00:00:00Z`).
    Time(String),
    Url(String),
    ExternalId(String),
    Coordinate { latitude: f64, longitude: f64 },
    NoValue,
    SomeValue,
}

impl SnakValue {
    pub fn as_item(&self) -> Option<&ItemId> {
        match self {
            SnakValue::Item(q) => Some(q),
            _ => None,
        }
    }

    pub fn is_url(&self) -> bool {
        matches!(self, SnakValue::Url(_))
    }

    fn canonical(&self) -> Value {
        serde_json::to_value(self).expect("snak values serialize")
    }
}

/// A (property, value) pair as used for qualifiers and reference snaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snak {
    pub property: PropertyId,
    pub value: SnakValue,
}

impl Snak {
    pub fn new(property: PropertyId, value: SnakValue) -> Self {
        Snak { property, value }
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.canonical()).expect("snaks serialize")
    }

    fn canonical(&self) -> Value {
        json!({ "p": self.property.as_str(), "v": self.value.canonical() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Rank {
    Preferred,
    #[default]
    Normal,
    Deprecated,
}

impl Rank {
    fn as_str(self) -> &'static str {
        match self {
            Rank::Preferred => "preferred",
            Rank::Normal => "normal",
            Rank::Deprecated => "deprecated",
        }
    }
}

pub type ReferenceGroup = Vec<Snak>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statement {
    pub property: PropertyId,
    pub value: SnakValue,
    #[serde(default)]
    pub qualifiers: Vec<Snak>,
    #[serde(default)]
    pub references: Vec<ReferenceGroup>,
    #[serde(default)]
    pub rank: Rank,
}

impl Statement {
    pub fn new(property: PropertyId, value: SnakValue) -> Self {
        Statement {
            property,
            value,
            qualifiers: Vec::new(),
            references: Vec::new(),
            rank: Rank::Normal,
        }
    }

    /// Order-insensitive serialization: qualifiers and reference groups are
    /// sorted by their own canonical bytes. Two statements are structurally
    /// equal iff their canonical bytes are equal.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.canonical()).expect("statements serialize")
    }

    pub fn value_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.value.canonical()).expect("snak values serialize")
    }

    fn canonical(&self) -> Value {
        let qualifiers = sorted_values(self.qualifiers.iter().map(Snak::canonical));
        let references = sorted_values(
            self.references
                .iter()
                .map(|group| Value::Array(sorted_values(group.iter().map(Snak::canonical)))),
        );
        json!({
            "p": self.property.as_str(),
            "v": self.value.canonical(),
            "q": qualifiers,
            "r": references,
            "k": self.rank.as_str(),
        })
    }

    /// All snaks of the statement: main value, qualifiers, then references.
    pub fn snak_values(&self) -> impl Iterator<Item = &SnakValue> {
        std::iter::once(&self.value)
            .chain(self.qualifiers.iter().map(|s| &s.value))
            .chain(self.references.iter().flatten().map(|s| &s.value))
    }

    pub fn canonical_reference_bytes(group: &[Snak]) -> Vec<u8> {
        let v = Value::Array(sorted_values(group.iter().map(Snak::canonical)));
        serde_json::to_vec(&v).expect("references serialize")
    }
}

fn sorted_values(values: impl Iterator<Item = Value>) -> Vec<Value> {
    let mut keyed: Vec<(Vec<u8>, Value)> = values
        .map(|v| (serde_json::to_vec(&v).expect("values serialize"), v))
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    keyed.into_iter().map(|(_, v)| v).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sitelink {
    pub site: String,
    pub title: String,
    #[serde(default)]
    pub badges: Vec<ItemId>,
}

/// 160-bit content digest of an item revision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct ContentHash(pub [u8; 20]);

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl From<ContentHash> for String {
    fn from(h: ContentHash) -> String {
        h.to_string()
    }
}

impl TryFrom<String> for ContentHash {
    type Error = hex::FromHexError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        let mut out = [0u8; 20];
        hex::decode_to_slice(s, &mut out)?;
        Ok(ContentHash(out))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRevision {
    pub item_id: ItemId,
    /// Zero until bound to edit metadata; the entity document does not carry it.
    #[serde(default)]
    pub rev_id: u64,
    #[serde(default)]
    pub timestamp: i64,
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
    #[serde(default)]
    pub descriptions: BTreeMap<String, String>,
    #[serde(default)]
    pub aliases: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub statements: BTreeMap<PropertyId, Vec<Statement>>,
    #[serde(default)]
    pub sitelinks: BTreeMap<String, Sitelink>,
}

impl EntityRevision {
    pub fn empty(item_id: ItemId) -> Self {
        EntityRevision {
            item_id,
            rev_id: 0,
            timestamp: 0,
            labels: BTreeMap::new(),
            descriptions: BTreeMap::new(),
            aliases: BTreeMap::new(),
            statements: BTreeMap::new(),
            sitelinks: BTreeMap::new(),
        }
    }

    pub fn with_revision(mut self, rev_id: u64, timestamp: i64) -> Self {
        self.rev_id = rev_id;
        self.timestamp = timestamp;
        self
    }

    pub fn statement_count(&self) -> usize {
        self.statements.values().map(Vec::len).sum()
    }

    pub fn all_statements(&self) -> impl Iterator<Item = &Statement> {
        self.statements.values().flatten()
    }

    pub fn has_claim(&self, property: &PropertyId, item: &ItemId) -> bool {
        self.statements
            .get(property)
            .is_some_and(|list| list.iter().any(|s| s.value.as_item() == Some(item)))
    }

    pub fn has_property(&self, property: &PropertyId) -> bool {
        self.statements.get(property).is_some_and(|l| !l.is_empty())
    }

    pub fn add_statement(&mut self, statement: Statement) {
        self.statements
            .entry(statement.property.clone())
            .or_default()
            .push(statement);
    }

    /// Digest over the five content sections only. Map keys are sorted; alias
    /// lists, badges, statements within a property, qualifiers and reference
    /// groups are sorted by canonical bytes, so list order never matters.
    pub fn canonical_hash(&self) -> ContentHash {
        let bytes = serde_json::to_vec(&self.canonical_content()).expect("content serializes");
        let digest = Sha1::digest(&bytes);
        let mut out = [0u8; 20];
        out.copy_from_slice(&digest);
        ContentHash(out)
    }

    fn canonical_content(&self) -> Value {
        let aliases: Map<String, Value> = self
            .aliases
            .iter()
            .filter(|(_, list)| !list.is_empty())
            .map(|(lang, list)| {
                let mut sorted = list.clone();
                sorted.sort();
                (lang.clone(), json!(sorted))
            })
            .collect();
        let statements: Map<String, Value> = self
            .statements
            .iter()
            .filter(|(_, list)| !list.is_empty())
            .map(|(p, list)| {
                (p.to_string(), Value::Array(sorted_values(list.iter().map(Statement::canonical))))
            })
            .collect();
        let sitelinks: Map<String, Value> = self
            .sitelinks
            .iter()
            .map(|(site, link)| {
                let mut badges: Vec<&str> = link.badges.iter().map(ItemId::as_str).collect();
                badges.sort_unstable();
                (site.clone(), json!({ "title": link.title, "badges": badges }))
            })
            .collect();
        json!({
            "labels": self.labels,
            "descriptions": self.descriptions,
            "aliases": aliases,
            "statements": statements,
            "sitelinks": sitelinks,
        })
    }
}

pub fn canonical_hash(rev: &EntityRevision) -> ContentHash {
    rev.canonical_hash()
}

/// Parses raw bytes; invalid UTF-8 is reported as malformed JSON.
pub fn parse_entity_bytes(bytes: &[u8]) -> Result<EntityRevision, ParseError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ParseError::MalformedJson {
        path: "$".into(),
        message: format!("invalid UTF-8: {e}"),
    })?;
    parse_entity(text)
}

pub fn parse_entity(json_text: &str) -> Result<EntityRevision, ParseError> {
    let root: Value = serde_json::from_str(json_text).map_err(|e| ParseError::MalformedJson {
        path: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    entity_from_value(&root)
}

pub fn entity_from_value(root: &Value) -> Result<EntityRevision, ParseError> {
    let obj = root
        .as_object()
        .ok_or_else(|| ParseError::schema("$", "entity must be an object"))?;
    let id = obj
        .get("id")
        .and_then(Value::as_str)
        .ok_or_else(|| ParseError::schema("id", "missing string id"))?;
    let item_id = ItemId::new(id).map_err(|e| ParseError::schema("id", e.to_string()))?;

    let mut rev = EntityRevision::empty(item_id);
    for (lang, v) in section(obj, "labels")? {
        rev.labels.insert(lang.clone(), term_value(v, &format!("labels.{lang}"))?);
    }
    for (lang, v) in section(obj, "descriptions")? {
        rev.descriptions
            .insert(lang.clone(), term_value(v, &format!("descriptions.{lang}"))?);
    }
    for (lang, v) in section(obj, "aliases")? {
        let path = format!("aliases.{lang}");
        let list = v
            .as_array()
            .ok_or_else(|| ParseError::schema(&path, "expected a list"))?;
        let mut values = Vec::with_capacity(list.len());
        for (i, term) in list.iter().enumerate() {
            let value = term_value(term, &format!("{path}.{i}"))?;
            if values.contains(&value) {
                return Err(ParseError::schema(&path, format!("duplicate alias {value:?}")));
            }
            values.push(value);
        }
        if !values.is_empty() {
            rev.aliases.insert(lang.clone(), values);
        }
    }
    for (key, v) in section(obj, "claims")? {
        let path = format!("claims.{key}");
        let property = PropertyId::new(key.as_str()).map_err(|e| ParseError::schema(&path, e.to_string()))?;
        let list = v
            .as_array()
            .ok_or_else(|| ParseError::schema(&path, "expected a list of statements"))?;
        let mut statements = Vec::with_capacity(list.len());
        for (i, s) in list.iter().enumerate() {
            statements.push(parse_statement(s, &property, &format!("{path}.{i}"))?);
        }
        if !statements.is_empty() {
            rev.statements.insert(property, statements);
        }
    }
    for (site, v) in section(obj, "sitelinks")? {
        rev.sitelinks
            .insert(site.clone(), parse_sitelink(v, site, &format!("sitelinks.{site}"))?);
    }
    Ok(rev)
}

static EMPTY: std::sync::OnceLock<Map<String, Value>> = std::sync::OnceLock::new();

/// Missing sections are empty; an empty JSON list is accepted as an empty map
/// since PHP serializes empty associative arrays that way.
fn section<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Map<String, Value>, ParseError> {
    let empty = EMPTY.get_or_init(Map::new);
    match obj.get(key) {
        None | Some(Value::Null) => Ok(empty),
        Some(Value::Object(m)) => Ok(m),
        Some(Value::Array(a)) if a.is_empty() => Ok(empty),
        Some(_) => Err(ParseError::schema(key, "expected an object")),
    }
}

fn term_value(v: &Value, path: &str) -> Result<String, ParseError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Object(m) => m
            .get("value")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| ParseError::schema(path, "term without string value")),
        _ => Err(ParseError::schema(path, "expected a term object")),
    }
}

fn parse_statement(v: &Value, key: &PropertyId, path: &str) -> Result<Statement, ParseError> {
    let obj = v
        .as_object()
        .ok_or_else(|| ParseError::schema(path, "statement must be an object"))?;
    let main = obj
        .get("mainsnak")
        .ok_or_else(|| ParseError::schema(path, "missing mainsnak"))?;
    let snak = parse_snak(main, &format!("{path}.mainsnak"))?;
    if &snak.property != key {
        return Err(ParseError::schema(
            format!("{path}.mainsnak.property"),
            format!("property {} filed under {}", snak.property, key),
        ));
    }

    let mut qualifiers = Vec::new();
    if let Some(q) = obj.get("qualifiers") {
        qualifiers = parse_snak_map(q, obj.get("qualifiers-order"), &format!("{path}.qualifiers"))?;
    }

    let mut references = Vec::new();
    match obj.get("references") {
        None | Some(Value::Null) => {}
        Some(Value::Array(groups)) => {
            for (i, group) in groups.iter().enumerate() {
                let gpath = format!("{path}.references.{i}");
                let snaks = group
                    .get("snaks")
                    .ok_or_else(|| ParseError::schema(&gpath, "reference without snaks"))?;
                references.push(parse_snak_map(snaks, group.get("snaks-order"), &format!("{gpath}.snaks"))?);
            }
        }
        Some(_) => return Err(ParseError::schema(format!("{path}.references"), "expected a list")),
    }

    let rank = match obj.get("rank") {
        None | Some(Value::Null) => Rank::Normal,
        Some(Value::String(s)) => match s.as_str() {
            "preferred" => Rank::Preferred,
            "normal" => Rank::Normal,
            "deprecated" => Rank::Deprecated,
            other => return Err(ParseError::schema(format!("{path}.rank"), format!("unknown rank {other:?}"))),
        },
        Some(_) => return Err(ParseError::schema(format!("{path}.rank"), "expected a string")),
    };

    Ok(Statement {
        property: snak.property,
        value: snak.value,
        qualifiers,
        references,
        rank,
    })
}

/// Property groups are read in `order` when given, then any the order omits.
fn parse_snak_map(v: &Value, order: Option<&Value>, path: &str) -> Result<Vec<Snak>, ParseError> {
    let map = match v {
        Value::Object(m) => m,
        Value::Array(a) if a.is_empty() => return Ok(Vec::new()),
        Value::Null => return Ok(Vec::new()),
        _ => return Err(ParseError::schema(path, "expected an object of snak lists")),
    };
    let mut keys: Vec<&String> = Vec::with_capacity(map.len());
    if let Some(Value::Array(order)) = order {
        for k in order.iter().filter_map(Value::as_str) {
            if let Some((key, _)) = map.get_key_value(k) {
                if !keys.contains(&key) {
                    keys.push(key);
                }
            }
        }
    }
    for key in map.keys() {
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let mut out = Vec::new();
    for key in keys {
        let list = &map[key];
        let lpath = format!("{path}.{key}");
        let property = PropertyId::new(key.as_str()).map_err(|e| ParseError::schema(&lpath, e.to_string()))?;
        let list = list
            .as_array()
            .ok_or_else(|| ParseError::schema(&lpath, "expected a list of snaks"))?;
        for (i, s) in list.iter().enumerate() {
            let snak = parse_snak(s, &format!("{lpath}.{i}"))?;
            if snak.property != property {
                return Err(ParseError::schema(
                    format!("{lpath}.{i}.property"),
                    format!("property {} filed under {}", snak.property, property),
                ));
            }
            out.push(snak);
        }
    }
    Ok(out)
}

fn parse_snak(v: &Value, path: &str) -> Result<Snak, ParseError> {
    let obj = v
        .as_object()
        .ok_or_else(|| ParseError::schema(path, "snak must be an object"))?;
    let property = obj
        .get("property")
        .and_then(Value::as_str)
        .ok_or_else(|| ParseError::schema(format!("{path}.property"), "missing property"))?;
    let property =
        PropertyId::new(property).map_err(|e| ParseError::schema(format!("{path}.property"), e.to_string()))?;
    let snaktype = obj.get("snaktype").and_then(Value::as_str).unwrap_or("value");
    let value = match snaktype {
        "novalue" => SnakValue::NoValue,
        "somevalue" => SnakValue::SomeValue,
        "value" => {
            let datatype = obj.get("datatype").and_then(Value::as_str);
            let dv = obj
                .get("datavalue")
                .ok_or_else(|| ParseError::schema(format!("{path}.datavalue"), "missing datavalue"))?;
            parse_datavalue(dv, datatype, &format!("{path}.datavalue"))?
        }
        other => {
            return Err(ParseError::schema(
                format!("{path}.snaktype"),
                format!("unknown snaktype {other:?}"),
            ))
        }
    };
    Ok(Snak { property, value })
}

fn parse_datavalue(dv: &Value, datatype: Option<&str>, path: &str) -> Result<SnakValue, ParseError> {
    let obj = dv
        .as_object()
        .ok_or_else(|| ParseError::schema(path, "datavalue must be an object"))?;
    let value = obj
        .get("value")
        .ok_or_else(|| ParseError::schema(format!("{path}.value"), "missing value"))?;
    let raw = || SnakValue::String(serde_json::to_string(value).expect("values serialize"));
    let kind = obj.get("type").and_then(Value::as_str).unwrap_or("");
    let vpath = format!("{path}.value");
    Ok(match kind {
        "wikibase-entityid" => {
            let entity_type = value.get("entity-type").and_then(Value::as_str).unwrap_or("item");
            if entity_type != "item" {
                return Ok(raw());
            }
            let id = match value.get("id").and_then(Value::as_str) {
                Some(id) => id.to_owned(),
                None => match value.get("numeric-id").and_then(Value::as_u64) {
                    Some(n) => format!("Q{n}"),
                    None => return Err(ParseError::schema(vpath, "entity id without id")),
                },
            };
            SnakValue::Item(ItemId::new(id).map_err(|e| ParseError::schema(&vpath, e.to_string()))?)
        }
        "string" => {
            let s = value
                .as_str()
                .ok_or_else(|| ParseError::schema(&vpath, "expected a string"))?
                .to_owned();
            match datatype {
                Some("url") => {
                    url::Url::parse(&s).map_err(|e| ParseError::schema(&vpath, format!("not an absolute URL: {e}")))?;
                    SnakValue::Url(s)
                }
                Some("external-id") => SnakValue::ExternalId(s),
                _ => SnakValue::String(s),
            }
        }
        "quantity" => match value.get("amount").and_then(Value::as_str) {
            Some(a) => SnakValue::Quantity(a.to_owned()),
            None => return Err(ParseError::schema(vpath, "quantity without amount")),
        },
        "time" => match value.get("time").and_then(Value::as_str) {
            Some(t) => SnakValue::Time(t.to_owned()),
            None => return Err(ParseError::schema(vpath, "time without time string")),
        },
        "globecoordinate" => {
            let lat = value.get("latitude").and_then(Value::as_f64);
            let lon = value.get("longitude").and_then(Value::as_f64);
            match (lat, lon) {
                (Some(latitude), Some(longitude)) => SnakValue::Coordinate { latitude, longitude },
                _ => return Err(ParseError::schema(vpath, "coordinate without latitude/longitude")),
            }
        }
        _ => raw(),
    })
}

fn parse_sitelink(v: &Value, site: &str, path: &str) -> Result<Sitelink, ParseError> {
    let obj = v
        .as_object()
        .ok_or_else(|| ParseError::schema(path, "sitelink must be an object"))?;
    if let Some(declared) = obj.get("site").and_then(Value::as_str) {
        if declared != site {
            return Err(ParseError::schema(
                format!("{path}.site"),
                format!("site {declared:?} filed under {site:?}"),
            ));
        }
    }
    let title = obj
        .get("title")
        .and_then(Value::as_str)
        .ok_or_else(|| ParseError::schema(format!("{path}.title"), "missing title"))?
        .to_owned();
    let mut badges = Vec::new();
    match obj.get("badges") {
        None | Some(Value::Null) => {}
        Some(Value::Array(list)) => {
            for (i, b) in list.iter().enumerate() {
                let bpath = format!("{path}.badges.{i}");
                let id = b
                    .as_str()
                    .ok_or_else(|| ParseError::schema(&bpath, "badge must be a string"))?;
                let id = ItemId::new(id).map_err(|e| ParseError::schema(&bpath, e.to_string()))?;
                if badges.contains(&id) {
                    return Err(ParseError::schema(&bpath, format!("duplicate badge {id}")));
                }
                badges.push(id);
            }
        }
        Some(_) => return Err(ParseError::schema(format!("{path}.badges"), "expected a list")),
    }
    Ok(Sitelink {
        site: site.to_owned(),
        title,
        badges,
    })
}

fn snak_json(snak: &Snak) -> Value {
    let property = snak.property.as_str();
    let (datatype, datavalue) = match &snak.value {
        SnakValue::NoValue => return json!({ "snaktype": "novalue", "property": property }),
        SnakValue::SomeValue => return json!({ "snaktype": "somevalue", "property": property }),
        SnakValue::Item(q) => (
            "wikibase-item",
            json!({
                "value": { "entity-type": "item", "numeric-id": q.number(), "id": q.as_str() },
                "type": "wikibase-entityid",
            }),
        ),
        SnakValue::String(s) => ("string", json!({ "value": s, "type": "string" })),
        SnakValue::Url(s) => ("url", json!({ "value": s, "type": "string" })),
        SnakValue::ExternalId(s) => ("external-id", json!({ "value": s, "type": "string" })),
        SnakValue::Quantity(a) => ("quantity", json!({ "value": { "amount": a, "unit": "1" }, "type": "quantity" })),
        SnakValue::Time(t) => (
            "time",
            json!({
                "value": {
                    "time": t, "timezone": 0, "before": 0, "after": 0, "precision": 11,
                    "calendarmodel": "http://www.wikidata.org/entity/Q1985727",
                },
                "type": "time",
            }),
        ),
        SnakValue::Coordinate { latitude, longitude } => (
            "globe-coordinate",
            json!({
                "value": {
                    "latitude": latitude, "longitude": longitude, "altitude": null,
                    "precision": 0.0001, "globe": "http://www.wikidata.org/entity/Q2",
                },
                "type": "globecoordinate",
            }),
        ),
    };
    json!({ "snaktype": "value", "property": property, "datavalue": datavalue, "datatype": datatype })
}

fn snak_map_json(snaks: &[Snak]) -> (Value, Value) {
    let mut map: Map<String, Value> = Map::new();
    let mut order: Vec<String> = Vec::new();
    for snak in snaks {
        let key = snak.property.to_string();
        if !map.contains_key(&key) {
            order.push(key.clone());
        }
        map.entry(key)
            .or_insert_with(|| Value::Array(Vec::new()))
            .as_array_mut()
            .expect("snak lists are arrays")
            .push(snak_json(snak));
    }
    (Value::Object(map), json!(order))
}

/// Writes the entity in the public entity JSON shape read by [`parse_entity`].
pub fn to_entity_json(rev: &EntityRevision) -> Value {
    let terms = |m: &BTreeMap<String, String>| -> Value {
        m.iter()
            .map(|(lang, value)| (lang.clone(), json!({ "language": lang, "value": value })))
            .collect::<Map<String, Value>>()
            .into()
    };
    let aliases: Map<String, Value> = rev
        .aliases
        .iter()
        .map(|(lang, list)| {
            let terms: Vec<Value> = list.iter().map(|a| json!({ "language": lang, "value": a })).collect();
            (lang.clone(), Value::Array(terms))
        })
        .collect();
    let claims: Map<String, Value> = rev
        .statements
        .iter()
        .map(|(p, list)| {
            let statements: Vec<Value> = list
                .iter()
                .map(|s| {
                    let mut obj = json!({
                        "mainsnak": snak_json(&Snak::new(s.property.clone(), s.value.clone())),
                        "type": "statement",
                        "rank": s.rank.as_str(),
                    });
                    if !s.qualifiers.is_empty() {
                        let (map, order) = snak_map_json(&s.qualifiers);
                        obj["qualifiers"] = map;
                        obj["qualifiers-order"] = order;
                    }
                    if !s.references.is_empty() {
                        let refs: Vec<Value> = s
                            .references
                            .iter()
                            .map(|group| {
                                let (map, order) = snak_map_json(group);
                                json!({ "snaks": map, "snaks-order": order })
                            })
                            .collect();
                        obj["references"] = Value::Array(refs);
                    }
                    obj
                })
                .collect();
            (p.to_string(), Value::Array(statements))
        })
        .collect();
    let sitelinks: Map<String, Value> = rev
        .sitelinks
        .iter()
        .map(|(site, link)| {
            (
                site.clone(),
                json!({ "site": site, "title": link.title, "badges": link.badges }),
            )
        })
        .collect();
    json!({
        "type": "item",
        "id": rev.item_id.as_str(),
        "labels": terms(&rev.labels),
        "descriptions": terms(&rev.descriptions),
        "aliases": aliases,
        "claims": claims,
        "sitelinks": sitelinks,
    })
}

pub fn serialize_entity(rev: &EntityRevision) -> String {
    serde_json::to_string(&to_entity_json(rev)).expect("entity serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> PropertyId {
        s.parse().unwrap()
    }
    fn q(s: &str) -> ItemId {
        s.parse().unwrap()
    }

    #[test]
    fn empty_item_parses() {
        let rev = parse_entity(r#"{"id":"Q62","labels":{},"descriptions":{},"aliases":{},"claims":{},"sitelinks":{}}"#)
            .unwrap();
        assert_eq!(rev.item_id.as_str(), "Q62");
        assert!(rev.labels.is_empty() && rev.descriptions.is_empty() && rev.aliases.is_empty());
        assert!(rev.statements.is_empty() && rev.sitelinks.is_empty());
    }

    #[test]
    fn missing_sections_and_unknown_keys() {
        let rev = parse_entity(r#"{"id":"Q1","lastrevid":99,"pageid":3,"modified":"x","type":"item"}"#).unwrap();
        assert_eq!(rev, EntityRevision::empty(q("Q1")));
    }

    #[test]
    fn sister_city_claim() {
        let text = r#"{"id":"Q62","claims":{"P190":[{"mainsnak":{"snaktype":"value","property":"P190",
            "datavalue":{"value":{"entity-type":"item","numeric-id":90,"id":"Q90"},"type":"wikibase-entityid"},
            "datatype":"wikibase-item"},"type":"statement","rank":"normal"}]}}"#;
        let rev = parse_entity(text).unwrap();
        let list = &rev.statements[&p("P190")];
        assert_eq!(list.len(), 1);
        assert_eq!(list[0].value, SnakValue::Item(q("Q90")));
    }

    #[test]
    fn claims_value_not_a_list() {
        let err = parse_entity(r#"{"id":"Q1","claims":{"P1":"notalist"}}"#).unwrap_err();
        assert!(matches!(err, ParseError::SchemaViolation { .. }));
        assert_eq!(err.path(), "claims.P1");
    }

    #[test]
    fn malformed_json() {
        let err = parse_entity("{\"id\": ").unwrap_err();
        assert!(matches!(err, ParseError::MalformedJson { .. }));
        let err = parse_entity_bytes(&[0xff, 0xfe]).unwrap_err();
        assert!(matches!(err, ParseError::MalformedJson { .. }));
    }

    #[test]
    fn bad_identifiers_rejected() {
        for bad in [r#"{"id":"Q0"}"#, r#"{"id":"P5"}"#, r#"{"id":"Q01"}"#, r#"{"id":"Q"}"#] {
            let err = parse_entity(bad).unwrap_err();
            assert_eq!(err.path(), "id", "{bad}");
        }
        let err = parse_entity(r#"{"id":"Q1","claims":{"X1":[]}}"#).unwrap_err();
        assert_eq!(err.path(), "claims.X1");
    }

    #[test]
    fn mainsnak_property_must_match_key() {
        let text = r#"{"id":"Q1","claims":{"P1":[{"mainsnak":{"snaktype":"novalue","property":"P2"}}]}}"#;
        let err = parse_entity(text).unwrap_err();
        assert_eq!(err.path(), "claims.P1.0.mainsnak.property");
    }

    #[test]
    fn url_must_be_absolute() {
        let text = r#"{"id":"Q1","claims":{"P856":[{"mainsnak":{"snaktype":"value","property":"P856",
            "datavalue":{"value":"not a url","type":"string"},"datatype":"url"}}]}}"#;
        assert!(matches!(parse_entity(text), Err(ParseError::SchemaViolation { .. })));
    }

    #[test]
    fn duplicate_aliases_and_badges_rejected() {
        let text = r#"{"id":"Q1","aliases":{"en":[{"value":"a"},{"value":"a"}]}}"#;
        assert_eq!(parse_entity(text).unwrap_err().path(), "aliases.en");
        let text = r#"{"id":"Q1","sitelinks":{"enwiki":{"site":"enwiki","title":"T","badges":["Q17437796","Q17437796"]}}}"#;
        assert_eq!(parse_entity(text).unwrap_err().path(), "sitelinks.enwiki.badges.1");
    }

    #[test]
    fn unknown_datatype_kept_as_raw_string() {
        let text = r#"{"id":"Q1","claims":{"P1476":[{"mainsnak":{"snaktype":"value","property":"P1476",
            "datavalue":{"value":{"text":"Hi","language":"en"},"type":"monolingualtext"},"datatype":"monolingualtext"}}]}}"#;
        let rev = parse_entity(text).unwrap();
        assert_eq!(
            rev.statements[&p("P1476")][0].value,
            SnakValue::String(r#"{"language":"en","text":"Hi"}"#.into())
        );
    }

    fn sample() -> EntityRevision {
        let mut rev = EntityRevision::empty(q("Q62"));
        rev.labels.insert("en".into(), "San Francisco".into());
        rev.aliases.insert("en".into(), vec!["SF".into(), "Frisco".into()]);
        let mut st = Statement::new(p("P190"), SnakValue::Item(q("Q90")));
        st.qualifiers.push(Snak::new(p("P580"), SnakValue::Time("+1996-01-01T00:00:00Z".into())));
        st.references.push(vec![Snak::new(p("P854"), SnakValue::Url("https://example.org/a".into()))]);
        rev.add_statement(st);
        rev.add_statement(Statement::new(p("P190"), SnakValue::Item(q("Q1490"))));
        rev.sitelinks.insert(
            "enwiki".into(),
            Sitelink { site: "enwiki".into(), title: "San Francisco".into(), badges: vec![q("Q17437796")] },
        );
        rev
    }

    #[test]
    fn hash_round_trip_and_metadata_exclusion() {
        let rev = sample();
        let back = parse_entity(&serialize_entity(&rev)).unwrap();
        assert_eq!(back, rev);
        assert_eq!(back.canonical_hash(), rev.canonical_hash());
        let moved = rev.clone().with_revision(12345, 1_450_000_000);
        assert_eq!(moved.canonical_hash(), rev.canonical_hash());
    }

    #[test]
    fn hash_sensitive_to_labels_and_insensitive_to_order() {
        let rev = sample();
        let mut relabeled = rev.clone();
        relabeled.labels.insert("en".into(), "SF".into());
        assert_ne!(relabeled.canonical_hash(), rev.canonical_hash());

        let mut shuffled = rev.clone();
        shuffled.statements.get_mut(&p("P190")).unwrap().reverse();
        shuffled.aliases.get_mut("en").unwrap().reverse();
        assert_eq!(shuffled.canonical_hash(), rev.canonical_hash());
    }

    #[test]
    fn rank_only_change_alters_statement_identity() {
        let a = Statement::new(p("P31"), SnakValue::Item(q("Q5")));
        let mut b = a.clone();
        b.rank = Rank::Preferred;
        assert_ne!(a.canonical_bytes(), b.canonical_bytes());
        assert_eq!(a.value_bytes(), b.value_bytes());
    }
}
