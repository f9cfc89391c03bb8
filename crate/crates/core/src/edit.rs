//! Edit metadata, editor info and edit-kind classification from summaries.

use std::collections::BTreeSet;
use std::net::IpAddr;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserInfo {
    pub name: String,
    #[serde(default)]
    pub is_anonymous: bool,
    #[serde(default)]
    pub is_bot: bool,
    #[serde(default)]
    pub groups: BTreeSet<String>,
    /// Account registration time, UTC seconds.
    #[serde(default)]
    pub registration: Option<i64>,
}

impl UserInfo {
    pub fn anonymous(name: impl Into<String>) -> Self {
        UserInfo {
            name: name.into(),
            is_anonymous: true,
            is_bot: false,
            groups: BTreeSet::new(),
            registration: None,
        }
    }

    pub fn registered(name: impl Into<String>, registration: Option<i64>, groups: &[&str]) -> Self {
        let groups: BTreeSet<String> = groups.iter().map(|g| (*g).to_owned()).collect();
        UserInfo {
            name: name.into(),
            is_anonymous: false,
            is_bot: groups.contains("bot"),
            groups,
            registration,
        }
    }

    /// Anonymous editors have neither groups nor a registration date.
    pub fn is_consistent(&self) -> bool {
        !self.is_anonymous || (self.registration.is_none() && self.groups.is_empty())
    }

    pub fn in_any(&self, set: &BTreeSet<String>) -> bool {
        self.groups.iter().any(|g| set.contains(g))
    }
}

/// IPv4 or IPv6 textual form, the way MediaWiki records logged-out editors.
pub fn is_ip_name(name: &str) -> bool {
    name.parse::<IpAddr>().is_ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditMeta {
    pub rev_id: u64,
    /// 0 when the edit created the item.
    #[serde(default)]
    pub parent_rev_id: u64,
    pub user: UserInfo,
    #[serde(default)]
    pub comment: String,
    /// UTC seconds.
    pub timestamp: i64,
}

impl EditMeta {
    pub fn is_creation(&self) -> bool {
        self.parent_rev_id == 0
    }

    /// `parent_rev_id < rev_id` whenever a parent exists.
    pub fn is_consistent(&self) -> bool {
        self.parent_rev_id == 0 || self.parent_rev_id < self.rev_id
    }

    /// Seconds between account registration and this edit, if known.
    pub fn editor_age(&self) -> Option<i64> {
        if self.user.is_anonymous {
            return None;
        }
        self.user.registration.map(|r| (self.timestamp - r).max(0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditKind {
    Client,
    Merge,
    Revertish,
    Regular,
    Creation,
}

impl EditKind {
    pub const ALL: [EditKind; 5] = [
        EditKind::Client,
        EditKind::Merge,
        EditKind::Revertish,
        EditKind::Regular,
        EditKind::Creation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EditKind::Client => "client",
            EditKind::Merge => "merge",
            EditKind::Revertish => "revertish",
            EditKind::Regular => "regular",
            EditKind::Creation => "creation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentPattern {
    pub kind: EditKind,
    pub pattern: String,
}

pub fn default_comment_patterns() -> Vec<CommentPattern> {
    [
        (EditKind::Client, r"clientsitelink"),
        (EditKind::Merge, r"wbmergeitems"),
        (
            EditKind::Revertish,
            r"Undid revision|Reverted|Restored|wbsetentity.*restore|/\* undo:|/\* restore:",
        ),
        (EditKind::Creation, r"wbeditentity-create"),
    ]
    .into_iter()
    .map(|(kind, pattern)| CommentPattern { kind, pattern: pattern.to_owned() })
    .collect()
}

/// Ordered regex table over MediaWiki auto-summaries; first match wins.
#[derive(Debug, Clone)]
pub struct CommentClassifier {
    table: Vec<(EditKind, Regex)>,
}

impl CommentClassifier {
    pub fn new(patterns: &[CommentPattern]) -> Result<Self, regex::Error> {
        let table = patterns
            .iter()
            .map(|p| Ok((p.kind, Regex::new(&p.pattern)?)))
            .collect::<Result<_, regex::Error>>()?;
        Ok(CommentClassifier { table })
    }

    /// Falls back to `Creation` for parentless edits and `Regular` otherwise.
    pub fn classify(&self, comment: &str, meta: &EditMeta) -> EditKind {
        self.table
            .iter()
            .find(|(_, re)| re.is_match(comment))
            .map(|(kind, _)| *kind)
            .unwrap_or(if meta.is_creation() { EditKind::Creation } else { EditKind::Regular })
    }
}

impl Default for CommentClassifier {
    fn default() -> Self {
        CommentClassifier::new(&default_comment_patterns()).expect("default patterns compile")
    }
}

pub fn classify_comment(comment: &str, meta: &EditMeta) -> EditKind {
    CommentClassifier::default().classify(comment, meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(parent: u64) -> EditMeta {
        EditMeta {
            rev_id: 10,
            parent_rev_id: parent,
            user: UserInfo::anonymous("192.0.2.7"),
            comment: String::new(),
            timestamp: 0,
        }
    }

    #[test]
    fn summary_table() {
        let c = CommentClassifier::default();
        let m = meta(9);
        assert_eq!(c.classify("/* clientsitelink-update:0| */ moved page", &m), EditKind::Client);
        assert_eq!(c.classify("/* wbmergeitems-to:0| */ Q5 merged", &m), EditKind::Merge);
        assert_eq!(c.classify("added label", &m), EditKind::Regular);
        assert_eq!(c.classify("/* undo:0||123|Foo */", &m), EditKind::Revertish);
        assert_eq!(
            c.classify("Reverted edits by [[Special:Contributions/1.2.3.4|1.2.3.4]]", &m),
            EditKind::Revertish
        );
        assert_eq!(c.classify("/* wbeditentity-create:2|en */ x", &m), EditKind::Creation);
        assert_eq!(c.classify("", &meta(0)), EditKind::Creation);
    }

    #[test]
    fn first_match_wins() {
        let c = CommentClassifier::default();
        assert_eq!(
            c.classify("/* clientsitelink-remove:1| */ Reverted", &meta(1)),
            EditKind::Client
        );
    }

    #[test]
    fn ip_names() {
        assert!(is_ip_name("192.0.2.7"));
        assert!(is_ip_name("2001:db8::1"));
        assert!(!is_ip_name("Example"));
        assert!(!is_ip_name("1.2.3"));
    }

    #[test]
    fn editor_age() {
        let mut m = meta(1);
        assert_eq!(m.editor_age(), None);
        m.user = UserInfo::registered("A", Some(1_388_534_400), &[]);
        m.timestamp = 1_420_070_400;
        assert_eq!(m.editor_age(), Some(31_536_000));
    }
}
