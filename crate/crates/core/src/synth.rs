//! Synthetic item histories with planted vandalism, for desk-scale runs.
//!
//! Every planted positive is followed by a revert that restores its parent
//! content, so the revert-based labeler recovers it. Good edits only ever
//! add novel content, which keeps accidental identity reverts out.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LabelClass;
use crate::edit::{EditMeta, UserInfo};
use crate::entity::{serialize_entity, EntityRevision, ItemId, PropertyId, Sitelink, Snak, SnakValue, Statement};
use crate::ingestion::{write_fixture, RevisionEnvelope, MANIFEST_FILE, USERS_FILE};

pub const SYNTH_VERSION: &str = "vs-synth-1";

const YEAR_START: i64 = 1_420_070_400;
const DAY: i64 = 86_400;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("writing fixtures: {0}")]
    Io(#[from] std::io::Error),
}

/// Where the class signal lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SignalPlacement {
    /// Positives come mostly from anonymous and brand-new accounts.
    #[default]
    User,
    /// Positives share the editor mix of non-trusted good edits.
    Content,
}

impl FromStr for SignalPlacement {
    type Err = SynthError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "user" => Ok(SignalPlacement::User),
            "content" => Ok(SignalPlacement::Content),
            o => Err(SynthError::InvalidSpec(format!("signal placement {o:?} (user|content)"))),
        }
    }
}

impl fmt::Display for SignalPlacement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignalPlacement::User => "user",
            SignalPlacement::Content => "content",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub version: String,
    /// Non-bot revisions to emit.
    pub n: usize,
    pub prevalence: f64,
    pub signal: SignalPlacement,
    pub seed: u64,
    /// Extra bot revisions, as a fraction of `n`.
    pub bot_fraction: f64,
}

impl SynthSpec {
    pub fn new(n: usize, prevalence: f64, seed: u64) -> Self {
        SynthSpec {
            version: SYNTH_VERSION.to_owned(),
            n,
            prevalence,
            signal: SignalPlacement::User,
            seed,
            bot_fraction: 0.03,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return Err(SynthError::InvalidSpec(format!("prevalence {} must lie in (0, 1)", self.prevalence)));
        }
        if !(0.0..1.0).contains(&self.bot_fraction) {
            return Err(SynthError::InvalidSpec("bot fraction must lie in [0, 1)".into()));
        }
        if self.n < 20 {
            return Err(SynthError::InvalidSpec("n must be at least 20".into()));
        }
        if self.version != SYNTH_VERSION {
            return Err(SynthError::InvalidSpec(format!("generator version {}", self.version)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub rev_id: u64,
    pub class: LabelClass,
    pub pattern: String,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub spec: SynthSpec,
    /// Sorted by rev_id, which is also timestamp order.
    pub envelopes: Vec<RevisionEnvelope>,
    pub users: BTreeMap<String, UserInfo>,
    pub truth: Vec<TruthRecord>,
}

pub const TRUTH_FILE: &str = "truth.jsonl";
pub const SPEC_FILE: &str = "synth.json";

impl SynthOutput {
    pub fn write_fixture_dir(&self, dir: &Path) -> Result<(), SynthError> {
        std::fs::create_dir_all(dir)?;
        let mut manifest = String::new();
        for env in &self.envelopes {
            write_fixture(dir, env)?;
            manifest.push_str(&format!("{}\n", env.meta.rev_id));
        }
        std::fs::write(dir.join(MANIFEST_FILE), manifest)?;
        std::fs::write(dir.join(USERS_FILE), serde_json::to_vec_pretty(&self.users).map_err(std::io::Error::from)?)?;
        let mut truth = String::new();
        for t in &self.truth {
            truth.push_str(&serde_json::to_string(t).map_err(std::io::Error::from)?);
            truth.push('\n');
        }
        std::fs::write(dir.join(TRUTH_FILE), truth)?;
        std::fs::write(dir.join(SPEC_FILE), serde_json::to_vec_pretty(&self.spec).map_err(std::io::Error::from)?)?;
        Ok(())
    }

    pub fn planted_positives(&self) -> usize {
        self.truth.iter().filter(|t| t.class != LabelClass::Good).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Editor {
    Trusted,
    Older,
    /// Account registered shortly before the edit; `young` narrows the age.
    Fresh { young: bool },
    Anon,
    Bot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Plan {
    Good(Editor),
    Client,
    Merge,
    Bot,
    Vandal(Editor),
    GoodFaithBad(Editor),
    RevertedTrusted,
    RevertedClient,
    RevertedMerge,
}

impl Plan {
    fn reverted(self) -> bool {
        matches!(
            self,
            Plan::Vandal(_) | Plan::GoodFaithBad(_) | Plan::RevertedTrusted | Plan::RevertedClient | Plan::RevertedMerge
        )
    }
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, weighted: &[(T, f64)]) -> T {
    let total: f64 = weighted.iter().map(|(_, w)| w).sum();
    let mut x = rng.random_range(0.0..total);
    for (v, w) in weighted {
        if x < *w {
            return *v;
        }
        x -= w;
    }
    weighted.last().expect("nonempty").0
}

fn q(n: u64) -> ItemId {
    ItemId::new(format!("Q{n}")).expect("valid item id")
}

fn p(n: u32) -> PropertyId {
    PropertyId::new(format!("P{n}")).expect("valid property id")
}

const LANGS: &[&str] = &["en", "de", "fr", "es", "it", "nl", "ru", "ja", "pl", "pt", "sv", "zh", "fi", "cs"];
const SITES: &[&str] = &["enwiki", "dewiki", "frwiki", "eswiki", "itwiki", "nlwiki", "plwiki", "commonswiki", "ruwiki", "jawiki"];
const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ran", "te", "vo", "sel", "dur", "an", "bri", "co", "fen", "ga", "hol", "is", "jor", "ku", "lem",
    "mor", "ne", "ol", "pa", "quin", "ros", "sta", "tor", "ul", "ver", "wen", "yl", "zar",
];
const CLASSES: &[u64] = &[515, 11424, 5398426, 7889, 4022, 8502, 482994, 43229, 3918, 16521];
const COUNTRIES: &[u64] = &[30, 183, 142, 145, 38, 29, 17, 159, 148, 155, 16, 408];
const OCCUPATIONS: &[u64] = &[82955, 36180, 33999, 937857, 1028181, 169470, 40348, 39631, 901, 483501];
const TEAMS: &[u64] = &[9616, 1130849, 7156, 8682, 18656, 15789, 1422];
const LANGUAGE_ITEMS: &[u64] = &[1860, 188, 150, 1321, 652, 7737, 5287, 7850, 5146, 13955, 7411, 809];
const JUNK: &[&str] = &["asdfgh", "hahaha", "LOL", "xxxxx", "test123", "qwerty", "poop", "yoyo", "kkkkk", "aaaa", "BLAH", "hi mom"];
const TRUSTED_GROUPS: &[&str] = &["sysop", "rollbacker", "property-creator", "translationadmin", "ipblock-exempt", "flood"];

const HUMAN: u64 = 5;
const MALE: u64 = 6581097;
const FEMALE: u64 = 6581072;

struct Gen {
    rng: ChaCha8Rng,
    unique: u64,
    trusted: Vec<UserInfo>,
    older: Vec<UserInfo>,
    bots: Vec<UserInfo>,
    users: BTreeMap<String, UserInfo>,
    fresh_count: u64,
}

impl Gen {
    fn word(&mut self) -> String {
        let k = self.rng.random_range(2..4);
        let mut w: String = (0..k).map(|_| *SYLLABLES.choose(&mut self.rng).expect("nonempty")).collect();
        if let Some(first) = w.get_mut(0..1) {
            first.make_ascii_uppercase();
        }
        w
    }

    fn next_unique(&mut self) -> u64 {
        self.unique += 1;
        self.unique
    }

    fn fresh_item(&mut self) -> ItemId {
        let u = self.next_unique();
        q(20_000_000 + u)
    }

    fn name(&mut self) -> String {
        format!("{} {}", self.word(), self.word())
    }

    fn anon(&mut self) -> UserInfo {
        if self.rng.random_bool(0.15) {
            let a: u16 = self.rng.random();
            let b: u16 = self.rng.random();
            UserInfo::anonymous(format!("2001:db8:{a:x}::{b:x}"))
        } else {
            let o: [u8; 4] = [self.rng.random_range(1..224), self.rng.random(), self.rng.random(), self.rng.random_range(1..255)];
            UserInfo::anonymous(format!("{}.{}.{}.{}", o[0], o[1], o[2], o[3]))
        }
    }

    fn user(&mut self, editor: Editor, ts: i64) -> UserInfo {
        match editor {
            Editor::Trusted => self.trusted.choose(&mut self.rng).expect("pool").clone(),
            Editor::Older => self.older.choose(&mut self.rng).expect("pool").clone(),
            Editor::Bot => self.bots.choose(&mut self.rng).expect("pool").clone(),
            Editor::Anon => self.anon(),
            Editor::Fresh { young } => {
                let (lo, hi): (f64, f64) = if young { (60.0, 2.0 * DAY as f64) } else { (3_600.0, 45.0 * DAY as f64) };
                let age = self.rng.random_range(lo.ln()..hi.ln()).exp() as i64;
                self.fresh_count += 1;
                let user = UserInfo::registered(format!("Newcomer{}", self.fresh_count), Some(ts - age), &[]);
                self.users.insert(user.name.clone(), user.clone());
                user
            }
        }
    }

    fn reference(&mut self) -> Vec<Snak> {
        if self.rng.random_bool(0.5) {
            vec![Snak::new(p(143), SnakValue::Item(q(328)))]
        } else {
            let n = self.next_unique();
            vec![Snak::new(p(854), SnakValue::Url(format!("https://source{n}.example.org/page")))]
        }
    }

    fn statement(&mut self, prop: u32, value: SnakValue) -> Statement {
        let mut s = Statement::new(p(prop), value);
        if self.rng.random_bool(0.6) {
            s.references.push(self.reference());
        }
        s
    }

    fn date(&mut self) -> String {
        let y = self.rng.random_range(1850..2000);
        let m = self.rng.random_range(1..13);
        let d = self.rng.random_range(1..29);
        format!("+{y}-{m:02}-{d:02}T00:00:00Z")
    }

    fn creation(&mut self, item: ItemId) -> EntityRevision {
        let mut e = EntityRevision::empty(item);
        let name = self.name();
        let human = self.rng.random_bool(0.4);
        e.labels.insert("en".into(), name.clone());
        let extra = self.rng.random_range(0..3);
        for lang in LANGS[1..].choose_multiple(&mut self.rng, extra) {
            e.labels.insert((*lang).into(), name.clone());
        }
        let desc = if human { "person".to_owned() } else { format!("{} thing", self.word().to_lowercase()) };
        e.descriptions.insert("en".into(), desc);
        if human {
            e.add_statement(self.statement(31, SnakValue::Item(q(HUMAN))));
            let g = if self.rng.random_bool(0.5) { MALE } else { FEMALE };
            e.add_statement(self.statement(21, SnakValue::Item(q(g))));
            let c = *COUNTRIES.choose(&mut self.rng).expect("nonempty");
            e.add_statement(self.statement(27, SnakValue::Item(q(c))));
            if self.rng.random_bool(0.6) {
                let d = self.date();
                e.add_statement(self.statement(569, SnakValue::Time(d)));
            }
        } else {
            let c = *CLASSES.choose(&mut self.rng).expect("nonempty");
            e.add_statement(self.statement(31, SnakValue::Item(q(c))));
            let c = *COUNTRIES.choose(&mut self.rng).expect("nonempty");
            e.add_statement(self.statement(17, SnakValue::Item(q(c))));
        }
        let linked = self.rng.random_range(1..4);
        for site in SITES.choose_multiple(&mut self.rng, linked) {
            e.sitelinks.insert((*site).into(), Sitelink { site: (*site).into(), title: name.clone(), badges: vec![] });
        }
        e
    }

    fn is_human(e: &EntityRevision) -> bool {
        e.has_claim(&p(31), &q(HUMAN))
    }

    /// Adds something new; returns a pattern name and an edit summary.
    /// `casual` editors lean toward small corrections over additions.
    fn good_op(&mut self, e: &mut EntityRevision, casual: bool) -> (&'static str, String) {
        let human = Self::is_human(e);
        let fix = if casual { 4.0 } else { 1.0 };
        let op = pick(
            &mut self.rng,
            &[
                (0, 14.0),
                (1, 10.0),
                (2, 8.0),
                (3, 22.0),
                (4, 10.0),
                (5, 6.0),
                (6, 6.0),
                (7, 8.0),
                (8, 6.0),
                (9, 3.0 * fix),
                (10, 3.0),
                (11, 3.0),
                (12, 1.0),
                (13, 6.0 * fix),
                (14, 8.0 * fix),
            ],
        );
        let uniq = self.next_unique();
        match op {
            0 => {
                let lang = LANGS.iter().find(|l| !e.labels.contains_key(**l)).copied();
                match lang {
                    Some(l) => {
                        let w = self.name();
                        e.labels.insert(l.into(), w.clone());
                        ("add-label", format!("/* wbsetlabel-add:1|{l} */ {w}"))
                    }
                    None => self.alias(e, uniq),
                }
            }
            1 => {
                let lang = LANGS.iter().find(|l| !e.descriptions.contains_key(**l)).copied();
                match lang {
                    Some(l) => {
                        let d = format!("{} {}", self.word().to_lowercase(), self.word().to_lowercase());
                        e.descriptions.insert(l.into(), d.clone());
                        ("add-description", format!("/* wbsetdescription-add:1|{l} */ {d}"))
                    }
                    None => self.alias(e, uniq),
                }
            }
            2 => self.alias(e, uniq),
            3 => {
                let (prop, val) = if human {
                    match self.rng.random_range(0..3) {
                        0 => (106, *OCCUPATIONS.choose(&mut self.rng).expect("nonempty")),
                        1 => (27, *COUNTRIES.choose(&mut self.rng).expect("nonempty")),
                        _ => (166, 10_000_000 + uniq),
                    }
                } else {
                    match self.rng.random_range(0..3) {
                        0 => (361, 10_000_000 + uniq),
                        1 => (131, 10_000_000 + uniq),
                        _ => (279, *CLASSES.choose(&mut self.rng).expect("nonempty")),
                    }
                };
                let mut s = self.statement(prop, SnakValue::Item(q(val)));
                if !s.references.iter().any(|r| r.iter().any(|snak| matches!(&snak.value, SnakValue::Url(_)))) {
                    s.references.push(vec![Snak::new(p(813), SnakValue::Time(format!("+2015-01-{:02}T00:00:00Z", uniq % 28 + 1)))]);
                }
                e.add_statement(s);
                ("add-statement", format!("/* wbcreateclaim-create:1| */ [[Property:P{prop}]]: [[Q{val}]]"))
            }
            4 => {
                let prop = *[214u32, 227, 213, 646, 345, 2002].choose(&mut self.rng).expect("nonempty");
                e.add_statement(Statement::new(p(prop), SnakValue::ExternalId(format!("{}{uniq}", self.rng.random_range(100..999)))));
                ("add-identifier", format!("/* wbcreateclaim-create:1| */ [[Property:P{prop}]]"))
            }
            5 => {
                let site = SITES.iter().find(|s| !e.sitelinks.contains_key(**s)).copied();
                match site {
                    Some(s) => {
                        let title = format!("{} ({uniq})", e.labels.get("en").cloned().unwrap_or_default());
                        e.sitelinks.insert(s.into(), Sitelink { site: s.into(), title, badges: vec![] });
                        ("add-sitelink", format!("/* wbsetsitelink-add:1|{s} */"))
                    }
                    None => self.alias(e, uniq),
                }
            }
            6 => match Self::some_statement(e, &mut self.rng) {
                Some(s) => {
                    s.qualifiers.push(Snak::new(p(580), SnakValue::Time(format!("+{}-01-01T00:00:00Z", 1900 + uniq % 115))));
                    ("add-qualifier", "/* wbsetqualifier-add:1| */".to_owned())
                }
                None => self.alias(e, uniq),
            },
            7 => {
                let r = vec![Snak::new(p(854), SnakValue::Url(format!("https://ref{uniq}.example.net/")))];
                match Self::some_statement(e, &mut self.rng) {
                    Some(s) => {
                        s.references.push(r);
                        ("add-reference", "/* wbsetreference-add:2| */".to_owned())
                    }
                    None => self.alias(e, uniq),
                }
            }
            8 => {
                let lang = e.descriptions.keys().find(|l| *l != "en").cloned();
                match lang {
                    Some(l) => {
                        let d = format!("{} ({uniq})", self.word().to_lowercase());
                        e.descriptions.insert(l.clone(), d);
                        ("edit-description", format!("/* wbsetdescription-set:1|{l} */"))
                    }
                    None => self.alias(e, uniq),
                }
            }
            9 => {
                let l = format!("{} {}", e.labels.get("en").cloned().unwrap_or_default(), uniq % 97);
                e.labels.insert("en".into(), l.clone());
                ("fix-en-label", format!("/* wbsetlabel-set:1|en */ {l}"))
            }
            10 if human && !e.has_property(&p(18)) => {
                e.add_statement(self.statement(18, SnakValue::String(format!("Portrait {uniq}.jpg"))));
                ("add-image", "/* wbcreateclaim-create:1| */ [[Property:P18]]".to_owned())
            }
            11 if human && !e.has_property(&p(569)) => {
                let d = self.date();
                e.add_statement(self.statement(569, SnakValue::Time(d)));
                ("add-dob", "/* wbcreateclaim-create:1| */ [[Property:P569]]".to_owned())
            }
            12 => match e.sitelinks.values_mut().find(|s| s.badges.is_empty()) {
                Some(s) => {
                    s.badges.push(q(17437798));
                    ("add-badge", "/* wbsetsitelink-set-badges:1| */".to_owned())
                }
                None => self.alias(e, uniq),
            },
            13 => {
                let lang = e.labels.keys().find(|l| *l != "en").cloned();
                match lang {
                    Some(l) => {
                        let w = format!("{} {}", self.word(), uniq % 89);
                        e.labels.insert(l.clone(), w.clone());
                        ("fix-label", format!("/* wbsetlabel-set:1|{l} */ {w}"))
                    }
                    None => self.alias(e, uniq),
                }
            }
            14 => {
                let prop = *[106u32, 131, 17, 279, 361, 166].iter().find(|id| e.has_property(&p(**id))).unwrap_or(&0);
                if prop == 0 {
                    return self.alias(e, uniq);
                }
                let list = e.statements.get_mut(&p(prop)).expect("present");
                list[0].value = SnakValue::Item(q(40_000_000 + uniq));
                ("correct-statement", format!("/* wbsetclaim-update:2||1 */ [[Property:P{prop}]]"))
            }
            _ => self.alias(e, uniq),
        }
    }

    fn alias(&mut self, e: &mut EntityRevision, uniq: u64) -> (&'static str, String) {
        let lang = *LANGS[..4].choose(&mut self.rng).expect("nonempty");
        let a = format!("{} {uniq}", self.word());
        e.aliases.entry(lang.into()).or_default().push(a.clone());
        ("add-alias", format!("/* wbsetaliases-add:1|{lang} */ {a}"))
    }

    fn some_statement<'e>(e: &'e mut EntityRevision, rng: &mut ChaCha8Rng) -> Option<&'e mut Statement> {
        let total = e.statement_count();
        if total == 0 {
            return None;
        }
        let k = rng.random_range(0..total);
        e.statements.values_mut().flat_map(|v| v.iter_mut()).nth(k)
    }

    fn set_single(e: &mut EntityRevision, prop: u32, value: SnakValue) {
        let list = e.statements.entry(p(prop)).or_default();
        match list.first_mut() {
            Some(s) => {
                s.value = value;
                s.references.clear();
            }
            None => list.push(Statement::new(p(prop), value)),
        }
    }

    fn junk(&mut self) -> String {
        let j = *JUNK.choose(&mut self.rng).expect("nonempty");
        format!("{j} {}", self.next_unique())
    }

    /// Damaging change that always introduces novel content.
    fn vandal_op(&mut self, e: &mut EntityRevision) -> (&'static str, String) {
        let human = Self::is_human(e);
        let op = pick(
            &mut self.rng,
            &[(0, 18.0), (1, 12.0), (2, 12.0), (3, 10.0), (4, 6.0), (5, 6.0), (6, 8.0), (7, 10.0), (8, 6.0), (9, 6.0), (10, 6.0)],
        );
        match op {
            1 => {
                let k = self.rng.random_range(3..9);
                for _ in 0..k {
                    let prop = *[31u32, 279, 361, 106].choose(&mut self.rng).expect("nonempty");
                    let v = 30_000_000 + self.next_unique();
                    e.add_statement(Statement::new(p(prop), SnakValue::Item(q(v))));
                }
                ("qid-spam", "/* wbeditentity-update:0| */".to_owned())
            }
            2 if human => {
                let now = e.statements.get(&p(21)).and_then(|l| l.first()).and_then(|s| s.value.as_item()).map(ItemId::number);
                let flipped = if now == Some(MALE) { FEMALE } else { MALE };
                Self::set_single(e, 21, SnakValue::Item(q(flipped)));
                let j = self.junk();
                e.aliases.entry("en".into()).or_default().push(j);
                ("gender-flip", "/* wbsetclaim-update:2||1 */ [[Property:P21]]".to_owned())
            }
            3 => {
                let k = self.rng.random_range(1..4);
                for _ in 0..k {
                    let n = self.next_unique();
                    e.add_statement(Statement::new(p(856), SnakValue::Url(format!("http://cheap-deals{n}.example.com/buy"))));
                }
                ("url-spam", "/* wbcreateclaim-create:1| */ [[Property:P856]]".to_owned())
            }
            4 if human => {
                let d = format!("+{}-01-01T00:00:00Z", 2010 + self.next_unique() % 400);
                Self::set_single(e, 569, SnakValue::Time(d));
                ("dob-change", "/* wbsetclaim-update:2||1 */ [[Property:P569]]".to_owned())
            }
            5 => {
                let f = format!("Funny {}.jpg", self.next_unique());
                Self::set_single(e, 18, SnakValue::String(f));
                ("image-change", "/* wbsetclaim-update:2||1 */ [[Property:P18]]".to_owned())
            }
            6 => {
                let k = self.rng.random_range(2..5);
                let picked: Vec<u64> = LANGUAGE_ITEMS.choose_multiple(&mut self.rng, k).copied().collect();
                for l in picked {
                    let prop = *[31u32, 1412, 407].choose(&mut self.rng).expect("nonempty");
                    e.add_statement(Statement::new(p(prop), SnakValue::Item(q(l))));
                }
                let j = self.junk();
                e.aliases.entry("en".into()).or_default().push(j);
                ("language-names", "/* wbeditentity-update:0| */".to_owned())
            }
            7 => {
                let j = self.junk();
                e.descriptions.insert("en".into(), j);
                ("description-junk", "/* wbsetdescription-set:1|en */".to_owned())
            }
            8 => {
                if let Some(k) = e.sitelinks.keys().next().cloned() {
                    e.sitelinks.remove(&k);
                }
                let j = self.junk();
                e.aliases.entry("en".into()).or_default().push(j);
                ("sitelink-removal", "/* wbsetsitelink-remove:1| */".to_owned())
            }
            9 => {
                let (prop, pool) = if human && self.rng.random_bool(0.5) { (54, TEAMS) } else { (27, COUNTRIES) };
                let v = *pool.choose(&mut self.rng).expect("nonempty");
                Self::set_single(e, prop, SnakValue::Item(q(v)));
                let j = self.junk();
                e.descriptions.insert("en".into(), j);
                ("claim-change", format!("/* wbsetclaim-update:2||1 */ [[Property:P{prop}]]"))
            }
            10 => {
                let k = self.rng.random_range(1..4);
                for _ in 0..k {
                    let key = e.statements.keys().nth(self.rng.random_range(0..e.statements.len().max(1)));
                    if let Some(key) = key.cloned() {
                        e.statements.remove(&key);
                    }
                }
                let j = self.junk();
                e.labels.insert("en".into(), j);
                ("statement-blanking", "/* wbeditentity-update:0| */".to_owned())
            }
            _ => {
                let j = self.junk();
                e.labels.insert("en".into(), j.clone());
                if self.rng.random_bool(0.3) {
                    e.descriptions.remove("en");
                }
                ("label-junk", format!("/* wbsetlabel-set:1|en */ {j}"))
            }
        }
    }

    fn client_op(&mut self, e: &mut EntityRevision) -> (&'static str, String) {
        let uniq = self.next_unique();
        match e.sitelinks.values_mut().next() {
            Some(s) => {
                let old = s.title.clone();
                s.title = format!("{old} ({uniq})");
                let site = s.site.clone();
                ("client-move", format!("/* clientsitelink-update:0|{site}|{site}:{old}|{site}:{} */", s.title))
            }
            None => {
                let title = format!("{} {uniq}", self.word());
                e.sitelinks.insert("enwiki".into(), Sitelink { site: "enwiki".into(), title, badges: vec![] });
                ("client-add", "/* clientsitelink-update:0|enwiki */".to_owned())
            }
        }
    }

    fn merge_op(&mut self, e: &mut EntityRevision) -> (&'static str, String) {
        let from = self.fresh_item();
        let uniq = self.next_unique();
        let site = SITES.iter().find(|s| !e.sitelinks.contains_key(**s)).copied().unwrap_or("svwiki");
        let title = format!("{} {uniq}", self.word());
        e.sitelinks.insert(site.into(), Sitelink { site: site.into(), title: title.clone(), badges: vec![] });
        e.aliases.entry("en".into()).or_default().push(title);
        (
            "merge",
            format!("/* wbmergeitems-from:0||{from} */"),
        )
    }
}

struct Event {
    plan: Plan,
    ts: i64,
}

struct Draft {
    item: usize,
    seq: usize,
    ts: i64,
    user: UserInfo,
    comment: String,
    content: EntityRevision,
    parent: Option<EntityRevision>,
    class: Option<(LabelClass, String)>,
}

fn user_pool(rng: &mut ChaCha8Rng) -> (Vec<UserInfo>, Vec<UserInfo>, Vec<UserInfo>) {
    let reg = |rng: &mut ChaCha8Rng| Some(rng.random_range(1_104_537_600..1_404_172_800i64));
    let trusted = (0..80)
        .map(|i| {
            let k = rng.random_range(1..3);
            let mut groups: Vec<&str> = TRUSTED_GROUPS.choose_multiple(rng, k).copied().collect();
            if i % 9 == 0 {
                groups.push("bureaucrat");
            }
            if i % 4 == 0 {
                groups.push("autopatrolled");
            }
            UserInfo::registered(format!("Patroller{i}"), reg(rng), &groups)
        })
        .collect();
    let older = (0..600)
        .map(|i| {
            let groups: &[&str] = if i % 5 == 0 { &["autopatrolled"] } else { &[] };
            UserInfo::registered(format!("Editor{i}"), reg(rng), groups)
        })
        .collect();
    let bots = (0..6).map(|i| UserInfo::registered(format!("ImportBot{i}"), reg(rng), &["bot"])).collect();
    (trusted, older, bots)
}

fn good_editor(rng: &mut ChaCha8Rng) -> Editor {
    pick(rng, &[(Editor::Trusted, 0.75), (Editor::Older, 0.17), (Editor::Anon, 0.05), (Editor::Fresh { young: false }, 0.03)])
}

fn positive_editor(rng: &mut ChaCha8Rng, signal: SignalPlacement) -> Editor {
    match signal {
        SignalPlacement::User => {
            pick(rng, &[(Editor::Anon, 0.55), (Editor::Fresh { young: true }, 0.30), (Editor::Older, 0.15)])
        }
        SignalPlacement::Content => {
            pick(rng, &[(Editor::Older, 0.68), (Editor::Anon, 0.20), (Editor::Fresh { young: false }, 0.12)])
        }
    }
}

/// Builds the histories. Deterministic for a given spec.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let n_items = (n / 12).max(1);
    let positives = Binomial::new(n as u64, spec.prevalence)
        .map_err(|e| SynthError::InvalidSpec(e.to_string()))?
        .sample(&mut rng) as usize;
    let noise = (n / 400).max(1);
    let used = n_items + 2 * positives + 2 * noise;
    if used > n {
        return Err(SynthError::InvalidSpec(format!("n = {n} is too small for prevalence {}", spec.prevalence)));
    }
    let free = n - used;
    let n_bots = (n as f64 * spec.bot_fraction).round() as usize;

    let mut plans = Vec::with_capacity(free + positives + noise + n_bots);
    for _ in 0..positives {
        let editor = positive_editor(&mut rng, spec.signal);
        plans.push(if rng.random_bool(0.22) { Plan::GoodFaithBad(editor) } else { Plan::Vandal(editor) });
    }
    for k in 0..noise {
        plans.push(match k % 10 {
            0..=4 => Plan::RevertedTrusted,
            5..=7 => Plan::RevertedClient,
            _ => Plan::RevertedMerge,
        });
    }
    for _ in 0..free {
        plans.push(pick(
            &mut rng,
            &[(Plan::Client, 0.02), (Plan::Merge, 0.016), (Plan::Good(Editor::Trusted), 0.964)],
        ));
    }
    for p in plans.iter_mut() {
        if *p == Plan::Good(Editor::Trusted) {
            *p = Plan::Good(good_editor(&mut rng));
        }
    }
    plans.extend(std::iter::repeat_n(Plan::Bot, n_bots));

    let mut per_item: Vec<Vec<Plan>> = vec![Vec::new(); n_items];
    for plan in plans {
        per_item[rng.random_range(0..n_items)].push(plan);
    }

    let (trusted, older, bots) = user_pool(&mut rng);
    let mut users: BTreeMap<String, UserInfo> = BTreeMap::new();
    for u in trusted.iter().chain(&older).chain(&bots) {
        users.insert(u.name.clone(), u.clone());
    }
    let mut g = Gen { rng, unique: 0, trusted, older, bots, users, fresh_count: 0 };

    let mut drafts: Vec<Draft> = Vec::with_capacity(n + n_bots);
    for (idx, mut events) in per_item.into_iter().enumerate() {
        events.shuffle(&mut g.rng);
        let start = YEAR_START + g.rng.random_range(0..300 * DAY);
        let mut times: Vec<i64> = (0..events.len()).map(|_| g.rng.random_range(start + 60..YEAR_START + 365 * DAY)).collect();
        times.sort_unstable();
        let events: Vec<Event> = events.into_iter().zip(times).map(|(plan, ts)| Event { plan, ts }).collect();

        let item = q(1_000_000 + idx as u64);
        let creator = pick(
            &mut g.rng,
            &[(Editor::Trusted, 0.5), (Editor::Older, 0.35), (Editor::Fresh { young: false }, 0.08), (Editor::Anon, 0.07)],
        );
        let mut state = g.creation(item);
        let user = g.user(creator, start);
        let mut seq = 0;
        drafts.push(Draft {
            item: idx,
            seq,
            ts: start,
            user,
            comment: format!("/* wbeditentity-create:0| */ {}", state.labels["en"]),
            content: state.clone(),
            parent: None,
            class: Some((LabelClass::Good, "create".into())),
        });

        for (k, ev) in events.iter().enumerate() {
            let before = state.clone();
            let mut after = state.clone();
            let (editor, pattern, comment, class) = match ev.plan {
                Plan::Good(ed) => {
                    let (pat, c) = g.good_op(&mut after, !matches!(ed, Editor::Trusted));
                    (ed, pat, c, LabelClass::Good)
                }
                Plan::Bot => {
                    let (pat, c) = g.good_op(&mut after, false);
                    (Editor::Bot, pat, c, LabelClass::Good)
                }
                Plan::Client | Plan::RevertedClient => {
                    let (pat, c) = g.client_op(&mut after);
                    (if g.rng.random_bool(0.7) { Editor::Older } else { Editor::Anon }, pat, c, LabelClass::Good)
                }
                Plan::Merge | Plan::RevertedMerge => {
                    let (pat, c) = g.merge_op(&mut after);
                    (if g.rng.random_bool(0.6) { Editor::Trusted } else { Editor::Older }, pat, c, LabelClass::Good)
                }
                Plan::RevertedTrusted => {
                    let (pat, c) = g.good_op(&mut after, false);
                    (Editor::Trusted, pat, c, LabelClass::Good)
                }
                Plan::Vandal(ed) => {
                    let (pat, c) = g.vandal_op(&mut after);
                    (ed, pat, c, LabelClass::Vandalism)
                }
                Plan::GoodFaithBad(ed) => {
                    let (pat, c) = g.good_op(&mut after, true);
                    (ed, pat, c, LabelClass::GoodfaithDamaging)
                }
            };
            seq += 1;
            let user = g.user(editor, ev.ts);
            let bot = editor == Editor::Bot;
            drafts.push(Draft {
                item: idx,
                seq,
                ts: ev.ts,
                user: user.clone(),
                comment,
                content: after.clone(),
                parent: Some(before.clone()),
                class: (!bot).then(|| (class, pattern.to_owned())),
            });
            state = after;
            if ev.plan.reverted() {
                let next_ts = events.get(k + 1).map_or(ev.ts + 7 * DAY, |e| e.ts);
                let room = (next_ts - ev.ts).max(2);
                let ts = ev.ts + g.rng.random_range(1..room.min(6 * 3_600).max(2));
                let (rev_editor, comment) = if g.rng.random_bool(0.8) {
                    (Editor::Trusted, format!("Reverted edits by [[Special:Contributions/{0}|{0}]] ([[User talk:{0}|talk]])", user.name))
                } else {
                    (Editor::Older, format!("/* undo:0||{{rev}}|{} */", user.name))
                };
                let reverter = g.user(rev_editor, ts);
                seq += 1;
                drafts.push(Draft {
                    item: idx,
                    seq,
                    ts,
                    user: reverter,
                    comment,
                    content: before.clone(),
                    parent: Some(state.clone()),
                    class: Some((LabelClass::Good, "revert".into())),
                });
                state = before;
            }
        }
    }

    drafts.sort_by_key(|d| (d.ts, d.item, d.seq));
    let base = 200_000_000u64;
    let mut last_rev: Vec<u64> = vec![0; n_items];
    let mut envelopes = Vec::with_capacity(drafts.len());
    let mut truth = Vec::new();
    for (i, d) in drafts.into_iter().enumerate() {
        let rev_id = base + i as u64 + 1;
        let parent_rev_id = last_rev[d.item];
        last_rev[d.item] = rev_id;
        let comment = d.comment.replace("{rev}", &parent_rev_id.to_string());
        if let Some((class, pattern)) = d.class {
            truth.push(TruthRecord { rev_id, class, pattern });
        }
        envelopes.push(RevisionEnvelope {
            meta: EditMeta { rev_id, parent_rev_id, user: d.user, comment, timestamp: d.ts },
            parent_json: d.parent.as_ref().map(serialize_entity),
            child_json: serialize_entity(&d.content),
        });
    }
    debug_assert_eq!(truth.len(), n);
    Ok(SynthOutput { spec: spec.clone(), envelopes, users: g.users, truth })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_prevalence() {
        let out = generate(&SynthSpec::new(4_000, 0.028, 3)).unwrap();
        assert_eq!(out.truth.len(), 4_000);
        let pos = out.planted_positives();
        assert!((pos as f64 - 112.0).abs() < 4.0 * (4_000.0f64 * 0.028 * 0.972).sqrt(), "{pos}");
        assert!(out.envelopes.iter().all(RevisionEnvelope::is_consistent));
        assert!(out.envelopes.windows(2).all(|w| w[0].meta.rev_id < w[1].meta.rev_id && w[0].meta.timestamp <= w[1].meta.timestamp));
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&SynthSpec::new(1_000, 0.0, 1)).is_err());
        assert!(generate(&SynthSpec::new(1_000, 1.0, 1)).is_err());
        assert!(generate(&SynthSpec::new(5, 0.1, 1)).is_err());
    }

    #[test]
    fn deterministic() {
        let a = generate(&SynthSpec::new(500, 0.05, 9)).unwrap();
        let b = generate(&SynthSpec::new(500, 0.05, 9)).unwrap();
        assert_eq!(a.envelopes, b.envelopes);
        assert_eq!(a.truth, b.truth);
    }
}
