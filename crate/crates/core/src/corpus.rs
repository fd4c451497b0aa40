//! Labeled user documents: ingestion, tokenization, onset-window filtering
//! and per-cell summary statistics.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use chrono::{DateTime, Duration, NaiveDate, SecondsFormat, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::util::{mix_seed, stable_hash};

pub const DEFAULT_WINDOW_DAYS: u32 = 90;

pub const URL_TOKEN: &str = "<url>";
pub const MENTION_TOKEN: &str = "<mention>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Target,
    Control,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::Target => "target",
            Group::Control => "control",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Group {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target" => Ok(Group::Target),
            "control" => Ok(Group::Control),
            other => Err(Error::Parse(format!("unknown group `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    #[serde(rename = "f")]
    Female,
    #[serde(rename = "m")]
    Male,
    #[serde(rename = "u")]
    Unknown,
}

impl Gender {
    pub fn code(self) -> &'static str {
        match self {
            Gender::Female => "f",
            Gender::Male => "m",
            Gender::Unknown => "u",
        }
    }
}

impl std::str::FromStr for Gender {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f" | "female" => Ok(Gender::Female),
            "m" | "male" => Ok(Gender::Male),
            "u" | "unknown" => Ok(Gender::Unknown),
            other => Err(Error::Parse(format!("unknown gender `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tweet {
    pub timestamp: DateTime<Utc>,
    pub raw_text: String,
    pub tokens: Vec<String>,
}

impl Tweet {
    pub fn new(timestamp: DateTime<Utc>, raw_text: impl Into<String>) -> Self {
        let raw_text = raw_text.into();
        let tokens = tokenize(&raw_text);
        Tweet {
            timestamp,
            raw_text,
            tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserDocument {
    pub user_id: String,
    pub group: Group,
    pub gender: Gender,
    pub anchor_date: Option<NaiveDate>,
    pub tweets: Vec<Tweet>,
}

impl UserDocument {
    pub fn token_count(&self) -> usize {
        self.tweets.iter().map(|t| t.tokens.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub docs: Vec<UserDocument>,
    pub window_days: u32,
}

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)(?:https?://|www\.)\S+").unwrap())
}

fn mention_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(^|[^\w])@\w+").unwrap())
}

/// Lowercases and splits social-media text into tokens.
///
/// URLs become `<url>`, @-handles become `<mention>`, the hashtag mark is
/// dropped along with all other standalone punctuation, and apostrophes
/// between word characters are kept (`i'm`, `don't`).
pub fn tokenize(raw: &str) -> Vec<String> {
    if raw.is_empty() {
        return Vec::new();
    }
    let lowered = raw.to_lowercase().replace('\u{2019}', "'");
    let no_urls = url_re().replace_all(&lowered, " <url> ");
    let normalized = mention_re().replace_all(&no_urls, "$1 <mention> ");

    let mut tokens = Vec::new();
    for chunk in normalized.split_whitespace() {
        if chunk == URL_TOKEN || chunk == MENTION_TOKEN {
            tokens.push(chunk.to_string());
            continue;
        }
        split_words(chunk, &mut tokens);
    }
    tokens
}

fn split_words(chunk: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = chunk.chars().collect();
    let mut word = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let inner_apostrophe =
            c == '\'' && !word.is_empty() && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        if c.is_alphanumeric() || inner_apostrophe {
            word.push(c);
        } else if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
}

fn field_err(line: usize, field: &str, reason: impl Into<String>) -> Error {
    Error::Record {
        line,
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn parse_record(line_no: usize, text: &str) -> Result<UserDocument> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| field_err(line_no, "<record>", format!("invalid JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| field_err(line_no, "<record>", "expected a JSON object"))?;

    let str_field = |name: &str| -> Result<&str> {
        obj.get(name)
            .ok_or_else(|| field_err(line_no, name, "missing"))?
            .as_str()
            .ok_or_else(|| field_err(line_no, name, "expected a string"))
    };

    let user_id = str_field("user_id")?.to_string();
    let group = match str_field("group")? {
        "target" => Group::Target,
        "control" => Group::Control,
        other => {
            return Err(field_err(
                line_no,
                "group",
                format!("expected \"target\" or \"control\", got {other:?}"),
            ))
        }
    };
    let gender = match str_field("gender")? {
        "f" => Gender::Female,
        "m" => Gender::Male,
        "u" => Gender::Unknown,
        other => {
            return Err(field_err(
                line_no,
                "gender",
                format!("expected \"f\", \"m\" or \"u\", got {other:?}"),
            ))
        }
    };
    let anchor_date = match obj.get("anchor_date") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let s = v
                .as_str()
                .ok_or_else(|| field_err(line_no, "anchor_date", "expected a string"))?;
            Some(
                NaiveDate::parse_from_str(s, "%Y-%m-%d")
                    .map_err(|e| field_err(line_no, "anchor_date", e.to_string()))?,
            )
        }
    };
    let raw_tweets = obj
        .get("tweets")
        .ok_or_else(|| field_err(line_no, "tweets", "missing"))?
        .as_array()
        .ok_or_else(|| field_err(line_no, "tweets", "expected an array"))?;

    let mut tweets = Vec::with_capacity(raw_tweets.len());
    for (i, t) in raw_tweets.iter().enumerate() {
        let ts_field = format!("tweets[{i}].ts");
        let text_field = format!("tweets[{i}].text");
        let ts = t
            .get("ts")
            .and_then(Value::as_str)
            .ok_or_else(|| field_err(line_no, &ts_field, "missing or not a string"))?;
        let ts = DateTime::parse_from_rfc3339(ts)
            .map_err(|e| field_err(line_no, &ts_field, e.to_string()))?
            .with_timezone(&Utc);
        let text = t
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| field_err(line_no, &text_field, "missing or not a string"))?;
        tweets.push(Tweet::new(ts, text));
    }
    tweets.sort_by_key(|t| t.timestamp);

    Ok(UserDocument {
        user_id,
        group,
        gender,
        anchor_date,
        tweets,
    })
}

/// Reads corpus JSONL (one user per line) from any reader.
pub fn read_corpus(reader: impl Read, window_days: u32) -> Result<Corpus> {
    if window_days == 0 {
        return Err(Error::invalid("window_days must be positive"));
    }
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| field_err(line_no, "<record>", e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = parse_record(line_no, &line)?;
        if !seen.insert(doc.user_id.clone()) {
            return Err(Error::DuplicateUser {
                line: line_no,
                user_id: doc.user_id,
            });
        }
        docs.push(doc);
    }
    Ok(Corpus { docs, window_days })
}

pub fn load_corpus(path: impl AsRef<Path>, window_days: u32) -> Result<Corpus> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(file, window_days)
}

fn doc_to_json(doc: &UserDocument) -> Value {
    let tweets: Vec<Value> = doc
        .tweets
        .iter()
        .map(|t| {
            json!({
                "ts": t.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true),
                "text": t.raw_text,
            })
        })
        .collect();
    let mut obj = serde_json::Map::new();
    obj.insert("user_id".into(), json!(doc.user_id));
    obj.insert("group".into(), json!(doc.group.as_str()));
    obj.insert("gender".into(), json!(doc.gender.code()));
    if let Some(anchor) = doc.anchor_date {
        obj.insert(
            "anchor_date".into(),
            json!(anchor.format("%Y-%m-%d").to_string()),
        );
    }
    obj.insert("tweets".into(), Value::Array(tweets));
    Value::Object(obj)
}

pub fn write_corpus(corpus: &Corpus, mut out: impl Write) -> Result<()> {
    for doc in &corpus.docs {
        serde_json::to_writer(&mut out, &doc_to_json(doc))?;
        out.write_all(b"\n")
            .map_err(|e| Error::io("<corpus output>", e))?;
    }
    Ok(())
}

fn midnight(date: NaiveDate) -> DateTime<Utc> {
    date.and_hms_opt(0, 0, 0).expect("valid midnight").and_utc()
}

/// Draws a control anchor uniformly from `first_date + 1 ..= last_date + 1`
/// so the window always reaches the document's last tweets.
fn draw_control_anchor(doc: &UserDocument, seed: u64) -> Option<NaiveDate> {
    let first = doc.tweets.first()?.timestamp.date_naive();
    let last = doc.tweets.last()?.timestamp.date_naive();
    let span = (last - first).num_days();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, stable_hash(&doc.user_id)));
    let offset = rng.random_range(0..=span);
    Some(first + Duration::days(offset + 1))
}

/// Keeps tweets with `anchor - window_days <= ts < anchor`.
///
/// Control documents without an anchor get one drawn from their own tweet
/// date range with `seed`; the returned document carries the anchor used,
/// so filtering is idempotent.
pub fn window_filter(doc: &UserDocument, window_days: u32, seed: u64) -> Result<UserDocument> {
    let anchor = match (doc.anchor_date, doc.group) {
        (Some(a), _) => Some(a),
        (None, Group::Target) => return Err(Error::MissingAnchor(doc.user_id.clone())),
        (None, Group::Control) => draw_control_anchor(doc, seed),
    };
    let Some(anchor) = anchor else {
        // control document with no tweets
        return Ok(doc.clone());
    };
    let end = midnight(anchor);
    let start = end - Duration::days(i64::from(window_days));
    let tweets = doc
        .tweets
        .iter()
        .filter(|t| t.timestamp >= start && t.timestamp < end)
        .cloned()
        .collect();
    Ok(UserDocument {
        anchor_date: Some(anchor),
        tweets,
        ..doc.clone()
    })
}

impl Corpus {
    pub fn apply_window(&self, seed: u64) -> Result<Corpus> {
        let docs = self
            .docs
            .iter()
            .map(|d| window_filter(d, self.window_days, seed))
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus {
            docs,
            window_days: self.window_days,
        })
    }

    pub fn select(&self, group: Option<Group>, gender: Option<Gender>) -> Vec<&UserDocument> {
        self.docs
            .iter()
            .filter(|d| group.is_none_or(|g| d.group == g))
            .filter(|d| gender.is_none_or(|g| d.gender == g))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CohortStats {
    pub user_count: usize,
    pub median_tweets: f64,
    pub mean_tweets: f64,
}

impl CohortStats {
    pub fn from_counts(counts: &[usize]) -> Self {
        if counts.is_empty() {
            return CohortStats::default();
        }
        let mut sorted = counts.to_vec();
        sorted.sort_unstable();
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2] as f64
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
        };
        let mean = sorted.iter().sum::<usize>() as f64 / n as f64;
        CohortStats {
            user_count: n,
            median_tweets: median,
            mean_tweets: mean,
        }
    }
}

pub const STAT_CELLS: [(Group, Gender); 6] = [
    (Group::Target, Gender::Female),
    (Group::Target, Gender::Male),
    (Group::Target, Gender::Unknown),
    (Group::Control, Gender::Female),
    (Group::Control, Gender::Male),
    (Group::Control, Gender::Unknown),
];

pub fn cell_key(group: Group, gender: Gender) -> String {
    format!("{}.{}", group.as_str(), gender.code())
}

/// Per (group, gender) statistics keyed `"group.gender"`; every cell is present.
pub fn corpus_stats(corpus: &Corpus) -> BTreeMap<String, CohortStats> {
    STAT_CELLS
        .iter()
        .map(|&(group, gender)| {
            let counts: Vec<usize> = corpus
                .select(Some(group), Some(gender))
                .iter()
                .map(|d| d.tweets.len())
                .collect();
            (cell_key(group, gender), CohortStats::from_counts(&counts))
        })
        .collect()
}

/// Renders a table with target/control by female/male columns.
pub fn render_stats_table(stats: &BTreeMap<String, CohortStats>) -> String {
    let cols = ["target.f", "target.m", "control.f", "control.m"];
    let get = |k: &str| stats.get(k).copied().unwrap_or_default();
    let mut out = String::new();
    out.push_str(&format!(
        "{:<14}|{:>12}{:>12} |{:>12}{:>12}\n",
        "", "Target", "", "Control", ""
    ));
    out.push_str(&format!(
        "{:<14}|{:>12}{:>12} |{:>12}{:>12}\n",
        "", "Female", "Male", "Female", "Male"
    ));
    out.push_str(&"-".repeat(65));
    out.push('\n');
    let row = |label: &str, f: &dyn Fn(CohortStats) -> String| {
        let cells: Vec<String> = cols.iter().map(|c| f(get(c))).collect();
        format!(
            "{:<14}|{:>12}{:>12} |{:>12}{:>12}\n",
            label, cells[0], cells[1], cells[2], cells[3]
        )
    };
    out.push_str(&row("users", &|s| s.user_count.to_string()));
    out.push_str(&row("median tweets", &|s| {
        format!("{:.1}", s.median_tweets)
    }));
    out.push_str(&row("mean tweets", &|s| format!("{:.1}", s.mean_tweets)));
    out
}
