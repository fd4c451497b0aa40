//! Wildcard trigram patterns: template enumeration and corpus matching.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::UserDocument;
use crate::error::{Error, Result};
use crate::graphmetrics::WordSets;

pub const DEFAULT_MIN_COUNT: u64 = 5;
pub const WILDCARD: &str = "*";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    Fixed(String),
    Wildcard,
}

impl Slot {
    fn as_str(&self) -> &str {
        match self {
            Slot::Fixed(t) => t,
            Slot::Wildcard => WILDCARD,
        }
    }
}

/// Extraction subgroup a pattern came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Female,
    Male,
    Mixed,
}

/// Three contiguous slots, exactly one of which is the wildcard.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pattern {
    slots: [Slot; 3],
    pub origin: Origin,
}

impl Pattern {
    pub fn new(slots: [Slot; 3], origin: Origin) -> Result<Self> {
        let wildcards = slots.iter().filter(|s| **s == Slot::Wildcard).count();
        if wildcards != 1 {
            return Err(Error::invalid(format!(
                "a pattern needs exactly one wildcard slot, got {wildcards}"
            )));
        }
        Ok(Pattern { slots, origin })
    }

    /// Parses `["i", "am", "*"]`-style slot strings.
    pub fn from_strs(slots: &[&str], origin: Origin) -> Result<Self> {
        let slots: [&str; 3] = slots
            .try_into()
            .map_err(|_| Error::invalid(format!("a pattern has 3 slots, got {}", slots.len())))?;
        Pattern::new(
            slots.map(|s| {
                if s == WILDCARD {
                    Slot::Wildcard
                } else {
                    Slot::Fixed(s.to_string())
                }
            }),
            origin,
        )
    }

    pub fn parse(text: &str, origin: Origin) -> Result<Self> {
        let parts: Vec<&str> = text.split(' ').collect();
        Pattern::from_strs(&parts, origin)
    }

    pub fn slots(&self) -> &[Slot; 3] {
        &self.slots
    }

    pub fn slot_strs(&self) -> [&str; 3] {
        [
            self.slots[0].as_str(),
            self.slots[1].as_str(),
            self.slots[2].as_str(),
        ]
    }

    pub fn wildcard_position(&self) -> usize {
        self.slots
            .iter()
            .position(|s| *s == Slot::Wildcard)
            .expect("pattern invariant: one wildcard")
    }

    /// Canonical text form, the stable pattern identifier.
    pub fn text(&self) -> String {
        self.slot_strs().join(" ")
    }

    fn fixed_pair(&self) -> (&str, &str) {
        let fixed: Vec<&str> = self
            .slots
            .iter()
            .filter_map(|s| match s {
                Slot::Fixed(t) => Some(t.as_str()),
                Slot::Wildcard => None,
            })
            .collect();
        (fixed[0], fixed[1])
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Role {
    Connector,
    Topical,
    Other,
}

/// Scans every in-tweet trigram whose roles form (CW,CW,TW), (CW,TW,CW) or
/// (TW,CW,CW), wildcards the topical slot and keeps templates instantiated
/// at least `min_count` times. Output is sorted by canonical text.
pub fn enumerate_patterns(
    word_sets: &WordSets,
    docs: &[&UserDocument],
    min_count: u64,
    origin: Origin,
) -> Result<Vec<Pattern>> {
    let role = |t: &str| {
        if word_sets.connectors.contains(t) {
            Role::Connector
        } else if word_sets.topicals.contains(t) {
            Role::Topical
        } else {
            Role::Other
        }
    };
    let per_doc: Vec<HashMap<(usize, String, String), u64>> = docs
        .par_iter()
        .map(|doc| {
            let mut counts = HashMap::new();
            for tweet in &doc.tweets {
                for tri in tweet.tokens.windows(3) {
                    let roles = [role(&tri[0]), role(&tri[1]), role(&tri[2])];
                    let connectors = roles.iter().filter(|r| **r == Role::Connector).count();
                    let topicals = roles.iter().filter(|r| **r == Role::Topical).count();
                    if connectors != 2 || topicals != 1 {
                        continue;
                    }
                    let wild = roles.iter().position(|r| *r == Role::Topical).unwrap();
                    let mut fixed = tri
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| *i != wild)
                        .map(|(_, t)| t.clone());
                    let key = (wild, fixed.next().unwrap(), fixed.next().unwrap());
                    *counts.entry(key).or_default() += 1;
                }
            }
            counts
        })
        .collect();

    let mut totals: BTreeMap<(usize, String, String), u64> = BTreeMap::new();
    for counts in per_doc {
        for (k, v) in counts {
            *totals.entry(k).or_default() += v;
        }
    }
    let mut patterns: Vec<Pattern> = totals
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .map(|((wild, a, b), _)| {
            let mut fixed = [a, b].into_iter();
            let slots = std::array::from_fn(|i| {
                if i == wild {
                    Slot::Wildcard
                } else {
                    Slot::Fixed(fixed.next().unwrap())
                }
            });
            Pattern { slots, origin }
        })
        .collect();
    if patterns.is_empty() {
        return Err(Error::NoPatterns { min_count });
    }
    patterns.sort_by_key(|p| p.text());
    Ok(patterns)
}

/// All (start, filler) matches of `pattern` in one token sequence;
/// overlapping matches are reported.
pub fn match_pattern(pattern: &Pattern, tokens: &[String]) -> Vec<(usize, String)> {
    let wild = pattern.wildcard_position();
    tokens
        .windows(3)
        .enumerate()
        .filter(|(_, tri)| {
            pattern
                .slots
                .iter()
                .zip(tri.iter())
                .all(|(slot, tok)| match slot {
                    Slot::Fixed(t) => t == tok,
                    Slot::Wildcard => true,
                })
        })
        .map(|(i, tri)| (i, tri[wild].clone()))
        .collect()
}

/// Index over a fixed pattern list for one-pass matching of many patterns.
#[derive(Debug, Clone)]
pub struct PatternIndex {
    by_key: HashMap<(usize, String, String), Vec<usize>>,
    len: usize,
}

impl PatternIndex {
    pub fn new(patterns: &[Pattern]) -> Self {
        let mut by_key: HashMap<(usize, String, String), Vec<usize>> = HashMap::new();
        for (i, p) in patterns.iter().enumerate() {
            let (a, b) = p.fixed_pair();
            by_key
                .entry((p.wildcard_position(), a.to_string(), b.to_string()))
                .or_default()
                .push(i);
        }
        PatternIndex {
            by_key,
            len: patterns.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Calls `f(pattern_index, filler)` for every match in `tokens`.
    pub fn for_each_match(&self, tokens: &[String], mut f: impl FnMut(usize, &str)) {
        if self.by_key.is_empty() {
            return;
        }
        let mut key = (0usize, String::new(), String::new());
        for tri in tokens.windows(3) {
            for wild in 0..3 {
                let (a, b) = match wild {
                    0 => (&tri[1], &tri[2]),
                    1 => (&tri[0], &tri[2]),
                    _ => (&tri[0], &tri[1]),
                };
                key.0 = wild;
                key.1.clone_from(a);
                key.2.clone_from(b);
                if let Some(ids) = self.by_key.get(&key) {
                    for &id in ids {
                        f(id, &tri[wild]);
                    }
                }
            }
        }
    }

    /// Per-pattern match counts for one document.
    pub fn count_doc(&self, doc: &UserDocument) -> Vec<u64> {
        let mut counts = vec![0u64; self.len];
        for tweet in &doc.tweets {
            self.for_each_match(&tweet.tokens, |i, _| counts[i] += 1);
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchCounts {
    /// Canonical text of each counted pattern, in input order.
    pub patterns: Vec<String>,
    /// user_id -> per-pattern counts (aligned with `patterns`).
    pub per_user: BTreeMap<String, Vec<u64>>,
    /// Per-pattern filler token -> occurrences at the wildcard.
    pub fillers: Vec<BTreeMap<String, u64>>,
}

impl MatchCounts {
    pub fn count(&self, user_id: &str, pattern: usize) -> u64 {
        self.per_user.get(user_id).map_or(0, |c| c[pattern])
    }

    pub fn total(&self, pattern: usize) -> u64 {
        self.per_user.values().map(|c| c[pattern]).sum()
    }

    pub fn users_matching(&self, pattern: usize) -> usize {
        self.per_user.values().filter(|c| c[pattern] > 0).count()
    }

    pub fn filler_set(&self, pattern: usize) -> BTreeSet<&str> {
        self.fillers[pattern].keys().map(String::as_str).collect()
    }
}

type DocCounts = (String, Vec<u64>, Vec<BTreeMap<String, u64>>);

/// Match counts of every pattern for every user, plus wildcard fillers.
pub fn count_matches(patterns: &[Pattern], docs: &[&UserDocument]) -> MatchCounts {
    let index = PatternIndex::new(patterns);
    let per_doc: Vec<DocCounts> = docs
        .par_iter()
        .map(|doc| {
            let mut counts = vec![0u64; patterns.len()];
            let mut fillers: Vec<BTreeMap<String, u64>> = vec![BTreeMap::new(); patterns.len()];
            for tweet in &doc.tweets {
                index.for_each_match(&tweet.tokens, |i, filler| {
                    counts[i] += 1;
                    *fillers[i].entry(filler.to_string()).or_default() += 1;
                });
            }
            (doc.user_id.clone(), counts, fillers)
        })
        .collect();

    let mut out = MatchCounts {
        patterns: patterns.iter().map(Pattern::text).collect(),
        per_user: BTreeMap::new(),
        fillers: vec![BTreeMap::new(); patterns.len()],
    };
    for (user, counts, fillers) in per_doc {
        let slot = out
            .per_user
            .entry(user)
            .or_insert_with(|| vec![0; patterns.len()]);
        for (acc, c) in slot.iter_mut().zip(counts) {
            *acc += c;
        }
        for (acc, f) in out.fillers.iter_mut().zip(fillers) {
            for (tok, c) in f {
                *acc.entry(tok).or_default() += c;
            }
        }
    }
    out
}

/// Number of contiguous in-tweet trigrams in a set of documents.
pub fn trigram_count(docs: &[&UserDocument]) -> u64 {
    docs.iter()
        .flat_map(|d| &d.tweets)
        .map(|t| t.tokens.len().saturating_sub(2) as u64)
        .sum()
}
