//! Per-cohort bigram word graphs weighted by TF x DF.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rayon::prelude::*;

use crate::corpus::UserDocument;
use crate::error::{Error, Result};
use crate::util::fmt_sig;

pub const DEFAULT_MIN_EDGE_COUNT: u64 = 2;

/// Undirected edge key: `(a, b)` with `a <= b`.
pub type EdgeKey = (String, String);

pub fn edge_key(a: &str, b: &str) -> EdgeKey {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeStats {
    /// Raw bigram occurrences in the cohort.
    pub count: u64,
    /// Users with at least one occurrence.
    pub users: u64,
    pub tf: f64,
    pub df: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WordGraph {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeMap<EdgeKey, EdgeStats>,
    pub user_count: usize,
    /// Bigram occurrences before pruning; the TF denominator.
    pub total_bigrams: u64,
}

#[derive(Default)]
struct Counts {
    bigrams: HashMap<EdgeKey, u64>,
    users: HashMap<EdgeKey, u64>,
    total: u64,
}

impl Counts {
    fn from_doc(doc: &UserDocument) -> Self {
        let mut bigrams: HashMap<EdgeKey, u64> = HashMap::new();
        let mut total = 0;
        for tweet in &doc.tweets {
            for pair in tweet.tokens.windows(2) {
                *bigrams.entry(edge_key(&pair[0], &pair[1])).or_default() += 1;
                total += 1;
            }
        }
        let users = bigrams.keys().map(|k| (k.clone(), 1)).collect();
        Counts {
            bigrams,
            users,
            total,
        }
    }

    fn merge(mut self, other: Counts) -> Counts {
        for (k, v) in other.bigrams {
            *self.bigrams.entry(k).or_default() += v;
        }
        for (k, v) in other.users {
            *self.users.entry(k).or_default() += v;
        }
        self.total += other.total;
        self
    }
}

/// Builds the cohort word graph. Bigrams never cross tweet boundaries;
/// edges whose raw count is below `min_edge_count` are dropped after TF is
/// normalized over all bigram occurrences.
pub fn build_word_graph(docs: &[&UserDocument], min_edge_count: u64) -> Result<WordGraph> {
    if docs.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let counts = docs
        .par_iter()
        .map(|d| Counts::from_doc(d))
        .reduce(Counts::default, Counts::merge);

    let user_count = docs.len();
    if counts.total == 0 {
        log::warn!("cohort of {user_count} users has no bigrams; graph is empty");
        return Ok(WordGraph {
            user_count,
            ..WordGraph::default()
        });
    }

    let total = counts.total as f64;
    let mut nodes = BTreeSet::new();
    let mut edges = BTreeMap::new();
    for (key, count) in counts.bigrams {
        if count < min_edge_count {
            continue;
        }
        let users = counts.users[&key];
        let tf = count as f64 / total;
        let df = users as f64 / user_count as f64;
        nodes.insert(key.0.clone());
        nodes.insert(key.1.clone());
        edges.insert(
            key,
            EdgeStats {
                count,
                users,
                tf,
                df,
                weight: tf * df,
            },
        );
    }
    Ok(WordGraph {
        nodes,
        edges,
        user_count,
        total_bigrams: counts.total,
    })
}

impl WordGraph {
    pub fn edge(&self, a: &str, b: &str) -> Option<&EdgeStats> {
        self.edges.get(&edge_key(a, b))
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// TSV `token_a\ttoken_b\ttf\tdf\tweight`, sorted, 12 significant digits.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for ((a, b), e) in &self.edges {
            out.push_str(&format!(
                "{a}\t{b}\t{}\t{}\t{}\n",
                fmt_sig(e.tf),
                fmt_sig(e.df),
                fmt_sig(e.weight)
            ));
        }
        out
    }

    /// Parses the TSV dump. Raw counts, user counts and the cohort size are
    /// not part of the dump and come back as zero.
    pub fn from_tsv(text: &str) -> Result<WordGraph> {
        let mut graph = WordGraph::default();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 5 {
                return Err(Error::Parse(format!(
                    "graph line {}: expected 5 columns, got {}",
                    i + 1,
                    cols.len()
                )));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| Error::Parse(format!("graph line {}: bad number `{s}`", i + 1)))
            };
            let stats = EdgeStats {
                count: 0,
                users: 0,
                tf: num(cols[2])?,
                df: num(cols[3])?,
                weight: num(cols[4])?,
            };
            graph.nodes.insert(cols[0].to_string());
            graph.nodes.insert(cols[1].to_string());
            graph.edges.insert(edge_key(cols[0], cols[1]), stats);
        }
        Ok(graph)
    }
}

/// Stored weight of the undirected edge, 0 when absent.
pub fn edge_weight(graph: &WordGraph, a: &str, b: &str) -> f64 {
    graph.edge(a, b).map_or(0.0, |e| e.weight)
}

/// Distinct users of each bigram; exposed for tests and reports.
pub fn bigram_user_sets(docs: &[&UserDocument]) -> HashMap<EdgeKey, HashSet<String>> {
    let mut out: HashMap<EdgeKey, HashSet<String>> = HashMap::new();
    for d in docs {
        for t in &d.tweets {
            for p in t.tokens.windows(2) {
                out.entry(edge_key(&p[0], &p[1]))
                    .or_default()
                    .insert(d.user_id.clone());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Gender, Group, Tweet};
    use chrono::{TimeZone, Utc};

    pub(crate) fn user(id: &str, tweets: &[&str]) -> UserDocument {
        UserDocument {
            user_id: id.into(),
            group: Group::Target,
            gender: Gender::Female,
            anchor_date: None,
            tweets: tweets
                .iter()
                .map(|t| Tweet::new(Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(), *t))
                .collect(),
        }
    }

    #[test]
    fn single_bigram() {
        let u = user("u1", &["i am"]);
        let g = build_word_graph(&[&u], 1).unwrap();
        let e = g.edge("am", "i").unwrap();
        assert_eq!((e.tf, e.df, e.weight), (1.0, 1.0, 1.0));
        assert_eq!(g.edges.len(), 1);
    }

    #[test]
    fn two_users() {
        let u1 = user("u1", &["i am"]);
        let u2 = user("u2", &["i am", "so sad"]);
        let g = build_word_graph(&[&u1, &u2], 1).unwrap();
        let e = g.edge("i", "am").unwrap();
        assert!((e.tf - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.df, 1.0);
        assert!((e.weight - 2.0 / 3.0).abs() < 1e-15);
        let s = g.edge("sad", "so").unwrap();
        assert!((s.tf - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.df, 0.5);
        assert!((s.weight - 1.0 / 6.0).abs() < 1e-15);
        assert!((edge_weight(&g, "am", "i") - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(edge_weight(&g, "x", "y"), 0.0);
        assert_eq!(edge_weight(&g, "i", "am"), edge_weight(&g, "am", "i"));
    }

    #[test]
    fn isolated_token_has_no_node() {
        let u = user("u1", &["hi"]);
        let g = build_word_graph(&[&u], 1).unwrap();
        assert!(g.nodes.is_empty());
        assert!(g.is_empty());
    }

    #[test]
    fn no_cross_tweet_bigrams() {
        let u = user("u1", &["a b", "c d"]);
        let g = build_word_graph(&[&u], 1).unwrap();
        assert!(g.edge("b", "c").is_none());
        assert_eq!(g.edges.len(), 2);
    }

    #[test]
    fn empty_docs_error() {
        assert!(matches!(build_word_graph(&[], 1), Err(Error::EmptyCohort)));
    }

    #[test]
    fn pruning_drops_rare_edges() {
        let u = user("u1", &["a b a b", "c d"]);
        let g = build_word_graph(&[&u], 2).unwrap();
        assert!(g.edge("c", "d").is_none());
        let ab = g.edge("a", "b").unwrap();
        assert_eq!(ab.count, 3);
        assert!((ab.tf - 3.0 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn tsv_round_trip() {
        let u1 = user("u1", &["i am", "so sad"]);
        let u2 = user("u2", &["i am"]);
        let g = build_word_graph(&[&u1, &u2], 1).unwrap();
        let tsv = g.to_tsv();
        assert_eq!(
            tsv,
            "am\ti\t0.666666666667\t1\t0.666666666667\nsad\tso\t0.333333333333\t0.5\t0.166666666667\n"
        );
        let back = WordGraph::from_tsv(&tsv).unwrap();
        assert_eq!(back.nodes, g.nodes);
        assert_eq!(back.to_tsv(), tsv);
    }
}
