//! Feature boosting: the target graph minus the reference graph, clamped at zero.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::util::fmt_sig;
use crate::wordgraph::{EdgeKey, WordGraph};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostedEdge {
    pub weight: f64,
    /// Target-graph tf and df, kept for traceability in dumps.
    pub target_tf: f64,
    pub target_df: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TopicGraph {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeMap<EdgeKey, BoostedEdge>,
}

/// `max(0, w_target - w_reference)` per target edge; non-positive edges and
/// the nodes they strand are omitted.
pub fn boost(target: &WordGraph, reference: &WordGraph) -> TopicGraph {
    let mut topic = TopicGraph::default();
    for (key, stats) in &target.edges {
        let reference_weight = reference.edges.get(key).map_or(0.0, |e| e.weight);
        let boosted = (stats.weight - reference_weight).max(0.0);
        if boosted > 0.0 {
            topic.nodes.insert(key.0.clone());
            topic.nodes.insert(key.1.clone());
            topic.edges.insert(
                key.clone(),
                BoostedEdge {
                    weight: boosted,
                    target_tf: stats.tf,
                    target_df: stats.df,
                },
            );
        }
    }
    topic
}

impl TopicGraph {
    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn weight(&self, a: &str, b: &str) -> f64 {
        self.edges
            .get(&crate::wordgraph::edge_key(a, b))
            .map_or(0.0, |e| e.weight)
    }

    /// Builds a topic graph straight from weighted edges (non-positive skipped).
    pub fn from_weights<'a>(edges: impl IntoIterator<Item = (&'a str, &'a str, f64)>) -> Self {
        let mut g = TopicGraph::default();
        for (a, b, w) in edges {
            if w > 0.0 {
                g.nodes.insert(a.to_string());
                g.nodes.insert(b.to_string());
                g.edges.insert(
                    crate::wordgraph::edge_key(a, b),
                    BoostedEdge {
                        weight: w,
                        target_tf: 0.0,
                        target_df: 0.0,
                    },
                );
            }
        }
        g
    }

    /// Same layout as the word-graph dump; column 5 carries the boosted weight.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for ((a, b), e) in &self.edges {
            out.push_str(&format!(
                "{a}\t{b}\t{}\t{}\t{}\n",
                fmt_sig(e.target_tf),
                fmt_sig(e.target_df),
                fmt_sig(e.weight)
            ));
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<TopicGraph> {
        let g = WordGraph::from_tsv(text)?;
        let mut topic = TopicGraph::default();
        for (key, e) in g.edges {
            if e.weight <= 0.0 {
                return Err(Error::Parse(format!(
                    "topic graph edge {}-{} has non-positive weight",
                    key.0, key.1
                )));
            }
            topic.nodes.insert(key.0.clone());
            topic.nodes.insert(key.1.clone());
            topic.edges.insert(
                key,
                BoostedEdge {
                    weight: e.weight,
                    target_tf: e.tf,
                    target_df: e.df,
                },
            );
        }
        Ok(topic)
    }
}
