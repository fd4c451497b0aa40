//! Node scores on the topic graph and the connector/topical word split.
//!
//! Connector words are the high eigenvector-centrality nodes (weighted);
//! topical words are the high local clustering-coefficient nodes (binarized
//! graph). Thresholds are quantiles of the respective score distributions.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boosting::TopicGraph;
use crate::error::{Error, Result};
use crate::util::{fmt_sig, quantile_sorted};

pub const DEFAULT_TH_EC: f64 = 0.90;
pub const DEFAULT_TH_CC: f64 = 0.75;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 20_000;

struct Indexed<'a> {
    names: Vec<&'a str>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

fn index(graph: &TopicGraph) -> Indexed<'_> {
    let names: Vec<&str> = graph.nodes.iter().map(String::as_str).collect();
    let position: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let mut adjacency = vec![Vec::new(); names.len()];
    for ((a, b), e) in &graph.edges {
        let (i, j) = (position[a.as_str()], position[b.as_str()]);
        adjacency[i].push((j, e.weight));
        if i != j {
            adjacency[j].push((i, e.weight));
        }
    }
    Indexed { names, adjacency }
}

/// Principal eigenvector of the weighted adjacency matrix, L2-normalized.
///
/// Iterates `x <- (A/s + I) x / ||(A/s + I) x||` from a uniform start, where
/// `s` is the largest weighted degree. The identity shift leaves the
/// principal eigenvector unchanged and keeps bipartite graphs (paths, stars)
/// from oscillating between two vectors; dividing by `s` makes the result
/// independent of the overall weight scale.
pub fn eigenvector_centrality(
    graph: &TopicGraph,
    tol: f64,
    max_iter: usize,
) -> Result<BTreeMap<String, f64>> {
    if graph.nodes.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let Indexed { names, adjacency } = index(graph);
    let n = names.len();
    let scale = adjacency
        .iter()
        .map(|row| row.iter().map(|&(_, w)| w).sum::<f64>())
        .fold(0.0_f64, f64::max);
    if scale <= 0.0 {
        return Err(Error::EmptyGraph);
    }

    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let mut y: Vec<f64> = adjacency
            .par_iter()
            .zip(x.par_iter())
            .map(|(row, &xi)| xi + row.iter().map(|&(j, w)| (w / scale) * x[j]).sum::<f64>())
            .collect();
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        y.iter_mut().for_each(|v| *v /= norm);
        residual = y
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        x = y;
        if residual < tol {
            return Ok(names.iter().map(|s| s.to_string()).zip(x).collect());
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Local clustering coefficient on the binarized graph (self-loops ignored):
/// `2 T(v) / (deg(v) (deg(v) - 1))`, 0 when `deg(v) < 2`.
pub fn clustering_coefficient(graph: &TopicGraph) -> BTreeMap<String, f64> {
    let Indexed { names, adjacency } = index(graph);
    let neighbors: Vec<HashSet<usize>> = adjacency
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().map(|&(j, _)| j).filter(|&j| j != i).collect())
        .collect();
    let coefficients: Vec<f64> = neighbors
        .par_iter()
        .map(|nbrs| {
            let deg = nbrs.len();
            if deg < 2 {
                return 0.0;
            }
            let mut links = 0u64;
            for &u in nbrs {
                links += neighbors[u].iter().filter(|w| nbrs.contains(w)).count() as u64;
            }
            // each neighbor-neighbor link was seen from both ends
            let triangles = links / 2;
            2.0 * triangles as f64 / (deg * (deg - 1)) as f64
        })
        .collect();
    names
        .iter()
        .map(|s| s.to_string())
        .zip(coefficients)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodeScores {
    pub centrality: BTreeMap<String, f64>,
    pub clustering: BTreeMap<String, f64>,
}

impl NodeScores {
    pub fn compute(graph: &TopicGraph, tol: f64, max_iter: usize) -> Result<NodeScores> {
        Ok(NodeScores {
            centrality: eigenvector_centrality(graph, tol, max_iter)?,
            clustering: clustering_coefficient(graph),
        })
    }

    /// TSV `token\tcentrality\tclustering`, 12 significant digits.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (token, c) in &self.centrality {
            let cc = self.clustering.get(token).copied().unwrap_or(0.0);
            out.push_str(&format!("{token}\t{}\t{}\n", fmt_sig(*c), fmt_sig(cc)));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordSets {
    pub connectors: BTreeSet<String>,
    pub topicals: BTreeSet<String>,
    pub th_ec: f64,
    pub th_cc: f64,
}

fn at_or_above_quantile(scores: &BTreeMap<String, f64>, q: f64) -> BTreeSet<String> {
    if scores.is_empty() {
        return BTreeSet::new();
    }
    let mut sorted: Vec<f64> = scores.values().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let cut = quantile_sorted(&sorted, q);
    scores
        .iter()
        .filter(|(_, &s)| s >= cut)
        .map(|(t, _)| t.clone())
        .collect()
}

/// Connectors: centrality at or above its `th_ec` quantile. Topicals:
/// clustering at or above its `th_cc` quantile, minus the connectors.
pub fn select_word_sets(scores: &NodeScores, th_ec: f64, th_cc: f64) -> Result<WordSets> {
    for (name, q) in [("th_ec", th_ec), ("th_cc", th_cc)] {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::invalid(format!(
                "{name} must be a quantile in [0, 1], got {q}"
            )));
        }
    }
    if scores.centrality.is_empty() && scores.clustering.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let connectors = at_or_above_quantile(&scores.centrality, th_ec);
    let topicals: BTreeSet<String> = at_or_above_quantile(&scores.clustering, th_cc)
        .into_iter()
        .filter(|t| !connectors.contains(t))
        .collect();
    if connectors.is_empty() {
        return Err(Error::EmptyWordSet { which: "connector" });
    }
    if topicals.is_empty() {
        return Err(Error::EmptyWordSet { which: "topical" });
    }
    Ok(WordSets {
        connectors,
        topicals,
        th_ec,
        th_cc,
    })
}
