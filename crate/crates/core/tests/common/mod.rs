//! Independent reference implementations and random fixtures.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use chrono::{TimeZone, Utc};
use nalgebra::{DMatrix, SymmetricEigen};
use patmine_core::boosting::TopicGraph;
use patmine_core::corpus::{Gender, Group, Tweet, UserDocument};
use patmine_core::patterns::{Origin, Pattern};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// --- graphs -------------------------------------------------------------------

/// Connected weighted graph: random spanning tree plus extra edges, with an
/// occasional self-loop.
pub fn random_connected_graph(rng: &mut ChaCha8Rng, max_nodes: usize) -> TopicGraph {
    let n = rng.random_range(2..=max_nodes);
    let names: Vec<String> = (0..n).map(|i| format!("n{i:02}")).collect();
    let mut edges: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        edges.insert((j, i), rng.random_range(0.01..1.0));
    }
    let extra = rng.random_range(0..=n * 2);
    for _ in 0..extra {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b || rng.random_bool(0.1) {
            edges.insert((a.min(b), a.max(b)), rng.random_range(0.01..1.0));
        }
    }
    TopicGraph::from_weights(
        edges
            .iter()
            .map(|(&(a, b), &w)| (names[a].as_str(), names[b].as_str(), w)),
    )
}

/// Principal eigenvector from a dense symmetric eigensolver, sign-aligned to
/// a non-negative sum and L2-normalized.
pub fn dense_centrality(graph: &TopicGraph) -> BTreeMap<String, f64> {
    let names: Vec<&String> = graph.nodes.iter().collect();
    let idx: BTreeMap<&String, usize> = names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let n = names.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for ((u, v), e) in &graph.edges {
        let (i, j) = (idx[u], idx[v]);
        a[(i, j)] = e.weight;
        a[(j, i)] = e.weight;
    }
    let eig = SymmetricEigen::new(a);
    let k = eig.eigenvalues.imax();
    let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    names
        .into_iter()
        .cloned()
        .zip(v.into_iter().map(|x| x / norm))
        .collect()
}

/// Clustering by enumerating every neighbor pair of every node.
pub fn triple_clustering(graph: &TopicGraph) -> BTreeMap<String, f64> {
    let names: Vec<&String> = graph.nodes.iter().collect();
    let n = names.len();
    let idx: BTreeMap<&String, usize> = names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let mut adj = vec![vec![false; n]; n];
    for (u, v) in graph.edges.keys() {
        let (i, j) = (idx[u], idx[v]);
        if i != j {
            adj[i][j] = true;
            adj[j][i] = true;
        }
    }
    (0..n)
        .map(|v| {
            let nbrs: Vec<usize> = (0..n).filter(|&u| adj[v][u]).collect();
            let d = nbrs.len();
            let mut triangles = 0u64;
            for a in 0..n {
                for b in (a + 1)..n {
                    if adj[v][a] && adj[v][b] && adj[a][b] {
                        triangles += 1;
                    }
                }
            }
            let c = if d < 2 {
                0.0
            } else {
                2.0 * triangles as f64 / (d * (d - 1)) as f64
            };
            (names[v].clone(), c)
        })
        .collect()
}

// --- corpora ------------------------------------------------------------------

pub const SMALL_VOCAB: [&str; 8] = ["a", "b", "c", "d", "e", "f", "g", "h"];

/// Random tokens from a small vocabulary so bigrams and trigrams repeat.
pub fn random_docs(rng: &mut ChaCha8Rng, max_users: usize, max_tweets: usize) -> Vec<UserDocument> {
    let users = rng.random_range(1..=max_users);
    (0..users)
        .map(|u| {
            let tweets = (0..rng.random_range(0..=max_tweets))
                .map(|t| {
                    let len = rng.random_range(0..=10);
                    let text: Vec<&str> = (0..len)
                        .map(|_| SMALL_VOCAB[rng.random_range(0..SMALL_VOCAB.len())])
                        .collect();
                    Tweet::new(
                        Utc.timestamp_opt(1_500_000_000 + t as i64 * 60, 0).unwrap(),
                        text.join(" "),
                    )
                })
                .collect();
            UserDocument {
                user_id: format!("u{u:02}"),
                group: if u % 2 == 0 {
                    Group::Target
                } else {
                    Group::Control
                },
                gender: if u % 3 == 0 {
                    Gender::Male
                } else {
                    Gender::Female
                },
                anchor_date: None,
                tweets,
            }
        })
        .collect()
}

pub fn doc(id: &str, group: Group, gender: Gender, tweets: &[&str]) -> UserDocument {
    UserDocument {
        user_id: id.into(),
        group,
        gender,
        anchor_date: None,
        tweets: tweets
            .iter()
            .enumerate()
            .map(|(i, t)| Tweet::new(Utc.timestamp_opt(1_600_000_000 + i as i64, 0).unwrap(), *t))
            .collect(),
    }
}

pub type BigramCounts = BTreeMap<(String, String), (u64, u64)>;

/// (count, users) per unordered bigram by direct scanning.
pub fn brute_bigrams(docs: &[UserDocument]) -> (BigramCounts, u64) {
    let mut out = BigramCounts::new();
    let mut total = 0;
    for d in docs {
        let mut seen = BTreeSet::new();
        for t in &d.tweets {
            for i in 1..t.tokens.len() {
                let (a, b) = (t.tokens[i - 1].clone(), t.tokens[i].clone());
                let key = if a <= b { (a, b) } else { (b, a) };
                out.entry(key.clone()).or_default().0 += 1;
                total += 1;
                if seen.insert(key.clone()) {
                    out.get_mut(&key).unwrap().1 += 1;
                }
            }
        }
    }
    (out, total)
}

/// Random pattern over the small vocabulary.
pub fn random_pattern(rng: &mut ChaCha8Rng) -> Pattern {
    let wild = rng.random_range(0..3);
    let slots: Vec<&str> = (0..3)
        .map(|i| {
            if i == wild {
                "*"
            } else {
                SMALL_VOCAB[rng.random_range(0..SMALL_VOCAB.len())]
            }
        })
        .collect();
    Pattern::from_strs(&slots, Origin::Mixed).unwrap()
}

/// Per-user match counts and filler set by comparing every token triple.
pub fn brute_pattern_counts(
    pattern: &Pattern,
    docs: &[UserDocument],
) -> (Vec<u64>, BTreeSet<String>) {
    let slots = pattern.slot_strs();
    let mut fillers = BTreeSet::new();
    let counts = docs
        .iter()
        .map(|d| {
            let mut c = 0;
            for t in &d.tweets {
                let tk = &t.tokens;
                for s in 0..tk.len().saturating_sub(2) {
                    let mut ok = true;
                    let mut filler = None;
                    for k in 0..3 {
                        if slots[k] == "*" {
                            filler = Some(tk[s + k].clone());
                        } else if slots[k] != tk[s + k] {
                            ok = false;
                        }
                    }
                    if ok {
                        c += 1;
                        fillers.insert(filler.unwrap());
                    }
                }
            }
            c
        })
        .collect();
    (counts, fillers)
}

// --- statistics ---------------------------------------------------------------

/// Welch t, Welch-Satterthwaite df and two-sided p via the Student t CDF.
pub fn welch_oracle(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let var = |x: &[f64]| {
        let m = mean(x);
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
    };
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (var(a) / na, var(b) / nb);
    let t = (mean(a) - mean(b)) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).unwrap();
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    (t, df, p)
}

// --- stumps -------------------------------------------------------------------

/// Exhaustive best single split: every feature, every midpoint between
/// consecutive distinct values; first strictly best wins.
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
    /// Target share left and right.
    pub left_p: f64,
    pub right_p: f64,
}

fn impurity(target: f64, total: f64) -> f64 {
    if total == 0.0 {
        return 0.0;
    }
    let p = target / total;
    2.0 * p * (1.0 - p)
}

pub fn best_stump(x: &[Vec<f64>], y: &[bool], min_leaf: usize) -> Option<Stump> {
    let n = y.len() as f64;
    let pos = y.iter().filter(|&&v| v).count() as f64;
    let parent = impurity(pos, n);
    let d = x[0].len();
    let mut best: Option<Stump> = None;
    for f in 0..d {
        let mut values: Vec<f64> = x.iter().map(|r| r[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (mut ln, mut lp, mut rn, mut rp) = (0.0, 0.0, 0.0, 0.0);
            for (r, &label) in x.iter().zip(y) {
                let add = if label { 1.0 } else { 0.0 };
                if r[f] <= t {
                    ln += 1.0;
                    lp += add;
                } else {
                    rn += 1.0;
                    rp += add;
                }
            }
            if (ln as usize) < min_leaf || (rn as usize) < min_leaf {
                continue;
            }
            let gain = parent - ln / n * impurity(lp, ln) - rn / n * impurity(rp, rn);
            if best.as_ref().is_none_or(|b| gain > b.gain + 1e-12) {
                best = Some(Stump {
                    feature: f,
                    threshold: t,
                    gain,
                    left_p: lp / ln,
                    right_p: rp / rn,
                });
            }
        }
    }
    best
}
