//! User feature vectors: L1-normalized bags of patterns and a TF-IDF
//! n-gram baseline.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Group, UserDocument};
use crate::error::{Error, Result};
use crate::patterns::{Pattern, PatternIndex};
use crate::util::fmt_sig;

pub const DEFAULT_VOCAB_CAP: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub user_ids: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<Group>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    /// Sub-matrix with the given rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            user_ids: idx.iter().map(|&i| self.user_ids[i].clone()).collect(),
            columns: self.columns.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

fn l1_normalize(v: &mut [f64]) {
    let sum: f64 = v.iter().sum();
    if sum > 0.0 {
        v.iter_mut().for_each(|x| *x /= sum);
    }
}

fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Match counts of each pattern over the user's tweets, divided by their sum.
pub fn featurize_patterns(doc: &UserDocument, patterns: &[Pattern]) -> Vec<f64> {
    featurize_with_index(doc, &PatternIndex::new(patterns))
}

pub fn featurize_with_index(doc: &UserDocument, index: &PatternIndex) -> Vec<f64> {
    let mut v: Vec<f64> = index.count_doc(doc).into_iter().map(|c| c as f64).collect();
    l1_normalize(&mut v);
    v
}

pub fn pattern_matrix(docs: &[&UserDocument], patterns: &[Pattern]) -> FeatureMatrix {
    let index = PatternIndex::new(patterns);
    FeatureMatrix {
        user_ids: docs.iter().map(|d| d.user_id.clone()).collect(),
        columns: patterns.iter().map(Pattern::text).collect(),
        rows: docs
            .par_iter()
            .map(|d| featurize_with_index(d, &index))
            .collect(),
        labels: docs.iter().map(|d| d.group).collect(),
    }
}

fn doc_terms(doc: &UserDocument, orders: &[usize]) -> HashMap<String, u64> {
    let mut terms = HashMap::new();
    for tweet in &doc.tweets {
        for &n in orders {
            if n == 0 {
                continue;
            }
            for gram in tweet.tokens.windows(n) {
                *terms.entry(gram.join(" ")).or_default() += 1;
            }
        }
    }
    terms
}

/// TF-IDF over word n-grams; one document per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfVectorizer {
    pub orders: Vec<usize>,
    pub vocabulary: Vec<String>,
    pub idf: Vec<f64>,
}

impl TfidfVectorizer {
    /// Keeps the `vocab_cap` most frequent terms (ties by term text) and
    /// sets `idf = ln((1 + N) / (1 + df)) + 1`.
    pub fn fit(docs: &[&UserDocument], orders: &[usize], vocab_cap: usize) -> Result<Self> {
        let per_doc: Vec<HashMap<String, u64>> =
            docs.par_iter().map(|d| doc_terms(d, orders)).collect();
        let mut frequency: HashMap<&str, (u64, u64)> = HashMap::new();
        for terms in &per_doc {
            for (t, c) in terms {
                let e = frequency.entry(t.as_str()).or_default();
                e.0 += c;
                e.1 += 1;
            }
        }
        let mut ranked: Vec<(&str, u64, u64)> =
            frequency.into_iter().map(|(t, (c, d))| (t, c, d)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(vocab_cap);
        ranked.sort_by(|a, b| a.0.cmp(b.0));
        if ranked.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let n = docs.len() as f64;
        Ok(TfidfVectorizer {
            orders: orders.to_vec(),
            vocabulary: ranked.iter().map(|(t, _, _)| t.to_string()).collect(),
            idf: ranked
                .iter()
                .map(|&(_, _, df)| ((1.0 + n) / (1.0 + df as f64)).ln() + 1.0)
                .collect(),
        })
    }

    /// Raw term counts aligned with the vocabulary.
    pub fn term_counts(&self, doc: &UserDocument) -> Vec<f64> {
        let terms = doc_terms(doc, &self.orders);
        self.vocabulary
            .iter()
            .map(|t| terms.get(t).copied().unwrap_or(0) as f64)
            .collect()
    }

    pub fn transform_doc(&self, doc: &UserDocument) -> Vec<f64> {
        let mut v = self.term_counts(doc);
        v.iter_mut().zip(&self.idf).for_each(|(x, idf)| *x *= idf);
        l2_normalize(&mut v);
        v
    }

    pub fn transform(&self, docs: &[&UserDocument]) -> FeatureMatrix {
        FeatureMatrix {
            user_ids: docs.iter().map(|d| d.user_id.clone()).collect(),
            columns: self.vocabulary.clone(),
            rows: docs.par_iter().map(|d| self.transform_doc(d)).collect(),
            labels: docs.iter().map(|d| d.group).collect(),
        }
    }
}

pub fn featurize_tfidf(
    docs: &[&UserDocument],
    orders: &[usize],
    vocab_cap: usize,
) -> Result<(TfidfVectorizer, FeatureMatrix)> {
    let vectorizer = TfidfVectorizer::fit(docs, orders, vocab_cap)?;
    let matrix = vectorizer.transform(docs);
    Ok((vectorizer, matrix))
}

#[derive(Serialize, Deserialize)]
struct MatrixHeader {
    columns: Vec<String>,
    users: Vec<String>,
}

pub const HEADER_FILE: &str = "header.json";
pub const VALUES_FILE: &str = "matrix.csv";
pub const LABELS_FILE: &str = "labels.csv";

/// Writes `header.json`, `matrix.csv` and `labels.csv` into `dir`.
pub fn write_matrix(matrix: &FeatureMatrix, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let header = MatrixHeader {
        columns: matrix.columns.clone(),
        users: matrix.user_ids.clone(),
    };
    let mut values = String::new();
    for row in &matrix.rows {
        let cells: Vec<String> = row.iter().map(|&x| fmt_sig(x)).collect();
        values.push_str(&cells.join(","));
        values.push('\n');
    }
    let mut labels = String::from("user_id,label\n");
    for (u, l) in matrix.user_ids.iter().zip(&matrix.labels) {
        labels.push_str(&format!("{u},{l}\n"));
    }
    let files = [
        (
            dir.join(HEADER_FILE),
            serde_json::to_string_pretty(&header)? + "\n",
        ),
        (dir.join(VALUES_FILE), values),
        (dir.join(LABELS_FILE), labels),
    ];
    for (path, content) in &files {
        fs::write(path, content).map_err(|e| Error::io(path, e))?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

pub fn read_matrix(dir: &Path) -> Result<FeatureMatrix> {
    let read = |name: &str| {
        let p = dir.join(name);
        fs::read_to_string(&p).map_err(|e| Error::io(p, e))
    };
    let header: MatrixHeader = serde_json::from_str(&read(HEADER_FILE)?)?;
    let mut rows = Vec::new();
    for (i, line) in read(VALUES_FILE)?.lines().enumerate() {
        let row = if line.is_empty() {
            Vec::new()
        } else {
            line.split(',')
                .map(|c| {
                    c.parse::<f64>().map_err(|_| {
                        Error::Parse(format!("{VALUES_FILE} line {}: bad value `{c}`", i + 1))
                    })
                })
                .collect::<Result<Vec<f64>>>()?
        };
        if row.len() != header.columns.len() {
            return Err(Error::Dimension {
                expected: header.columns.len(),
                got: row.len(),
            });
        }
        rows.push(row);
    }
    let label_map: BTreeMap<String, Group> = read(LABELS_FILE)?
        .lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let (u, g) = l
                .rsplit_once(',')
                .ok_or_else(|| Error::Parse(format!("{LABELS_FILE}: bad line `{l}`")))?;
            Ok((u.to_string(), g.parse()?))
        })
        .collect::<Result<_>>()?;
    let labels = header
        .users
        .iter()
        .map(|u| {
            label_map
                .get(u)
                .copied()
                .ok_or_else(|| Error::Parse(format!("{LABELS_FILE}: no label for `{u}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if rows.len() != header.users.len() {
        return Err(Error::Dimension {
            expected: header.users.len(),
            got: rows.len(),
        });
    }
    Ok(FeatureMatrix {
        user_ids: header.users,
        columns: header.columns,
        rows,
        labels,
    })
}

/// Distinct users per term; exposed for tests.
pub fn document_frequency(docs: &[&UserDocument], orders: &[usize]) -> HashMap<String, usize> {
    let mut df: HashMap<String, usize> = HashMap::new();
    for d in docs {
        let terms: HashSet<String> = doc_terms(d, orders).into_keys().collect();
        for t in terms {
            *df.entry(t).or_default() += 1;
        }
    }
    df
}
