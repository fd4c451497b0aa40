//! Randomized decision-tree ensemble (Gini splits, bootstrap, sqrt feature
//! subsampling), stratified cross-validation and impurity-based importance.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Group;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::util::{mix_seed, round_sig};

pub const FOREST_VERSION: &str = "forest-v1";

/// Minimum Gini decrease for a split to count as an improvement.
pub const MIN_GAIN: f64 = 1e-12;

const TARGET: usize = 1;
const CONTROL: usize = 0;

fn class_index(g: Group) -> usize {
    match g {
        Group::Target => TARGET,
        Group::Control => CONTROL,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    All,
    Fixed(usize),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        let m = match self {
            MaxFeatures::Sqrt => (d as f64).sqrt().floor() as usize,
            MaxFeatures::All => d,
            MaxFeatures::Fixed(m) => m,
        };
        m.clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub max_depth: Option<usize>,
    /// Weight classes inversely to their frequency in the Gini computation.
    pub balanced_class_weight: bool,
    /// Subsample control rows to the target count before each tree's bootstrap.
    pub downsample_control: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 128,
            min_samples_leaf: 3,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            max_depth: None,
            balanced_class_weight: false,
            downsample_control: false,
            seed: 0,
        }
    }
}

impl ForestConfig {
    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::invalid("n_trees must be at least 1"));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::invalid("min_samples_leaf must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Training rows reaching the leaf, per class `[control, target]`.
        counts: [usize; 2],
        /// Weighted share of the target class.
        target_probability: f64,
    },
}

/// Arena of nodes, root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
                Node::Leaf { .. } => return i,
            }
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf {
                target_probability, ..
            } => *target_probability,
            Node::Split { .. } => unreachable!("leaf_index returns a leaf"),
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedForest {
    pub version: String,
    pub config: ForestConfig,
    pub columns: Vec<String>,
    pub trees: Vec<Tree>,
    /// Per-column summed impurity decrease, one vector per tree.
    #[serde(default)]
    pub importance_by_tree: Vec<Vec<f64>>,
}

fn gini(w: [f64; 2]) -> f64 {
    let total = w[0] + w[1];
    if total <= 0.0 {
        return 0.0;
    }
    let p0 = w[0] / total;
    let p1 = w[1] / total;
    1.0 - p0 * p0 - p1 * p1
}

/// Gini decrease of a split, as a fraction of the node weight.
pub fn split_gain(parent: [f64; 2], left: [f64; 2]) -> f64 {
    let right = [parent[0] - left[0], parent[1] - left[1]];
    let w = parent[0] + parent[1];
    let wl = left[0] + left[1];
    let wr = right[0] + right[1];
    gini(parent) - (wl / w) * gini(left) - (wr / w) * gini(right)
}

struct TrainingData<'a> {
    /// Column-major feature values.
    columns: Vec<Vec<f64>>,
    classes: Vec<usize>,
    class_weight: [f64; 2],
    config: &'a ForestConfig,
}

#[derive(Debug, Clone, Copy)]
struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl TrainingData<'_> {
    fn weights(&self, rows: &[usize]) -> ([f64; 2], [usize; 2]) {
        let mut w = [0.0; 2];
        let mut c = [0usize; 2];
        for &r in rows {
            let k = self.classes[r];
            w[k] += self.class_weight[k];
            c[k] += 1;
        }
        (w, c)
    }

    fn best_split_on(
        &self,
        feature: usize,
        rows: &[usize],
        parent: [f64; 2],
        buf: &mut Vec<(f64, usize)>,
    ) -> Option<BestSplit> {
        let col = &self.columns[feature];
        let first = col[rows[0]];
        if rows.iter().all(|&r| col[r] == first) {
            return None;
        }
        buf.clear();
        buf.extend(rows.iter().map(|&r| (col[r], self.classes[r])));
        buf.sort_by(|a, b| a.0.total_cmp(&b.0));

        let min_leaf = self.config.min_samples_leaf;
        let n = buf.len();
        let mut left = [0.0; 2];
        let mut best: Option<BestSplit> = None;
        for i in 0..n - 1 {
            let (v, k) = buf[i];
            left[k] += self.class_weight[k];
            let next = buf[i + 1].0;
            if v == next || i + 1 < min_leaf || n - i - 1 < min_leaf {
                continue;
            }
            let gain = split_gain(parent, left);
            if best.is_none_or(|b| gain > b.gain) {
                let mut threshold = (v + next) / 2.0;
                if threshold >= next {
                    threshold = v;
                }
                best = Some(BestSplit {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
        best
    }

    fn build(&self, sample: Vec<usize>, rng: &mut ChaCha8Rng) -> (Tree, Vec<f64>) {
        let d = self.columns.len();
        let mtry = self.config.max_features.resolve(d);
        let mut nodes: Vec<Node> = Vec::new();
        let mut importance = vec![0.0; d];
        let mut stack: Vec<(usize, Vec<usize>, usize)> = vec![(0, sample, 0)];
        nodes.push(Node::Leaf {
            counts: [0, 0],
            target_probability: 0.0,
        });
        let mut feature_pool: Vec<usize> = (0..d).collect();
        let mut buf = Vec::new();

        while let Some((slot, rows, depth)) = stack.pop() {
            let (w, counts) = self.weights(&rows);
            let total = w[0] + w[1];
            let leaf = Node::Leaf {
                counts,
                target_probability: if total > 0.0 { w[TARGET] / total } else { 0.0 },
            };
            let pure = counts[0] == 0 || counts[1] == 0;
            let too_small = rows.len() < 2 * self.config.min_samples_leaf;
            let too_deep = self.config.max_depth.is_some_and(|m| depth >= m);
            if pure || too_small || too_deep {
                nodes[slot] = leaf;
                continue;
            }

            // partial Fisher-Yates; evaluate candidates in ascending column order
            for i in 0..mtry {
                let j = rng.random_range(i..d);
                feature_pool.swap(i, j);
            }
            let mut candidates = feature_pool[..mtry].to_vec();
            candidates.sort_unstable();

            let mut best: Option<BestSplit> = None;
            for &f in &candidates {
                if let Some(s) = self.best_split_on(f, &rows, w, &mut buf) {
                    if best.is_none_or(|b| s.gain > b.gain) {
                        best = Some(s);
                    }
                }
            }
            let Some(best) = best.filter(|b| b.gain > MIN_GAIN) else {
                nodes[slot] = leaf;
                continue;
            };

            let col = &self.columns[best.feature];
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&r| col[r] <= best.threshold);
            importance[best.feature] += total * best.gain;

            let left = nodes.len();
            let right = left + 1;
            nodes.push(leaf.clone());
            nodes.push(leaf);
            nodes[slot] = Node::Split {
                feature: best.feature,
                threshold: best.threshold,
                left,
                right,
            };
            stack.push((right, right_rows, depth + 1));
            stack.push((left, left_rows, depth + 1));
        }
        (Tree { nodes }, importance)
    }
}

/// Rows a tree is trained on: optional control downsampling, then a
/// bootstrap draw (or the rows themselves when bootstrap is off).
pub fn tree_sample(labels: &[Group], config: &ForestConfig, tree_seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(tree_seed, 1));
    let mut pool: Vec<usize> = (0..labels.len()).collect();
    if config.downsample_control {
        let targets: Vec<usize> = pool
            .iter()
            .copied()
            .filter(|&i| labels[i] == Group::Target)
            .collect();
        let mut controls: Vec<usize> = pool
            .iter()
            .copied()
            .filter(|&i| labels[i] == Group::Control)
            .collect();
        controls.shuffle(&mut rng);
        controls.truncate(targets.len().max(1));
        pool = targets;
        pool.extend(controls);
        pool.sort_unstable();
    }
    if config.bootstrap {
        let n = pool.len();
        (0..n).map(|_| pool[rng.random_range(0..n)]).collect()
    } else {
        pool
    }
}

pub fn tree_seed(config: &ForestConfig, tree: usize) -> u64 {
    mix_seed(config.seed, tree as u64)
}

fn check_matrix(matrix: &FeatureMatrix) -> Result<()> {
    for (r, row) in matrix.rows.iter().enumerate() {
        if row.len() != matrix.columns.len() {
            return Err(Error::Dimension {
                expected: matrix.columns.len(),
                got: row.len(),
            });
        }
        if let Some(c) = row.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { row: r, col: c });
        }
    }
    let has = |g| matrix.labels.contains(&g);
    if !has(Group::Target) || !has(Group::Control) {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Trains the ensemble; trees are built in parallel from per-tree seeds, so
/// the result does not depend on the thread count.
pub fn train_forest(matrix: &FeatureMatrix, config: &ForestConfig) -> Result<TrainedForest> {
    config.validate()?;
    check_matrix(matrix)?;
    let d = matrix.n_cols();
    let columns: Vec<Vec<f64>> = (0..d)
        .map(|c| matrix.rows.iter().map(|r| r[c]).collect())
        .collect();
    let classes: Vec<usize> = matrix.labels.iter().map(|&g| class_index(g)).collect();
    let class_weight = if config.balanced_class_weight {
        let n = classes.len() as f64;
        let mut counts = [0.0; 2];
        classes.iter().for_each(|&k| counts[k] += 1.0);
        [n / (2.0 * counts[0]), n / (2.0 * counts[1])]
    } else {
        [1.0, 1.0]
    };
    let data = TrainingData {
        columns,
        classes,
        class_weight,
        config,
    };

    let built: Vec<(Tree, Vec<f64>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let seed = tree_seed(config, t);
            let sample = tree_sample(&matrix.labels, config, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 2));
            data.build(sample, &mut rng)
        })
        .collect();
    let (trees, importance_by_tree) = built.into_iter().unzip();
    Ok(TrainedForest {
        version: FOREST_VERSION.to_string(),
        config: config.clone(),
        columns: matrix.columns.clone(),
        trees,
        importance_by_tree,
    })
}

impl TrainedForest {
    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let forest: TrainedForest = serde_json::from_str(text)?;
        if forest.version != FOREST_VERSION {
            return Err(Error::Parse(format!(
                "unsupported model version `{}`",
                forest.version
            )));
        }
        Ok(forest)
    }
}

/// Mean leaf target frequency over trees; label is target when >= 0.5.
pub fn predict(forest: &TrainedForest, x: &[f64]) -> Result<(Group, f64)> {
    if x.len() != forest.n_features() {
        return Err(Error::Dimension {
            expected: forest.n_features(),
            got: x.len(),
        });
    }
    let p =
        forest.trees.iter().map(|t| t.predict_proba(x)).sum::<f64>() / forest.trees.len() as f64;
    let label = if p >= 0.5 {
        Group::Target
    } else {
        Group::Control
    };
    Ok((label, p))
}

pub fn predict_matrix(forest: &TrainedForest, matrix: &FeatureMatrix) -> Result<Vec<(Group, f64)>> {
    matrix.rows.par_iter().map(|r| predict(forest, r)).collect()
}

/// Mean decrease in Gini impurity per column, normalized to sum 1, descending.
pub fn feature_importance(forest: &TrainedForest) -> Vec<(String, f64)> {
    let d = forest.n_features();
    let mut total = vec![0.0; d];
    for per_tree in &forest.importance_by_tree {
        let sum: f64 = per_tree.iter().sum();
        if sum > 0.0 {
            for (t, v) in total.iter_mut().zip(per_tree) {
                *t += v / sum;
            }
        }
    }
    let sum: f64 = total.iter().sum();
    if sum > 0.0 {
        total.iter_mut().for_each(|v| *v /= sum);
    }
    let mut ranked: Vec<(String, f64)> = forest.columns.iter().cloned().zip(total).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_test: usize,
    pub f1_target: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub target: ClassMetrics,
    pub control: ClassMetrics,
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Rows are actual `[target, control]`, columns predicted in the same order.
    pub confusion: [[usize; 2]; 2],
    #[serde(default)]
    pub folds: Vec<FoldMetrics>,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl EvalReport {
    pub fn from_predictions(actual: &[Group], predicted: &[Group]) -> EvalReport {
        let mut confusion = [[0usize; 2]; 2];
        let idx = |g: Group| match g {
            Group::Target => 0,
            Group::Control => 1,
        };
        for (&a, &p) in actual.iter().zip(predicted) {
            confusion[idx(a)][idx(p)] += 1;
        }
        let class = |k: usize| {
            let tp = confusion[k][k];
            let predicted_k = confusion[0][k] + confusion[1][k];
            let support = confusion[k][0] + confusion[k][1];
            let precision = ratio(tp, predicted_k);
            let recall = ratio(tp, support);
            ClassMetrics {
                precision,
                recall,
                f1: f1_score(precision, recall),
                support,
            }
        };
        let target = class(0);
        let control = class(1);
        EvalReport {
            target,
            control,
            accuracy: ratio(confusion[0][0] + confusion[1][1], actual.len()),
            macro_f1: (target.f1 + control.f1) / 2.0,
            confusion,
            folds: Vec::new(),
        }
    }

    /// Copy with every float rounded to 12 significant digits.
    pub fn rounded(&self) -> EvalReport {
        let r = |m: ClassMetrics| ClassMetrics {
            precision: round_sig(m.precision),
            recall: round_sig(m.recall),
            f1: round_sig(m.f1),
            support: m.support,
        };
        EvalReport {
            target: r(self.target),
            control: r(self.control),
            accuracy: round_sig(self.accuracy),
            macro_f1: round_sig(self.macro_f1),
            confusion: self.confusion,
            folds: self
                .folds
                .iter()
                .map(|f| FoldMetrics {
                    f1_target: round_sig(f.f1_target),
                    accuracy: round_sig(f.accuracy),
                    ..f.clone()
                })
                .collect(),
        }
    }
}

/// Stratified fold assignment: each class is shuffled with `seed` and dealt
/// round-robin, so per-class fold sizes differ by at most one.
pub fn stratified_folds(labels: &[Group], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    let mut folds = vec![Vec::new(); k];
    for (stream, class) in [Group::Target, Group::Control].into_iter().enumerate() {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::ClassTooSmall {
                class: class.as_str(),
                size: members.len(),
                folds: k,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, stream as u64));
        members.shuffle(&mut rng);
        for (i, m) in members.into_iter().enumerate() {
            folds[i % k].push(m);
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Runs `fit_predict(train_rows, test_rows) -> predictions` over stratified
/// folds and pools the predictions into one report.
pub fn cross_validate_with<F>(
    labels: &[Group],
    k: usize,
    seed: u64,
    mut fit_predict: F,
) -> Result<EvalReport>
where
    F: FnMut(usize, &[usize], &[usize]) -> Result<Vec<Group>>,
{
    let folds = stratified_folds(labels, k, seed)?;
    let mut actual = Vec::new();
    let mut predicted = Vec::new();
    let mut fold_metrics = Vec::new();
    for (f, test) in folds.iter().enumerate() {
        let train: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, rows)| rows.iter().copied())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let preds = fit_predict(f, &train, test)?;
        let truth: Vec<Group> = test.iter().map(|&i| labels[i]).collect();
        let fold_report = EvalReport::from_predictions(&truth, &preds);
        fold_metrics.push(FoldMetrics {
            fold: f,
            n_test: test.len(),
            f1_target: fold_report.target.f1,
            accuracy: fold_report.accuracy,
        });
        actual.extend(truth);
        predicted.extend(preds);
    }
    let mut report = EvalReport::from_predictions(&actual, &predicted);
    report.folds = fold_metrics;
    Ok(report)
}

/// Stratified k-fold evaluation of the forest on a fixed feature matrix.
pub fn cross_validate(
    matrix: &FeatureMatrix,
    config: &ForestConfig,
    k: usize,
    seed: u64,
) -> Result<EvalReport> {
    cross_validate_with(&matrix.labels, k, seed, |fold, train, test| {
        let fold_config = ForestConfig {
            seed: mix_seed(config.seed, 1000 + fold as u64),
            ..config.clone()
        };
        let forest = train_forest(&matrix.select_rows(train), &fold_config)?;
        Ok(predict_matrix(&forest, &matrix.select_rows(test))?
            .into_iter()
            .map(|(g, _)| g)
            .collect())
    })
}
