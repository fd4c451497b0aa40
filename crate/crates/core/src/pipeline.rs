//! End-to-end extraction, ranking and cross-validated evaluation.

use serde::{Deserialize, Serialize};

use crate::attention::{
    merge_gender_patterns, rank_patterns, AttentionInput, RankedPattern, DEFAULT_TOP_N,
};
use crate::boosting::{boost, TopicGraph};
use crate::classifier::{
    cross_validate_with, predict_matrix, train_forest, EvalReport, ForestConfig, TrainedForest,
};
use crate::corpus::{Gender, Group, UserDocument, DEFAULT_WINDOW_DAYS};
use crate::error::{Error, Result};
use crate::features::{pattern_matrix, TfidfVectorizer, DEFAULT_VOCAB_CAP};
use crate::graphmetrics::{
    select_word_sets, NodeScores, WordSets, DEFAULT_MAX_ITER, DEFAULT_TH_CC, DEFAULT_TH_EC,
    DEFAULT_TOL,
};
use crate::patterns::{enumerate_patterns, Origin, Pattern, DEFAULT_MIN_COUNT};
use crate::util::mix_seed;
use crate::wordgraph::{build_word_graph, WordGraph, DEFAULT_MIN_EDGE_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// One model per gender, each on its own gender's patterns and users.
    Separated,
    /// One model on all users with the merged female and male pattern sets.
    Mixed,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "separated" => Ok(Mode::Separated),
            "mixed" => Ok(Mode::Mixed),
            other => Err(Error::Parse(format!(
                "unknown mode `{other}` (expected separated|mixed)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub window_days: u32,
    pub th_ec: f64,
    pub th_cc: f64,
    pub min_edge_count: u64,
    pub min_count: u64,
    pub top_n: usize,
    pub folds: usize,
    pub forest: ForestConfig,
    pub tfidf_orders: Vec<usize>,
    pub tfidf_vocab_cap: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: Mode::Mixed,
            window_days: DEFAULT_WINDOW_DAYS,
            th_ec: DEFAULT_TH_EC,
            th_cc: DEFAULT_TH_CC,
            min_edge_count: DEFAULT_MIN_EDGE_COUNT,
            min_count: DEFAULT_MIN_COUNT,
            top_n: DEFAULT_TOP_N,
            folds: 5,
            forest: ForestConfig::default(),
            tfidf_orders: vec![1, 2],
            tfidf_vocab_cap: DEFAULT_VOCAB_CAP,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Forest config carrying the run seed.
    pub fn seeded_forest(&self) -> ForestConfig {
        ForestConfig {
            seed: self.seed,
            ..self.forest.clone()
        }
    }
}

/// Every intermediate of one extraction run.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub gender: Option<Gender>,
    pub target_graph: WordGraph,
    pub control_graph: WordGraph,
    pub topic: TopicGraph,
    pub scores: NodeScores,
    pub word_sets: WordSets,
    pub ranked: Vec<RankedPattern>,
}

fn origin_of(gender: Option<Gender>) -> Origin {
    match gender {
        Some(Gender::Female) => Origin::Female,
        Some(Gender::Male) => Origin::Male,
        _ => Origin::Mixed,
    }
}

fn pick<'a>(
    docs: &[&'a UserDocument],
    group: Group,
    gender: Option<Gender>,
) -> Vec<&'a UserDocument> {
    docs.iter()
        .copied()
        .filter(|d| d.group == group && gender.is_none_or(|g| d.gender == g))
        .collect()
}

/// Graph, boosting, word sets, templates and ranking for one gender (or all
/// users when `gender` is `None`) over `docs`.
pub fn extract(
    docs: &[&UserDocument],
    gender: Option<Gender>,
    config: &PipelineConfig,
) -> Result<Extraction> {
    let target = pick(docs, Group::Target, gender);
    let control = pick(docs, Group::Control, gender);
    let target_graph = build_word_graph(&target, config.min_edge_count)?;
    let control_graph = build_word_graph(&control, config.min_edge_count)?;
    let topic = boost(&target_graph, &control_graph);
    if topic.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let scores = NodeScores::compute(&topic, config.tol, config.max_iter)?;
    let word_sets = select_word_sets(&scores, config.th_ec, config.th_cc)?;
    let patterns = enumerate_patterns(&word_sets, &target, config.min_count, origin_of(gender))?;
    let female_target = pick(docs, Group::Target, Some(Gender::Female));
    let male_target = pick(docs, Group::Target, Some(Gender::Male));
    let input = AttentionInput {
        focus: &target,
        control: &control,
        female_target: &female_target,
        male_target: &male_target,
        target_gender: gender,
    };
    let ranked = rank_patterns(&patterns, &input)?;
    Ok(Extraction {
        gender,
        target_graph,
        control_graph,
        topic,
        scores,
        word_sets,
        ranked,
    })
}

fn has_both_groups(docs: &[&UserDocument], gender: Gender) -> bool {
    let of = |g| docs.iter().any(|d| d.gender == gender && d.group == g);
    of(Group::Target) && of(Group::Control)
}

/// Extraction runs behind a model: one for `Some(gender)`; for `None` the
/// female and male runs (falling back to a gender-blind run when neither
/// gender has both groups).
pub fn extractions(
    docs: &[&UserDocument],
    gender: Option<Gender>,
    config: &PipelineConfig,
) -> Result<Vec<Extraction>> {
    match gender {
        Some(g) => Ok(vec![extract(docs, Some(g), config)?]),
        None => {
            let genders: Vec<Gender> = [Gender::Female, Gender::Male]
                .into_iter()
                .filter(|&g| has_both_groups(docs, g))
                .collect();
            if genders.is_empty() {
                Ok(vec![extract(docs, None, config)?])
            } else {
                genders
                    .into_iter()
                    .map(|g| extract(docs, Some(g), config))
                    .collect()
            }
        }
    }
}

/// Feature patterns for a model: the top `top_n` of a single run, or the
/// female-then-male merge.
pub fn model_patterns(runs: &[Extraction], top_n: usize) -> Vec<Pattern> {
    match runs {
        [single] => single
            .ranked
            .iter()
            .take(top_n)
            .map(|r| r.pattern.clone())
            .collect(),
        _ => {
            let of = |g| {
                runs.iter()
                    .find(|r| r.gender == Some(g))
                    .map_or(&[][..], |r| &r.ranked[..])
            };
            merge_gender_patterns(of(Gender::Female), of(Gender::Male), top_n)
        }
    }
}

/// Users a model is trained and evaluated on.
pub fn population<'a>(docs: &[&'a UserDocument], gender: Option<Gender>) -> Vec<&'a UserDocument> {
    docs.iter()
        .copied()
        .filter(|d| gender.is_none_or(|g| d.gender == g))
        .collect()
}

fn fold_forest(config: &PipelineConfig, fold: usize) -> ForestConfig {
    ForestConfig {
        seed: mix_seed(config.seed, 1000 + fold as u64),
        ..config.forest.clone()
    }
}

fn subset<'a>(docs: &[&'a UserDocument], rows: &[usize]) -> Vec<&'a UserDocument> {
    rows.iter().map(|&i| docs[i]).collect()
}

/// Stratified k-fold evaluation of the bag-of-pattern model over
/// `population(docs, gender)`. Patterns are re-extracted from each training
/// fold so held-out users never inform them; users outside the population
/// (the other gender) stay visible to extraction for CGF.
pub fn evaluate_patterns(
    docs: &[&UserDocument],
    gender: Option<Gender>,
    config: &PipelineConfig,
) -> Result<EvalReport> {
    let pop = population(docs, gender);
    let outside: Vec<&UserDocument> = docs
        .iter()
        .copied()
        .filter(|d| gender.is_some_and(|g| d.gender != g))
        .collect();
    let labels: Vec<Group> = pop.iter().map(|d| d.group).collect();
    cross_validate_with(&labels, config.folds, config.seed, |fold, train, test| {
        let train_docs = subset(&pop, train);
        let mut visible = train_docs.clone();
        visible.extend(outside.iter().copied());
        let runs = extractions(&visible, gender, config)?;
        let patterns = model_patterns(&runs, config.top_n);
        let forest = train_forest(
            &pattern_matrix(&train_docs, &patterns),
            &fold_forest(config, fold),
        )?;
        let test_matrix = pattern_matrix(&subset(&pop, test), &patterns);
        Ok(predict_matrix(&forest, &test_matrix)?
            .into_iter()
            .map(|(g, _)| g)
            .collect())
    })
}

/// Same folds and forest with TF-IDF n-gram features fitted per training fold.
pub fn evaluate_tfidf(docs: &[&UserDocument], config: &PipelineConfig) -> Result<EvalReport> {
    let labels: Vec<Group> = docs.iter().map(|d| d.group).collect();
    cross_validate_with(&labels, config.folds, config.seed, |fold, train, test| {
        let train_docs = subset(docs, train);
        let vectorizer =
            TfidfVectorizer::fit(&train_docs, &config.tfidf_orders, config.tfidf_vocab_cap)?;
        let forest = train_forest(
            &vectorizer.transform(&train_docs),
            &fold_forest(config, fold),
        )?;
        let test_matrix = vectorizer.transform(&subset(docs, test));
        Ok(predict_matrix(&forest, &test_matrix)?
            .into_iter()
            .map(|(g, _)| g)
            .collect())
    })
}

/// Everything produced for one model (one gender, or the mixed model).
#[derive(Debug, Clone)]
pub struct ModelRun {
    /// `None` for the mixed model.
    pub gender: Option<Gender>,
    pub runs: Vec<Extraction>,
    pub patterns: Vec<Pattern>,
    pub forest: TrainedForest,
    pub pattern_eval: EvalReport,
    pub tfidf_eval: EvalReport,
}

/// Full-data extraction and model plus cross-validated pattern and TF-IDF
/// evaluations for one model.
pub fn run_model(
    docs: &[&UserDocument],
    gender: Option<Gender>,
    config: &PipelineConfig,
) -> Result<ModelRun> {
    let pop = population(docs, gender);
    let runs = extractions(docs, gender, config)?;
    let patterns = model_patterns(&runs, config.top_n);
    let forest = train_forest(&pattern_matrix(&pop, &patterns), &config.seeded_forest())?;
    let pattern_eval = evaluate_patterns(docs, gender, config)?;
    let tfidf_eval = evaluate_tfidf(&pop, config)?;
    Ok(ModelRun {
        gender,
        runs,
        patterns,
        forest,
        pattern_eval,
        tfidf_eval,
    })
}

/// Models for the configured mode: female then male, or one mixed model.
pub fn run(docs: &[&UserDocument], config: &PipelineConfig) -> Result<Vec<ModelRun>> {
    match config.mode {
        Mode::Mixed => Ok(vec![run_model(docs, None, config)?]),
        Mode::Separated => [Gender::Female, Gender::Male]
            .into_iter()
            .filter(|&g| has_both_groups(docs, g))
            .map(|g| run_model(docs, Some(g), config))
            .collect::<Result<Vec<_>>>()
            .and_then(|models| {
                if models.is_empty() {
                    Err(Error::invalid(
                        "separated mode needs a gender with both target and control users",
                    ))
                } else {
                    Ok(models)
                }
            }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;
    use crate::synth::{demo_config, generate};

    fn corpus(seed: u64) -> Corpus {
        let cfg = crate::synth::SynthConfig {
            n_target_users: 40,
            n_control_users: 60,
            ..demo_config(seed)
        };
        generate(&cfg).unwrap().apply_window(seed).unwrap()
    }

    fn small_config(mode: Mode) -> PipelineConfig {
        PipelineConfig {
            mode,
            folds: 3,
            forest: ForestConfig {
                n_trees: 16,
                ..ForestConfig::default()
            },
            seed: 5,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn mode_parses() {
        assert_eq!("mixed".parse::<Mode>().unwrap(), Mode::Mixed);
        assert_eq!("separated".parse::<Mode>().unwrap(), Mode::Separated);
        assert!("both".parse::<Mode>().is_err());
    }

    #[test]
    fn mixed_merges_both_gender_runs() {
        let c = corpus(1);
        let docs: Vec<&UserDocument> = c.docs.iter().collect();
        let models = run(&docs, &small_config(Mode::Mixed)).unwrap();
        assert_eq!(models.len(), 1);
        let m = &models[0];
        assert_eq!(m.gender, None);
        let genders: Vec<Option<Gender>> = m.runs.iter().map(|r| r.gender).collect();
        assert_eq!(genders, vec![Some(Gender::Female), Some(Gender::Male)]);
        assert_eq!(m.forest.columns.len(), m.patterns.len());
        assert_eq!(m.pattern_eval.folds.len(), 3);
        assert_eq!(
            m.pattern_eval.confusion.iter().flatten().sum::<usize>(),
            docs.len()
        );
    }

    #[test]
    fn separated_trains_per_gender() {
        let c = corpus(2);
        let docs: Vec<&UserDocument> = c.docs.iter().collect();
        let models = run(&docs, &small_config(Mode::Separated)).unwrap();
        assert_eq!(
            models.iter().map(|m| m.gender).collect::<Vec<_>>(),
            vec![Some(Gender::Female), Some(Gender::Male)]
        );
        for m in &models {
            let g = m.gender.unwrap();
            let n = docs.iter().filter(|d| d.gender == g).count();
            assert_eq!(m.pattern_eval.confusion.iter().flatten().sum::<usize>(), n);
            assert_eq!(m.runs.len(), 1);
            let origin = origin_of(Some(g));
            assert!(m.patterns.iter().all(|p| p.origin == origin));
        }
    }

    #[test]
    fn deterministic() {
        let c = corpus(3);
        let docs: Vec<&UserDocument> = c.docs.iter().collect();
        let cfg = small_config(Mode::Mixed);
        let a = run_model(&docs, None, &cfg).unwrap();
        let b = run_model(&docs, None, &cfg).unwrap();
        assert_eq!(a.patterns, b.patterns);
        assert_eq!(a.forest, b.forest);
        assert_eq!(a.pattern_eval, b.pattern_eval);
        assert_eq!(a.tfidf_eval, b.tfidf_eval);
    }

    #[test]
    fn gender_blind_fallback() {
        let mut c = corpus(4);
        c.docs.iter_mut().for_each(|d| d.gender = Gender::Unknown);
        let docs: Vec<&UserDocument> = c.docs.iter().collect();
        let runs = extractions(&docs, None, &small_config(Mode::Mixed)).unwrap();
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].gender, None);
        assert!(runs[0].ranked.iter().all(|r| r.stats.cgf == 0.5));
        assert!(run(&docs, &small_config(Mode::Separated)).is_err());
    }
}
