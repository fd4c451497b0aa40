use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use patmine_core::analysis::{
    default_pronouns, first_person_ratio, tense_ttest, top_patterns_report, TenseLexicon,
    TenseTest, TopPatternsReport,
};
use patmine_core::attention::{
    merge_gender_patterns, patterns_to_jsonl, rank_patterns, ranked_to_jsonl, read_pattern_jsonl,
    AttentionInput, RankedPattern,
};
use patmine_core::boosting::{boost, TopicGraph};
use patmine_core::classifier::{
    feature_importance, train_forest, EvalReport, ForestConfig, MaxFeatures, TrainedForest,
};
use patmine_core::corpus::{
    corpus_stats, render_stats_table, write_corpus, Corpus, Gender, Group, UserDocument, STAT_CELLS,
};
use patmine_core::features::{pattern_matrix, read_matrix, write_matrix, FeatureMatrix};
use patmine_core::graphmetrics::{
    select_word_sets, NodeScores, WordSets, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use patmine_core::patterns::{count_matches, enumerate_patterns, Origin, Pattern};
use patmine_core::pipeline::{self, Extraction, ModelRun, PipelineConfig};
use patmine_core::synth::{demo_config, gender_demo_config, generate, SynthConfig};
use patmine_core::util::round_sig;
use patmine_core::wordgraph::{build_word_graph, WordGraph};
use serde::Serialize;

use crate::args::{
    Command, Common, ExtractArgs, ForestArgs, GenderArg, ModeArg, Preset, SynthArgs,
};
use crate::run::{require, CliError, CliResult, Run};

const TARGET_GRAPH: &str = "target_graph.tsv";
const CONTROL_GRAPH: &str = "control_graph.tsv";
const TOPIC_GRAPH: &str = "topic_graph.tsv";
const SCORES: &str = "scores.tsv";
const WORD_SETS: &str = "wordsets.json";
const PATTERNS: &str = "patterns.jsonl";
const RANKED: &str = "ranked.jsonl";
const MERGED: &str = "merged.jsonl";
const FEATURES: &str = "features";
const TFIDF_FEATURES: &str = "tfidf_features";
const MODEL: &str = "model.json";

pub fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Synth(args) => synth(args),
        other => {
            let (mut run, body) = prepare(other)?;
            match body(&mut run) {
                Ok(()) => run.finish(),
                Err(e) => {
                    run.abort();
                    Err(e)
                }
            }
        }
    }
}

type Body = Box<dyn FnOnce(&mut Run) -> CliResult<()>>;

fn check_quantile(flag: &str, q: f64) -> CliResult<()> {
    if (0.0..=1.0).contains(&q) {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "--{flag} must be a quantile in [0, 1], got {q}"
        )))
    }
}

fn check_positive(flag: &str, n: usize) -> CliResult<()> {
    if n == 0 {
        Err(CliError::Usage(format!("--{flag} must be at least 1")))
    } else {
        Ok(())
    }
}

fn forest_config(args: &ForestArgs, seed: u64) -> CliResult<ForestConfig> {
    check_positive("trees", args.trees)?;
    check_positive("min-leaf", args.min_leaf)?;
    Ok(ForestConfig {
        n_trees: args.trees,
        min_samples_leaf: args.min_leaf,
        max_features: MaxFeatures::Sqrt,
        bootstrap: true,
        max_depth: args.max_depth,
        balanced_class_weight: args.balanced_class_weight,
        downsample_control: args.downsample_control,
        seed,
    })
}

fn pipeline_config(
    common: &Common,
    extract: &ExtractArgs,
    forest: &ForestArgs,
    folds: usize,
    mode: ModeArg,
) -> CliResult<PipelineConfig> {
    check_quantile("th-ec", extract.th_ec)?;
    check_quantile("th-cc", extract.th_cc)?;
    check_positive("min-count", extract.min_count as usize)?;
    check_positive("top-n", extract.top_n)?;
    if folds < 2 {
        return Err(CliError::Usage(format!(
            "--folds must be at least 2, got {folds}"
        )));
    }
    Ok(PipelineConfig {
        mode: mode.into(),
        window_days: common.window_days,
        th_ec: extract.th_ec,
        th_cc: extract.th_cc,
        min_edge_count: extract.min_edge_count,
        min_count: extract.min_count,
        top_n: extract.top_n,
        folds,
        forest: forest_config(forest, common.seed)?,
        seed: common.seed,
        ..PipelineConfig::default()
    })
}

fn prepare(command: Command) -> CliResult<(Run, Body)> {
    Ok(match command {
        Command::Synth(_) => unreachable!("handled by execute"),
        Command::Stats { common } => {
            let run = Run::new("stats", &common.out, common.seed, &common)?;
            (run, Box::new(move |run| stats(run, &common)))
        }
        Command::Graph {
            common,
            gender,
            min_edge_count,
        } => {
            let config = serde_json::json!({"common": &common, "gender": gender, "min_edge_count": min_edge_count});
            let run = Run::new("graph", &common.out, common.seed, config)?;
            (
                run,
                Box::new(move |run| graph(run, &common, gender, min_edge_count)),
            )
        }
        Command::Boost {
            out,
            target,
            control,
        } => {
            let run = Run::new("boost", &out, 0, ())?;
            (run, Box::new(move |run| boost_cmd(run, &target, &control)))
        }
        Command::Metrics {
            out,
            topic,
            th_ec,
            th_cc,
        } => {
            check_quantile("th-ec", th_ec)?;
            check_quantile("th-cc", th_cc)?;
            let run = Run::new(
                "metrics",
                &out,
                0,
                serde_json::json!({"th_ec": th_ec, "th_cc": th_cc}),
            )?;
            (run, Box::new(move |run| metrics(run, &topic, th_ec, th_cc)))
        }
        Command::Patterns {
            common,
            gender,
            word_sets,
            min_count,
        } => {
            check_positive("min-count", min_count as usize)?;
            let config =
                serde_json::json!({"common": &common, "gender": gender, "min_count": min_count});
            let run = Run::new("patterns", &common.out, common.seed, config)?;
            (
                run,
                Box::new(move |run| patterns_cmd(run, &common, gender, &word_sets, min_count)),
            )
        }
        Command::Rank {
            common,
            gender,
            patterns,
        } => {
            let config = serde_json::json!({"common": &common, "gender": gender});
            let run = Run::new("rank", &common.out, common.seed, config)?;
            (
                run,
                Box::new(move |run| rank(run, &common, gender, &patterns)),
            )
        }
        Command::Merge {
            out,
            female,
            male,
            top_n,
        } => {
            check_positive("top-n", top_n)?;
            let run = Run::new("merge", &out, 0, serde_json::json!({"top_n": top_n}))?;
            (run, Box::new(move |run| merge(run, &female, &male, top_n)))
        }
        Command::Featurize {
            common,
            patterns,
            top_n,
            tfidf,
        } => {
            let config = serde_json::json!({"common": &common, "top_n": top_n, "tfidf": tfidf});
            let run = Run::new("featurize", &common.out, common.seed, config)?;
            (
                run,
                Box::new(move |run| featurize(run, &common, &patterns, top_n, tfidf)),
            )
        }
        Command::Train {
            out,
            features,
            seed,
            forest,
        } => {
            let config = forest_config(&forest, seed)?;
            let run = Run::new("train", &out, seed, &config)?;
            (run, Box::new(move |run| train(run, &features, &config)))
        }
        Command::Eval {
            common,
            extract,
            forest,
            folds,
            mode,
        } => {
            let config = pipeline_config(&common, &extract, &forest, folds, mode)?;
            let run = Run::new("eval", &common.out, common.seed, &config)?;
            (run, Box::new(move |run| eval(run, &common, &config)))
        }
        Command::Report {
            common,
            gender,
            ranked,
            lexicon,
            top,
        } => {
            let config = serde_json::json!({"common": &common, "gender": gender, "top": top});
            let run = Run::new("report", &common.out, common.seed, config)?;
            (
                run,
                Box::new(move |run| report_cmd(run, &common, gender, &ranked, &lexicon, top)),
            )
        }
        Command::Pipeline {
            common,
            extract,
            forest,
            folds,
            mode,
            lexicon,
            top,
        } => {
            let config = pipeline_config(&common, &extract, &forest, folds, mode)?;
            let snapshot = serde_json::json!({"pipeline": &config, "top": top});
            let run = Run::new("pipeline", &common.out, common.seed, snapshot)?;
            (
                run,
                Box::new(move |run| pipeline_cmd(run, &common, &config, &lexicon, top)),
            )
        }
    })
}

// --- synth -------------------------------------------------------------------

fn synth(args: SynthArgs) -> CliResult<()> {
    let mut config: SynthConfig = match &args.config {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::Usage(format!(
                    "missing input for --config: {} does not exist",
                    path.display()
                )));
            }
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        }
        None => match args.preset {
            Preset::Demo => demo_config(0),
            Preset::Gender => gender_demo_config(0),
        },
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let corpus = generate(&config)?;
    let mut buf = Vec::new();
    write_corpus(&corpus, &mut buf)?;
    match &args.out {
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(&buf)
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Internal(format!("cannot write stdout: {e}")))
        }
        Some(_) => {
            let mut run = Run::new("synth", &args.out, config.seed, &config)?;
            let text = String::from_utf8(buf).map_err(|e| CliError::Internal(e.to_string()))?;
            match run.write_text("corpus.jsonl", &text) {
                Ok(()) => run.finish(),
                Err(e) => {
                    run.abort();
                    Err(e)
                }
            }
        }
    }
}

// --- stats -------------------------------------------------------------------

#[derive(Serialize)]
struct StatsOutput {
    window_days: u32,
    cells: BTreeMap<String, patmine_core::corpus::CohortStats>,
}

fn write_stats(run: &mut Run, corpus: &Corpus) -> CliResult<()> {
    let cells = corpus_stats(corpus);
    debug_assert!(cells.len() == STAT_CELLS.len());
    run.write_text("stats.txt", &render_stats_table(&cells))?;
    run.write_json(
        "stats.json",
        &StatsOutput {
            window_days: corpus.window_days,
            cells,
        },
    )
}

fn stats(run: &mut Run, common: &Common) -> CliResult<()> {
    let corpus = run.corpus(common)?;
    write_stats(run, &corpus)
}

// --- graph stages ------------------------------------------------------------

fn select(docs: &[UserDocument], group: Group, gender: Option<Gender>) -> Vec<&UserDocument> {
    docs.iter()
        .filter(|d| d.group == group && gender.is_none_or(|g| d.gender == g))
        .collect()
}

fn graph(
    run: &mut Run,
    common: &Common,
    gender: Option<GenderArg>,
    min_edge_count: u64,
) -> CliResult<()> {
    let corpus = run.corpus(common)?;
    let gender = gender.map(Gender::from);
    let (target, control) = run.time("graph", || -> CliResult<(WordGraph, WordGraph)> {
        Ok((
            build_word_graph(&select(&corpus.docs, Group::Target, gender), min_edge_count)?,
            build_word_graph(
                &select(&corpus.docs, Group::Control, gender),
                min_edge_count,
            )?,
        ))
    })?;
    run.write_text(TARGET_GRAPH, &target.to_tsv())?;
    run.write_text(CONTROL_GRAPH, &control.to_tsv())
}

fn boost_cmd(run: &mut Run, target: &Option<PathBuf>, control: &Option<PathBuf>) -> CliResult<()> {
    let target_path = run.input_path(target, TARGET_GRAPH);
    let control_path = run.input_path(control, CONTROL_GRAPH);
    let target = WordGraph::from_tsv(&run.input_text("target", &target_path)?)?;
    let control = WordGraph::from_tsv(&run.input_text("control", &control_path)?)?;
    let topic = run.time("boost", || boost(&target, &control));
    run.write_text(TOPIC_GRAPH, &topic.to_tsv())
}

fn metrics(run: &mut Run, topic: &Option<PathBuf>, th_ec: f64, th_cc: f64) -> CliResult<()> {
    let path = run.input_path(topic, TOPIC_GRAPH);
    let topic = TopicGraph::from_tsv(&run.input_text("topic", &path)?)?;
    let scores = run.time("metrics", || {
        NodeScores::compute(&topic, DEFAULT_TOL, DEFAULT_MAX_ITER)
    })?;
    let sets = select_word_sets(&scores, th_ec, th_cc)?;
    run.write_text(SCORES, &scores.to_tsv())?;
    run.write_json(WORD_SETS, &sets)
}

fn origin_of(gender: Option<Gender>) -> Origin {
    match gender {
        Some(Gender::Female) => Origin::Female,
        Some(Gender::Male) => Origin::Male,
        _ => Origin::Mixed,
    }
}

fn patterns_cmd(
    run: &mut Run,
    common: &Common,
    gender: Option<GenderArg>,
    word_sets: &Option<PathBuf>,
    min_count: u64,
) -> CliResult<()> {
    let sets_path = run.input_path(word_sets, WORD_SETS);
    let sets: WordSets = serde_json::from_str(&run.input_text("word-sets", &sets_path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", sets_path.display())))?;
    let corpus = run.corpus(common)?;
    let gender = gender.map(Gender::from);
    let target = select(&corpus.docs, Group::Target, gender);
    let patterns = run.time("patterns", || {
        enumerate_patterns(&sets, &target, min_count, origin_of(gender))
    })?;
    run.write_text(PATTERNS, &patterns_to_jsonl(&patterns)?)
}

fn read_patterns(run: &mut Run, flag: &str, path: &Path) -> CliResult<Vec<RankedPattern>> {
    let bytes = run.input(flag, path)?;
    Ok(read_pattern_jsonl(&bytes[..])?)
}

fn rank(
    run: &mut Run,
    common: &Common,
    gender: Option<GenderArg>,
    patterns: &Option<PathBuf>,
) -> CliResult<()> {
    let path = run.input_path(patterns, PATTERNS);
    let patterns: Vec<Pattern> = read_patterns(run, "patterns", &path)?
        .into_iter()
        .map(|r| r.pattern)
        .collect();
    let corpus = run.corpus(common)?;
    let gender = gender.map(Gender::from);
    let focus = select(&corpus.docs, Group::Target, gender);
    let control = select(&corpus.docs, Group::Control, gender);
    let female = select(&corpus.docs, Group::Target, Some(Gender::Female));
    let male = select(&corpus.docs, Group::Target, Some(Gender::Male));
    let input = AttentionInput {
        focus: &focus,
        control: &control,
        female_target: &female,
        male_target: &male,
        target_gender: gender,
    };
    let ranked = run.time("rank", || rank_patterns(&patterns, &input))?;
    run.write_text(RANKED, &ranked_to_jsonl(&ranked)?)
}

fn merge(
    run: &mut Run,
    female: &Option<PathBuf>,
    male: &Option<PathBuf>,
    top_n: usize,
) -> CliResult<()> {
    let female = read_patterns(run, "female", require(female, "female")?)?;
    let male = read_patterns(run, "male", require(male, "male")?)?;
    let merged = merge_gender_patterns(&female, &male, top_n);
    run.write_text(MERGED, &patterns_to_jsonl(&merged)?)
}

// --- features, training ------------------------------------------------------

fn write_features(run: &mut Run, rel: &str, matrix: &FeatureMatrix) -> CliResult<()> {
    let dir = run.subdir(rel)?;
    let written = write_matrix(matrix, &dir);
    for name in [
        patmine_core::features::HEADER_FILE,
        patmine_core::features::VALUES_FILE,
        patmine_core::features::LABELS_FILE,
    ] {
        let path = dir.join(name);
        if path.exists() {
            run.adopt(&path)?;
        }
    }
    written.map(|_| ()).map_err(CliError::from)
}

fn featurize(
    run: &mut Run,
    common: &Common,
    patterns: &Option<PathBuf>,
    top_n: Option<usize>,
    tfidf: bool,
) -> CliResult<()> {
    if tfidf {
        let corpus = run.corpus(common)?;
        let docs: Vec<&UserDocument> = corpus.docs.iter().collect();
        let defaults = PipelineConfig::default();
        let (vectorizer, matrix) = run.time("featurize", || {
            patmine_core::features::featurize_tfidf(
                &docs,
                &defaults.tfidf_orders,
                defaults.tfidf_vocab_cap,
            )
        })?;
        run.write_json("tfidf_vectorizer.json", &vectorizer)?;
        return write_features(run, TFIDF_FEATURES, &matrix);
    }
    let path = run.input_path(patterns, RANKED);
    let mut patterns: Vec<Pattern> = read_patterns(run, "patterns", &path)?
        .into_iter()
        .map(|r| r.pattern)
        .collect();
    if let Some(n) = top_n {
        patterns.truncate(n);
    }
    let corpus = run.corpus(common)?;
    let docs: Vec<&UserDocument> = corpus.docs.iter().collect();
    let matrix = run.time("featurize", || pattern_matrix(&docs, &patterns));
    write_features(run, FEATURES, &matrix)
}

#[derive(Serialize)]
struct Importance {
    feature: String,
    importance: f64,
}

#[derive(Serialize)]
struct ImportanceOutput {
    features: Vec<Importance>,
}

fn write_model(run: &mut Run, prefix: &str, forest: &TrainedForest) -> CliResult<()> {
    let mut model: serde_json::Value =
        serde_json::from_str(&forest.to_json()?).map_err(|e| CliError::Internal(e.to_string()))?;
    // the forest file keeps full precision; only run_id is added
    if let serde_json::Value::Object(map) = &mut model {
        map.insert("run_id".into(), serde_json::Value::String(run.digest()));
    }
    let text = serde_json::to_string(&model).map_err(|e| CliError::Internal(e.to_string()))? + "\n";
    run.write_text(&format!("{prefix}{MODEL}"), &text)?;
    let features = feature_importance(forest)
        .into_iter()
        .map(|(feature, importance)| Importance {
            feature,
            importance,
        })
        .collect();
    run.write_json(
        &format!("{prefix}importance.json"),
        &ImportanceOutput { features },
    )
}

fn train(run: &mut Run, features: &Option<PathBuf>, config: &ForestConfig) -> CliResult<()> {
    let dir = run.input_path(features, FEATURES);
    if !dir.is_dir() {
        return Err(CliError::Usage(format!(
            "missing input for --features: {} is not a directory",
            dir.display()
        )));
    }
    for name in [
        patmine_core::features::HEADER_FILE,
        patmine_core::features::VALUES_FILE,
        patmine_core::features::LABELS_FILE,
    ] {
        run.input("features", &dir.join(name))?;
    }
    let matrix = read_matrix(&dir)?;
    let forest = run.time("train", || train_forest(&matrix, config))?;
    write_model(run, "", &forest)
}

// --- evaluation --------------------------------------------------------------

#[derive(Serialize)]
struct ModelEval {
    model: String,
    users: usize,
    patterns: Option<usize>,
    pattern: EvalReport,
    tfidf: EvalReport,
    /// Pattern F1(target) minus TF-IDF F1(target).
    f1_margin: f64,
}

#[derive(Serialize)]
struct EvalOutput {
    mode: pipeline::Mode,
    folds: usize,
    models: Vec<ModelEval>,
}

fn model_tag(gender: Option<Gender>) -> &'static str {
    match gender {
        Some(g) => g.code(),
        None => "mixed",
    }
}

fn model_genders(docs: &[&UserDocument], config: &PipelineConfig) -> Vec<Option<Gender>> {
    match config.mode {
        pipeline::Mode::Mixed => vec![None],
        pipeline::Mode::Separated => [Gender::Female, Gender::Male]
            .into_iter()
            .filter(|&g| {
                let any = |grp| docs.iter().any(|d| d.gender == g && d.group == grp);
                any(Group::Target) && any(Group::Control)
            })
            .map(Some)
            .collect(),
    }
}

fn model_eval(
    docs: &[&UserDocument],
    gender: Option<Gender>,
    patterns: Option<usize>,
    pattern: EvalReport,
    tfidf: EvalReport,
) -> ModelEval {
    ModelEval {
        model: model_tag(gender).to_string(),
        users: pipeline::population(docs, gender).len(),
        patterns,
        f1_margin: round_sig(pattern.target.f1 - tfidf.target.f1),
        pattern: pattern.rounded(),
        tfidf: tfidf.rounded(),
    }
}

fn eval(run: &mut Run, common: &Common, config: &PipelineConfig) -> CliResult<()> {
    let corpus = run.corpus(common)?;
    let docs: Vec<&UserDocument> = corpus.docs.iter().collect();
    let genders = model_genders(&docs, config);
    if genders.is_empty() {
        return Err(CliError::Data(
            "separated mode needs a gender with both target and control users".into(),
        ));
    }
    let mut models = Vec::new();
    for gender in genders {
        let tag = model_tag(gender);
        let pattern = run.time(&format!("eval.{tag}.pattern"), || {
            pipeline::evaluate_patterns(&docs, gender, config)
        })?;
        let pop = pipeline::population(&docs, gender);
        let tfidf = run.time(&format!("eval.{tag}.tfidf"), || {
            pipeline::evaluate_tfidf(&pop, config)
        })?;
        models.push(model_eval(&docs, gender, None, pattern, tfidf));
    }
    run.write_json(
        "eval.json",
        &EvalOutput {
            mode: config.mode,
            folds: config.folds,
            models,
        },
    )
}

// --- report ------------------------------------------------------------------

#[derive(Serialize)]
struct PronounRatio {
    cohort: String,
    ratio: Option<f64>,
    note: Option<String>,
}

#[derive(Serialize)]
struct TenseSection {
    cohort: String,
    tests: Vec<TenseTest>,
    note: Option<String>,
}

#[derive(Serialize)]
struct ReportOutput {
    top_patterns: Vec<TopPatternsReport>,
    first_person_ratio: Vec<PronounRatio>,
    tense: Vec<TenseSection>,
}

fn load_lexicon(run: &mut Run, lexicon: &Option<PathBuf>) -> CliResult<TenseLexicon> {
    match lexicon {
        Some(path) => Ok(TenseLexicon::parse(&run.input_text("lexicon", path)?)?),
        None => Ok(TenseLexicon::starter()),
    }
}

fn cohort_name(gender: Option<Gender>) -> String {
    match gender {
        Some(g) => format!("target.{0} vs control.{0}", g.code()),
        None => "target vs control".to_string(),
    }
}

/// Pronoun and tense sections for all users and each gender.
fn language_sections(
    docs: &[UserDocument],
    lexicon: &TenseLexicon,
) -> (Vec<PronounRatio>, Vec<TenseSection>) {
    let pronouns = default_pronouns();
    let mut ratios = Vec::new();
    let mut tenses = Vec::new();
    for gender in [None, Some(Gender::Female), Some(Gender::Male)] {
        let target = select(docs, Group::Target, gender);
        let control = select(docs, Group::Control, gender);
        let (ratio, note) = match first_person_ratio(&target, &control, &pronouns) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        ratios.push(PronounRatio {
            cohort: cohort_name(gender),
            ratio,
            note,
        });
        let (tests, note) = match tense_ttest(&target, &control, lexicon) {
            Ok(t) => (t, None),
            Err(e) => (Vec::new(), Some(e.to_string())),
        };
        tenses.push(TenseSection {
            cohort: cohort_name(gender),
            tests,
            note,
        });
    }
    (ratios, tenses)
}

fn top_report(
    docs: &[UserDocument],
    ranked: &[RankedPattern],
    gender: Option<Gender>,
    top: usize,
) -> TopPatternsReport {
    let patterns: Vec<Pattern> = ranked.iter().map(|r| r.pattern.clone()).collect();
    let target = select(docs, Group::Target, gender);
    let counts = count_matches(&patterns, &target);
    top_patterns_report(ranked, &counts, Group::Target, top)
}

fn render_report(report: &ReportOutput, labels: &[String]) -> String {
    let mut out = String::new();
    for (label, top) in labels.iter().zip(&report.top_patterns) {
        out.push_str(&format!("[{label}] "));
        out.push_str(&top.render_text());
        out.push('\n');
    }
    out.push_str("first-person pronoun ratio\n");
    for r in &report.first_person_ratio {
        match (r.ratio, &r.note) {
            (Some(x), _) => out.push_str(&format!("  {:<28} {:.4}\n", r.cohort, x)),
            (None, note) => out.push_str(&format!(
                "  {:<28} n/a ({})\n",
                r.cohort,
                note.as_deref().unwrap_or("")
            )),
        }
    }
    out.push_str("\ntense usage (Welch t-test on per-user rates)\n");
    for section in &report.tense {
        out.push_str(&format!("  {}\n", section.cohort));
        if let Some(note) = &section.note {
            out.push_str(&format!("    n/a ({note})\n"));
        }
        for t in &section.tests {
            let tense = serde_json::to_value(t.tense)
                .ok()
                .and_then(|v| v.as_str().map(String::from));
            out.push_str(&format!(
                "    {:<8} t={:>10.4} df={:>8.2} p={:.4e}\n",
                tense.unwrap_or_default(),
                t.result.t,
                t.result.df,
                t.result.p
            ));
        }
    }
    out
}

fn write_report(run: &mut Run, report: &ReportOutput, labels: &[String]) -> CliResult<()> {
    run.write_text("report.txt", &render_report(report, labels))?;
    run.write_json("report.json", report)
}

fn report_cmd(
    run: &mut Run,
    common: &Common,
    gender: Option<GenderArg>,
    ranked: &Option<PathBuf>,
    lexicon: &Option<PathBuf>,
    top: usize,
) -> CliResult<()> {
    let path = run.input_path(ranked, RANKED);
    let ranked = read_patterns(run, "ranked", &path)?;
    let lexicon = load_lexicon(run, lexicon)?;
    let corpus = run.corpus(common)?;
    let gender = gender.map(Gender::from);
    let top_patterns = vec![top_report(&corpus.docs, &ranked, gender, top)];
    let (first_person_ratio, tense) = language_sections(&corpus.docs, &lexicon);
    let report = ReportOutput {
        top_patterns,
        first_person_ratio,
        tense,
    };
    write_report(run, &report, &[model_tag(gender).to_string()])
}

// --- pipeline ----------------------------------------------------------------

fn extraction_tag(gender: Option<Gender>) -> &'static str {
    match gender {
        Some(g) => g.code(),
        None => "all",
    }
}

fn write_extraction(run: &mut Run, ex: &Extraction) -> CliResult<()> {
    let dir = format!("extract/{}/", extraction_tag(ex.gender));
    run.write_text(&format!("{dir}{TARGET_GRAPH}"), &ex.target_graph.to_tsv())?;
    run.write_text(&format!("{dir}{CONTROL_GRAPH}"), &ex.control_graph.to_tsv())?;
    run.write_text(&format!("{dir}{TOPIC_GRAPH}"), &ex.topic.to_tsv())?;
    run.write_text(&format!("{dir}{SCORES}"), &ex.scores.to_tsv())?;
    run.write_json(&format!("{dir}{WORD_SETS}"), &ex.word_sets)?;
    let patterns: Vec<Pattern> = ex.ranked.iter().map(|r| r.pattern.clone()).collect();
    run.write_text(&format!("{dir}{PATTERNS}"), &patterns_to_jsonl(&patterns)?)?;
    run.write_text(&format!("{dir}{RANKED}"), &ranked_to_jsonl(&ex.ranked)?)
}

fn write_model_run(run: &mut Run, docs: &[&UserDocument], model: &ModelRun) -> CliResult<()> {
    let dir = format!("model/{}/", model_tag(model.gender));
    run.write_text(
        &format!("{dir}{PATTERNS}"),
        &patterns_to_jsonl(&model.patterns)?,
    )?;
    let pop = pipeline::population(docs, model.gender);
    write_features(
        run,
        &format!("{dir}{FEATURES}"),
        &pattern_matrix(&pop, &model.patterns),
    )?;
    write_model(run, &dir, &model.forest)
}

fn pipeline_cmd(
    run: &mut Run,
    common: &Common,
    config: &PipelineConfig,
    lexicon: &Option<PathBuf>,
    top: usize,
) -> CliResult<()> {
    let lexicon = load_lexicon(run, lexicon)?;
    let corpus = run.corpus(common)?;
    let docs: Vec<&UserDocument> = corpus.docs.iter().collect();
    let models = run.time("models", || pipeline::run(&docs, config))?;

    write_stats(run, &corpus)?;
    // one extraction per gender
    let mut seen = Vec::new();
    for ex in models.iter().flat_map(|m| &m.runs) {
        if !seen.contains(&ex.gender) {
            seen.push(ex.gender);
            write_extraction(run, ex)?;
        }
    }
    for model in &models {
        write_model_run(run, &docs, model)?;
    }
    let evals = models
        .iter()
        .map(|m| {
            model_eval(
                &docs,
                m.gender,
                Some(m.patterns.len()),
                m.pattern_eval.clone(),
                m.tfidf_eval.clone(),
            )
        })
        .collect();
    run.write_json(
        "eval.json",
        &EvalOutput {
            mode: config.mode,
            folds: config.folds,
            models: evals,
        },
    )?;

    let extractions: Vec<&Extraction> = seen
        .iter()
        .filter_map(|g| {
            models
                .iter()
                .flat_map(|m| &m.runs)
                .find(|ex| ex.gender == *g)
        })
        .collect();
    let (top_patterns, labels) = run.time("report", || {
        let tops = extractions
            .iter()
            .map(|ex| top_report(&corpus.docs, &ex.ranked, ex.gender, top))
            .collect::<Vec<_>>();
        let labels = extractions
            .iter()
            .map(|ex| extraction_tag(ex.gender).to_string())
            .collect::<Vec<_>>();
        (tops, labels)
    });
    let (first_person_ratio, tense) = language_sections(&corpus.docs, &lexicon);
    let report = ReportOutput {
        top_patterns,
        first_person_ratio,
        tense,
    };
    write_report(run, &report, &labels)
}
