use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use patmine_core::{
    attention::DEFAULT_TOP_N,
    corpus::{Gender, DEFAULT_WINDOW_DAYS},
    graphmetrics::{DEFAULT_TH_CC, DEFAULT_TH_EC},
    patterns::DEFAULT_MIN_COUNT,
    pipeline::Mode,
    wordgraph::DEFAULT_MIN_EDGE_COUNT,
};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "patmine",
    version,
    about = "Contrastive wildcard-trigram pattern mining"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Per-cohort user and tweet counts after windowing.
    Stats {
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic corpus (JSONL to stdout, or OUT/corpus.jsonl).
    Synth(SynthArgs),
    /// Target and control word graphs.
    Graph {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        gender: Option<GenderArg>,
        #[arg(long, default_value_t = DEFAULT_MIN_EDGE_COUNT)]
        min_edge_count: u64,
    },
    /// Topic graph: target weights minus control weights, clamped at zero.
    Boost {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Target graph TSV [default: OUT/target_graph.tsv]
        #[arg(long)]
        target: Option<PathBuf>,
        /// Control graph TSV [default: OUT/control_graph.tsv]
        #[arg(long)]
        control: Option<PathBuf>,
    },
    /// Node scores and connector/topical word sets.
    Metrics {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Topic graph TSV [default: OUT/topic_graph.tsv]
        #[arg(long)]
        topic: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TH_EC)]
        th_ec: f64,
        #[arg(long, default_value_t = DEFAULT_TH_CC)]
        th_cc: f64,
    },
    /// Enumerate wildcard trigram patterns over the target cohort.
    Patterns {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        gender: Option<GenderArg>,
        /// Word sets JSON [default: OUT/wordsets.json]
        #[arg(long)]
        word_sets: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MIN_COUNT)]
        min_count: u64,
    },
    /// Score and rank patterns.
    Rank {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        gender: Option<GenderArg>,
        /// Pattern JSONL [default: OUT/patterns.jsonl]
        #[arg(long)]
        patterns: Option<PathBuf>,
    },
    /// Union of the female and male top patterns.
    Merge {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Ranked female patterns JSONL
        #[arg(long)]
        female: Option<PathBuf>,
        /// Ranked male patterns JSONL
        #[arg(long)]
        male: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TOP_N)]
        top_n: usize,
    },
    /// Per-user feature matrix (bag of patterns, or TF-IDF with --tfidf).
    Featurize {
        #[command(flatten)]
        common: Common,
        /// Pattern JSONL [default: OUT/ranked.jsonl]
        #[arg(long)]
        patterns: Option<PathBuf>,
        /// Keep only the first N patterns of the file.
        #[arg(long)]
        top_n: Option<usize>,
        /// Word uni- and bigram TF-IDF instead of patterns.
        #[arg(long)]
        tfidf: bool,
    },
    /// Train the random forest on a feature matrix.
    Train {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Feature directory [default: OUT/features]
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        forest: ForestArgs,
    },
    /// Stratified k-fold evaluation, patterns re-extracted per fold, with the TF-IDF baseline.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        extract: ExtractArgs,
        #[command(flatten)]
        forest: ForestArgs,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, value_enum, default_value = "mixed")]
        mode: ModeArg,
    },
    /// Top patterns, first-person pronoun ratio and tense tests.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        gender: Option<GenderArg>,
        /// Ranked pattern JSONL [default: OUT/ranked.jsonl]
        #[arg(long)]
        ranked: Option<PathBuf>,
        /// Tense lexicon with [past]/[present]/[future] sections.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// All stages end to end.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        extract: ExtractArgs,
        #[command(flatten)]
        forest: ForestArgs,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, value_enum, default_value = "mixed")]
        mode: ModeArg,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Common {
    /// Corpus JSONL, `-` for stdin.
    #[arg(long)]
    pub corpus: Option<String>,
    #[arg(long, default_value_t = DEFAULT_WINDOW_DAYS)]
    pub window_days: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ExtractArgs {
    #[arg(long, default_value_t = DEFAULT_TH_EC)]
    pub th_ec: f64,
    #[arg(long, default_value_t = DEFAULT_TH_CC)]
    pub th_cc: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_COUNT)]
    pub min_count: u64,
    #[arg(long, default_value_t = DEFAULT_MIN_EDGE_COUNT)]
    pub min_edge_count: u64,
    #[arg(long, default_value_t = DEFAULT_TOP_N)]
    pub top_n: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ForestArgs {
    #[arg(long, default_value_t = 128)]
    pub trees: usize,
    #[arg(long, default_value_t = 3)]
    pub min_leaf: usize,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub balanced_class_weight: bool,
    #[arg(long)]
    pub downsample_control: bool,
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    /// Synth config JSON; omitted fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in config used when --config is absent.
    #[arg(long, value_enum, default_value = "demo")]
    pub preset: Preset,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Three planted patterns shared by both genders.
    Demo,
    /// Two female-only and two male-only planted patterns.
    Gender,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GenderArg {
    F,
    M,
}

impl From<GenderArg> for Gender {
    fn from(g: GenderArg) -> Gender {
        match g {
            GenderArg::F => Gender::Female,
            GenderArg::M => Gender::Male,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeArg {
    Separated,
    Mixed,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Separated => Mode::Separated,
            ModeArg::Mixed => Mode::Mixed,
        }
    }
}
