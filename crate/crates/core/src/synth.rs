//! Seeded synthetic cohorts with planted trigram signals.
//!
//! Background tweets are Zipf samples over a vocabulary whose head is a list
//! of common function words. Planted trigrams are inserted per tweet at a
//! group-specific rate with their wildcard slot drawn from a dedicated filler
//! list; first-person pronoun and tense-word rates can be shifted per group.

use std::collections::BTreeSet;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{TenseLexicon, DEFAULT_PRONOUNS};
use crate::corpus::{Corpus, Gender, Group, Tweet, UserDocument};
use crate::error::{Error, Result};
use crate::patterns::{Origin, Pattern, Slot};
use crate::util::mix_seed;

const DEFAULT_FUNCTION_WORDS: [&str; 30] = [
    "the", "i", "to", "and", "a", "you", "it", "is", "my", "that", "of", "in", "so", "me", "for",
    "this", "just", "not", "be", "on", "have", "was", "we", "but", "with", "am", "are", "do",
    "what", "can",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedPattern {
    /// Template such as `"i am *"`.
    pub template: String,
    /// Wildcard fillers, sampled uniformly.
    pub fillers: Vec<String>,
    /// Per-tweet insertion probability for target users.
    pub target_rate: f64,
    /// Per-tweet insertion probability for control users.
    pub control_rate: f64,
    /// Restrict insertion to users of one gender.
    #[serde(default)]
    pub gender: Option<Gender>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TenseRates {
    #[serde(default)]
    pub past: f64,
    #[serde(default)]
    pub present: f64,
    #[serde(default)]
    pub future: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TenseShift {
    #[serde(default)]
    pub female: TenseRates,
    #[serde(default)]
    pub male: TenseRates,
}

fn d_target() -> usize {
    200
}
fn d_control() -> usize {
    400
}
fn d_tweets() -> [usize; 2] {
    [30, 60]
}
fn d_tokens() -> [usize; 2] {
    [6, 14]
}
fn d_vocab() -> usize {
    3000
}
fn d_zipf() -> f64 {
    1.1
}
fn d_function_words() -> Vec<String> {
    DEFAULT_FUNCTION_WORDS
        .iter()
        .map(|s| s.to_string())
        .collect()
}
fn d_pronoun_rate() -> f64 {
    0.01
}
fn d_one() -> f64 {
    1.0
}
fn d_half() -> f64 {
    0.5
}
fn d_window() -> u32 {
    90
}
fn d_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2017, 1, 1).unwrap()
}
fn d_span() -> u32 {
    365
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default = "d_target")]
    pub n_target_users: usize,
    #[serde(default = "d_control")]
    pub n_control_users: usize,
    /// Inclusive range of tweets per user.
    #[serde(default = "d_tweets")]
    pub tweets_per_user: [usize; 2],
    /// Inclusive range of background tokens per tweet.
    #[serde(default = "d_tokens")]
    pub tokens_per_tweet: [usize; 2],
    /// Background words beyond the function-word head.
    #[serde(default = "d_vocab")]
    pub background_vocab_size: usize,
    #[serde(default = "d_zipf")]
    pub zipf_exponent: f64,
    #[serde(default = "d_function_words")]
    pub function_words: Vec<String>,
    #[serde(default)]
    pub planted_patterns: Vec<PlantedPattern>,
    /// Per-token probability of substituting a first-person pronoun (control).
    #[serde(default = "d_pronoun_rate")]
    pub pronoun_rate: f64,
    /// Multiplier on `pronoun_rate` for target users.
    #[serde(default = "d_one")]
    pub pronoun_boost: f64,
    /// Fraction of users that are female (the rest male).
    #[serde(default = "d_half")]
    pub gender_split: f64,
    /// Extra per-token tense-word probability for target users, per gender.
    #[serde(default)]
    pub tense_shift: TenseShift,
    /// Onset window the timestamps are laid out around.
    #[serde(default = "d_window")]
    pub window_days: u32,
    #[serde(default = "d_start")]
    pub start_date: NaiveDate,
    /// Days covered by each user's timeline.
    #[serde(default = "d_span")]
    pub span_days: u32,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
        for (name, r) in [
            ("pronoun_rate", self.pronoun_rate),
            ("gender_split", self.gender_split),
        ] {
            if !rate_ok(r) {
                return Err(Error::invalid(format!("{name} must be in [0, 1], got {r}")));
            }
        }
        if !rate_ok(self.pronoun_rate * self.pronoun_boost) {
            return Err(Error::invalid(
                "pronoun_rate * pronoun_boost must be in [0, 1]",
            ));
        }
        for (name, [lo, hi]) in [
            ("tweets_per_user", self.tweets_per_user),
            ("tokens_per_tweet", self.tokens_per_tweet),
        ] {
            if lo > hi {
                return Err(Error::invalid(format!(
                    "{name}: lower bound exceeds upper bound"
                )));
            }
        }
        if self.function_words.is_empty() && self.background_vocab_size == 0 {
            return Err(Error::invalid("background vocabulary is empty"));
        }
        if self.window_days == 0 || self.span_days <= self.window_days {
            return Err(Error::invalid("span_days must exceed window_days > 0"));
        }
        let mut filler_seen = BTreeSet::new();
        for p in &self.planted_patterns {
            Pattern::parse(&p.template, Origin::Mixed)?;
            if p.fillers.is_empty() {
                return Err(Error::invalid(format!(
                    "planted pattern `{}` has no fillers",
                    p.template
                )));
            }
            if !rate_ok(p.target_rate) || !rate_ok(p.control_rate) {
                return Err(Error::invalid(format!(
                    "planted pattern `{}` has a rate outside [0, 1]",
                    p.template
                )));
            }
            for f in &p.fillers {
                if !filler_seen.insert(f.clone()) {
                    return Err(Error::invalid(format!(
                        "filler `{f}` is shared by two planted patterns"
                    )));
                }
            }
        }
        let shifts = [self.tense_shift.female, self.tense_shift.male];
        if shifts
            .iter()
            .any(|s| !rate_ok(s.past) || !rate_ok(s.present) || !rate_ok(s.future))
        {
            return Err(Error::invalid("tense shifts must be in [0, 1]"));
        }
        Ok(())
    }

    /// Background vocabulary in Zipf rank order.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut vocab = self.function_words.clone();
        vocab.extend((0..self.background_vocab_size).map(|i| format!("w{i:04}")));
        vocab
    }
}

struct ZipfSampler {
    cdf: Vec<f64>,
}

impl ZipfSampler {
    fn new(n: usize, exponent: f64) -> Self {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = (1..=n)
            .map(|k| {
                acc += 1.0 / (k as f64).powf(exponent);
                acc
            })
            .collect();
        cdf.iter_mut().for_each(|c| *c /= acc);
        ZipfSampler { cdf }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1)
    }
}

struct Generator<'a> {
    config: &'a SynthConfig,
    vocab: Vec<String>,
    zipf: ZipfSampler,
    templates: Vec<Pattern>,
    lexicon: TenseLexicon,
}

impl Generator<'_> {
    fn user(&self, index: usize, group: Group) -> UserDocument {
        let cfg = self.config;
        let stream = match group {
            Group::Target => index as u64,
            Group::Control => (1u64 << 40) + index as u64,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, stream));
        let gender = if rng.random::<f64>() < cfg.gender_split {
            Gender::Female
        } else {
            Gender::Male
        };

        // timeline of span_days; target anchors sit after at least one full window
        let span = i64::from(cfg.span_days);
        let window = i64::from(cfg.window_days);
        let (timeline_start, anchor) = match group {
            Group::Target => {
                let anchor_offset = rng.random_range(window..=span);
                let start = cfg.start_date + Duration::days(rng.random_range(0..=span));
                (start, Some(start + Duration::days(anchor_offset)))
            }
            Group::Control => (
                cfg.start_date + Duration::days(rng.random_range(0..=span)),
                None,
            ),
        };

        let pronoun_rate = match group {
            Group::Target => cfg.pronoun_rate * cfg.pronoun_boost,
            Group::Control => cfg.pronoun_rate,
        };
        let tense = match (group, gender) {
            (Group::Target, Gender::Female) => cfg.tense_shift.female,
            (Group::Target, Gender::Male) => cfg.tense_shift.male,
            _ => TenseRates::default(),
        };
        let tense_lists: Vec<(f64, Vec<&String>)> = [
            (tense.past, &self.lexicon.past),
            (tense.present, &self.lexicon.present),
            (tense.future, &self.lexicon.future),
        ]
        .into_iter()
        .map(|(r, set)| (r, set.iter().collect()))
        .collect();

        let n_tweets = rng.random_range(cfg.tweets_per_user[0]..=cfg.tweets_per_user[1]);
        let mut stamps: Vec<i64> = (0..n_tweets)
            .map(|_| rng.random_range(0..span * 86_400))
            .collect();
        stamps.sort_unstable();
        let origin = timeline_start.and_hms_opt(0, 0, 0).unwrap().and_utc();

        let tweets = stamps
            .into_iter()
            .map(|secs| {
                let n_tokens = rng.random_range(cfg.tokens_per_tweet[0]..=cfg.tokens_per_tweet[1]);
                let mut tokens: Vec<String> = (0..n_tokens)
                    .map(|_| {
                        if rng.random::<f64>() < pronoun_rate {
                            return DEFAULT_PRONOUNS[rng.random_range(0..DEFAULT_PRONOUNS.len())]
                                .to_string();
                        }
                        for (rate, words) in &tense_lists {
                            if *rate > 0.0 && !words.is_empty() && rng.random::<f64>() < *rate {
                                return words[rng.random_range(0..words.len())].clone();
                            }
                        }
                        self.vocab[self.zipf.sample(&mut rng)].clone()
                    })
                    .collect();
                for (planted, template) in cfg.planted_patterns.iter().zip(&self.templates) {
                    if planted.gender.is_some_and(|g| g != gender) {
                        continue;
                    }
                    let rate = match group {
                        Group::Target => planted.target_rate,
                        Group::Control => planted.control_rate,
                    };
                    if rate > 0.0 && rng.random::<f64>() < rate {
                        let filler = &planted.fillers[rng.random_range(0..planted.fillers.len())];
                        let at = rng.random_range(0..=tokens.len());
                        let trigram: Vec<String> = template
                            .slots()
                            .iter()
                            .map(|s| match s {
                                Slot::Fixed(t) => t.clone(),
                                Slot::Wildcard => filler.clone(),
                            })
                            .collect();
                        tokens.splice(at..at, trigram);
                    }
                }
                Tweet::new(origin + Duration::seconds(secs), tokens.join(" "))
            })
            .collect();

        let prefix = match group {
            Group::Target => "t",
            Group::Control => "c",
        };
        UserDocument {
            user_id: format!("{prefix}{index:05}"),
            group,
            gender,
            anchor_date: anchor,
            tweets,
        }
    }
}

/// Generates a corpus; identical for identical configs. Documents are
/// ordered by user_id.
pub fn generate(config: &SynthConfig) -> Result<Corpus> {
    config.validate()?;
    let vocab = config.vocabulary();
    let generator = Generator {
        config,
        zipf: ZipfSampler::new(vocab.len(), config.zipf_exponent),
        vocab,
        templates: config
            .planted_patterns
            .iter()
            .map(|p| Pattern::parse(&p.template, Origin::Mixed))
            .collect::<Result<_>>()?,
        lexicon: TenseLexicon::starter(),
    };
    let jobs: Vec<(usize, Group)> = (0..config.n_target_users)
        .map(|i| (i, Group::Target))
        .chain((0..config.n_control_users).map(|i| (i, Group::Control)))
        .collect();
    let mut docs: Vec<UserDocument> = jobs
        .par_iter()
        .map(|&(i, g)| generator.user(i, g))
        .collect();
    docs.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    Ok(Corpus {
        docs,
        window_days: config.window_days,
    })
}

fn planted(template: &str, prefix: &str, gender: Option<Gender>) -> PlantedPattern {
    PlantedPattern {
        template: template.into(),
        fillers: (0..DEMO_FILLERS)
            .map(|i| format!("{prefix}{i:03}"))
            .collect(),
        target_rate: 0.25,
        control_rate: 0.025,
        gender,
    }
}

const DEMO_FILLERS: usize = 80;

/// Three planted signals at 10x target emission, each with its own
/// 80-word filler vocabulary.
pub fn demo_config(seed: u64) -> SynthConfig {
    SynthConfig {
        planted_patterns: vec![
            planted("i am *", "fa", None),
            planted("* but i", "fb", None),
            planted("so * and", "fc", None),
        ],
        seed,
        ..SynthConfig::default()
    }
}

/// Two female-only and two male-only planted signals.
pub fn gender_demo_config(seed: u64) -> SynthConfig {
    SynthConfig {
        planted_patterns: vec![
            planted("i am *", "fa", Some(Gender::Female)),
            planted("so * and", "fc", Some(Gender::Female)),
            planted("* but i", "mb", Some(Gender::Male)),
            planted("my * is", "md", Some(Gender::Male)),
        ],
        seed,
        ..SynthConfig::default()
    }
}
