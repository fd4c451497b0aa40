//! Pattern attention: five per-pattern factors multiplied into one score.
//!
//! Intra-group factors are pattern frequency (PF), user frequency (UF) and
//! wildcard diversity (DIV). Inter-group factors are the contrast gender
//! frequency (CGF, PF share between female and male target subgroups) and the
//! contrast onset frequency (COF, PF share between target and control). PF
//! and DIV are divided by their maxima over the scored set before the product.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::corpus::{Gender, UserDocument};
use crate::error::{Error, Result};
use crate::patterns::{count_matches, match_pattern, trigram_count, Origin, Pattern};
use crate::util::round_sig;

pub const DEFAULT_TOP_N: usize = 500;

/// Share of a group's trigrams matched by `pattern`.
pub fn pattern_frequency(pattern: &Pattern, docs: &[&UserDocument]) -> Result<f64> {
    let trigrams = trigram_count(docs);
    if trigrams == 0 {
        return Err(Error::NoTrigrams);
    }
    let matches: usize = docs
        .iter()
        .flat_map(|d| &d.tweets)
        .map(|t| match_pattern(pattern, &t.tokens).len())
        .sum();
    Ok(matches as f64 / trigrams as f64)
}

/// Fraction of users with at least one match (0 for an empty group).
pub fn user_frequency(pattern: &Pattern, docs: &[&UserDocument]) -> f64 {
    if docs.is_empty() {
        return 0.0;
    }
    let hits = docs
        .iter()
        .filter(|d| {
            d.tweets
                .iter()
                .any(|t| !match_pattern(pattern, &t.tokens).is_empty())
        })
        .count();
    hits as f64 / docs.len() as f64
}

/// Distinct tokens observed at the wildcard slot.
pub fn diversity(pattern: &Pattern, docs: &[&UserDocument]) -> u64 {
    let fillers: BTreeSet<String> = docs
        .iter()
        .flat_map(|d| &d.tweets)
        .flat_map(|t| match_pattern(pattern, &t.tokens))
        .map(|(_, f)| f)
        .collect();
    fillers.len() as u64
}

fn share(numerator: f64, a: f64, b: f64) -> f64 {
    let denominator = a + b;
    if denominator > 0.0 {
        numerator / denominator
    } else {
        0.5
    }
}

/// `pf_g / (pf_female + pf_male)` for the target gender `g`; 0.5 when both are 0.
pub fn contrast_gender_frequency(pf_female: f64, pf_male: f64, target: Gender) -> f64 {
    match target {
        Gender::Female => share(pf_female, pf_female, pf_male),
        Gender::Male => share(pf_male, pf_female, pf_male),
        Gender::Unknown => 0.5,
    }
}

/// `pf_target / (pf_target + pf_control)`; 0.5 when both are 0.
pub fn contrast_onset_frequency(pf_target: f64, pf_control: f64) -> f64 {
    share(pf_target, pf_target, pf_control)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RawFactors {
    pub pf: f64,
    pub uf: f64,
    pub div: u64,
    pub cgf: f64,
    pub cof: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PatternStats {
    pub pf: f64,
    pub uf: f64,
    pub div: u64,
    pub cgf: f64,
    pub cof: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedPattern {
    pub pattern: Pattern,
    pub stats: PatternStats,
}

/// Scores `pf/max_pf * uf * div/max_div * cgf * cof` and sorts descending,
/// ties broken by canonical text ascending.
pub fn score_and_rank(patterns: &[Pattern], factors: &[RawFactors]) -> Result<Vec<RankedPattern>> {
    if patterns.len() != factors.len() {
        return Err(Error::Dimension {
            expected: patterns.len(),
            got: factors.len(),
        });
    }
    let max_pf = factors.iter().map(|f| f.pf).fold(0.0, f64::max);
    let max_div = factors.iter().map(|f| f.div).max().unwrap_or(0);
    let mut ranked: Vec<RankedPattern> = patterns
        .iter()
        .zip(factors)
        .map(|(p, f)| {
            let pf_norm = if max_pf > 0.0 { f.pf / max_pf } else { 0.0 };
            let div_norm = if max_div > 0 {
                f.div as f64 / max_div as f64
            } else {
                0.0
            };
            RankedPattern {
                pattern: p.clone(),
                stats: PatternStats {
                    pf: f.pf,
                    uf: f.uf,
                    div: f.div,
                    cgf: f.cgf,
                    cof: f.cof,
                    score: pf_norm * f.uf * div_norm * f.cgf * f.cof,
                },
            }
        })
        .collect();
    let mut keyed: Vec<(String, RankedPattern)> =
        ranked.drain(..).map(|r| (r.pattern.text(), r)).collect();
    keyed.sort_by(|(ta, a), (tb, b)| {
        b.stats
            .score
            .partial_cmp(&a.stats.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| ta.cmp(tb))
    });
    Ok(keyed.into_iter().map(|(_, r)| r).collect())
}

/// Cohort slices needed to score one extraction run.
pub struct AttentionInput<'a> {
    /// Documents of the group the patterns are ranked for (e.g. female target).
    pub focus: &'a [&'a UserDocument],
    /// Reference cohort for COF (e.g. female control).
    pub control: &'a [&'a UserDocument],
    pub female_target: &'a [&'a UserDocument],
    pub male_target: &'a [&'a UserDocument],
    /// Gender the run targets; `None` makes CGF a neutral 0.5.
    pub target_gender: Option<Gender>,
}

struct BulkFrequencies {
    pf: Vec<f64>,
    uf: Vec<f64>,
    div: Vec<u64>,
}

fn bulk(patterns: &[Pattern], docs: &[&UserDocument]) -> BulkFrequencies {
    let counts = count_matches(patterns, docs);
    let trigrams = trigram_count(docs);
    let users = docs.len();
    let n = patterns.len();
    BulkFrequencies {
        pf: (0..n)
            .map(|i| {
                if trigrams == 0 {
                    0.0
                } else {
                    counts.total(i) as f64 / trigrams as f64
                }
            })
            .collect(),
        uf: (0..n)
            .map(|i| {
                if users == 0 {
                    0.0
                } else {
                    counts.users_matching(i) as f64 / users as f64
                }
            })
            .collect(),
        div: (0..n).map(|i| counts.fillers[i].len() as u64).collect(),
    }
}

/// Computes all five factors for every pattern in one pass per cohort slice.
pub fn compute_factors(
    patterns: &[Pattern],
    input: &AttentionInput<'_>,
) -> Result<Vec<RawFactors>> {
    if trigram_count(input.focus) == 0 {
        return Err(Error::NoTrigrams);
    }
    let focus = bulk(patterns, input.focus);
    let control = bulk(patterns, input.control);
    let gender_pf = input.target_gender.map(|_| {
        (
            bulk(patterns, input.female_target).pf,
            bulk(patterns, input.male_target).pf,
        )
    });
    Ok((0..patterns.len())
        .map(|i| RawFactors {
            pf: focus.pf[i],
            uf: focus.uf[i],
            div: focus.div[i],
            cgf: match (&gender_pf, input.target_gender) {
                (Some((f, m)), Some(g)) => contrast_gender_frequency(f[i], m[i], g),
                _ => 0.5,
            },
            cof: contrast_onset_frequency(focus.pf[i], control.pf[i]),
        })
        .collect())
}

pub fn rank_patterns(
    patterns: &[Pattern],
    input: &AttentionInput<'_>,
) -> Result<Vec<RankedPattern>> {
    let factors = compute_factors(patterns, input)?;
    score_and_rank(patterns, &factors)
}

/// Union of the top `top_n` of each ranked list, female first. A pattern
/// present in both is kept once with origin `Mixed`.
pub fn merge_gender_patterns(
    female_ranked: &[RankedPattern],
    male_ranked: &[RankedPattern],
    top_n: usize,
) -> Vec<Pattern> {
    let mut merged: Vec<Pattern> = Vec::new();
    let mut position: BTreeMap<String, usize> = BTreeMap::new();
    for r in female_ranked
        .iter()
        .take(top_n)
        .chain(male_ranked.iter().take(top_n))
    {
        let text = r.pattern.text();
        match position.get(&text) {
            Some(&i) => {
                if merged[i].origin != r.pattern.origin {
                    merged[i].origin = Origin::Mixed;
                }
            }
            None => {
                position.insert(text, merged.len());
                merged.push(r.pattern.clone());
            }
        }
    }
    merged
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PatternRecord {
    slots: Vec<String>,
    origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stats: Option<PatternStats>,
}

fn rounded(stats: &PatternStats) -> PatternStats {
    PatternStats {
        pf: round_sig(stats.pf),
        uf: round_sig(stats.uf),
        div: stats.div,
        cgf: round_sig(stats.cgf),
        cof: round_sig(stats.cof),
        score: round_sig(stats.score),
    }
}

fn record_line(pattern: &Pattern, stats: Option<&PatternStats>) -> Result<String> {
    let rec = PatternRecord {
        slots: pattern.slot_strs().iter().map(|s| s.to_string()).collect(),
        origin: pattern.origin,
        stats: stats.map(rounded),
    };
    Ok(serde_json::to_string(&rec)? + "\n")
}

/// Pattern JSONL without stats.
pub fn patterns_to_jsonl(patterns: &[Pattern]) -> Result<String> {
    patterns.iter().map(|p| record_line(p, None)).collect()
}

/// Ranked pattern JSONL, 12 significant digits.
pub fn ranked_to_jsonl(ranked: &[RankedPattern]) -> Result<String> {
    ranked
        .iter()
        .map(|r| record_line(&r.pattern, Some(&r.stats)))
        .collect()
}

/// Reads pattern JSONL; records without stats come back with default stats.
pub fn read_pattern_jsonl(reader: impl BufRead) -> Result<Vec<RankedPattern>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse(format!("pattern line {}: {e}", i + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PatternRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("pattern line {}: {e}", i + 1)))?;
        let slots: Vec<&str> = rec.slots.iter().map(String::as_str).collect();
        out.push(RankedPattern {
            pattern: Pattern::from_strs(&slots, rec.origin)?,
            stats: rec.stats.unwrap_or_default(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Group, Tweet};
    use chrono::{TimeZone, Utc};

    fn user(id: &str, tweets: &[&str]) -> UserDocument {
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

    fn pat(s: &str) -> Pattern {
        Pattern::parse(s, Origin::Female).unwrap()
    }

    #[test]
    fn pf_examples() {
        // 12 tokens -> 10 trigrams, one "i am *" match
        let u = user("u", &["i am sad a b c d e f g h k"]);
        assert!((pattern_frequency(&pat("i am *"), &[&u]).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(pattern_frequency(&pat("x y *"), &[&u]).unwrap(), 0.0);
        let sat = user("s", &["a a a a a"]);
        assert_eq!(pattern_frequency(&pat("a a *"), &[&sat]).unwrap(), 1.0);
        let short = user("s", &["a b"]);
        assert!(matches!(
            pattern_frequency(&pat("a b *"), &[&short]),
            Err(Error::NoTrigrams)
        ));
    }

    #[test]
    fn uf_examples() {
        let docs = [
            user("a", &["i am x"]),
            user("b", &["i am y"]),
            user("c", &["i am z"]),
            user("d", &["nothing here at all"]),
        ];
        let refs: Vec<&UserDocument> = docs.iter().collect();
        assert_eq!(user_frequency(&pat("i am *"), &refs), 0.75);
        assert_eq!(user_frequency(&pat("q r *"), &refs), 0.0);
        assert_eq!(user_frequency(&pat("i am *"), &refs[..3]), 1.0);
    }

    #[test]
    fn div_examples() {
        let u = user("u", &["i am sad", "i am tired", "i am done", "i am sad"]);
        assert_eq!(diversity(&pat("i am *"), &[&u]), 3);
        assert_eq!(diversity(&pat("q r *"), &[&u]), 0);
        let twice = user("u", &["i am sad", "i am sad"]);
        assert_eq!(diversity(&pat("i am *"), &[&twice]), 1);
    }

    #[test]
    fn cgf_and_cof_examples() {
        assert_eq!(contrast_gender_frequency(0.02, 0.02, Gender::Female), 0.5);
        assert!((contrast_gender_frequency(0.03, 0.01, Gender::Female) - 0.75).abs() < 1e-15);
        assert_eq!(contrast_gender_frequency(0.0, 0.0, Gender::Male), 0.5);
        assert!((contrast_onset_frequency(0.04, 0.01) - 0.8).abs() < 1e-15);
        assert_eq!(contrast_onset_frequency(0.0, 0.3), 0.0);
        assert_eq!(contrast_onset_frequency(0.2, 0.2), 0.5);
    }

    fn factors(pf: f64, uf: f64, div: u64) -> RawFactors {
        RawFactors {
            pf,
            uf,
            div,
            cgf: 0.5,
            cof: 0.5,
        }
    }

    #[test]
    fn zero_factor_zero_score() {
        let r = score_and_rank(
            &[pat("a b *"), pat("c d *")],
            &[factors(0.1, 0.0, 2), factors(0.1, 1.0, 2)],
        )
        .unwrap();
        assert_eq!(r[1].stats.score, 0.0);
        assert_eq!(r[1].pattern.text(), "a b *");
    }

    #[test]
    fn uf_scales_score_linearly() {
        let r = score_and_rank(
            &[pat("a b *"), pat("c d *")],
            &[factors(0.1, 0.4, 2), factors(0.1, 0.8, 2)],
        )
        .unwrap();
        assert_eq!(r[0].pattern.text(), "c d *");
        assert!((r[0].stats.score - 2.0 * r[1].stats.score).abs() < 1e-15);
    }

    #[test]
    fn ties_break_by_text() {
        let r = score_and_rank(
            &[pat("z z *"), pat("a a *")],
            &[factors(0.1, 0.5, 1), factors(0.1, 0.5, 1)],
        )
        .unwrap();
        assert_eq!(r[0].pattern.text(), "a a *");
    }

    fn ranked(texts: &[&str], origin: Origin) -> Vec<RankedPattern> {
        texts
            .iter()
            .map(|t| RankedPattern {
                pattern: Pattern::parse(t, origin).unwrap(),
                stats: PatternStats::default(),
            })
            .collect()
    }

    #[test]
    fn merge_examples() {
        let f = ranked(&["a a *", "b b *", "c c *"], Origin::Female);
        let m = ranked(&["d d *", "e e *", "f f *"], Origin::Male);
        assert_eq!(merge_gender_patterns(&f, &m, 3).len(), 6);

        let m_same = ranked(&["a a *", "b b *", "c c *"], Origin::Male);
        let merged = merge_gender_patterns(&f, &m_same, 3);
        assert_eq!(merged.len(), 3);
        assert!(merged.iter().all(|p| p.origin == Origin::Mixed));

        let m_overlap = ranked(&["b b *", "x x *"], Origin::Male);
        let merged = merge_gender_patterns(&f, &m_overlap, 2);
        let texts: Vec<String> = merged.iter().map(Pattern::text).collect();
        assert_eq!(texts, ["a a *", "b b *", "x x *"]);
        assert_eq!(merged[0].origin, Origin::Female);
        assert_eq!(merged[1].origin, Origin::Mixed);
        assert_eq!(merged[2].origin, Origin::Male);
    }

    #[test]
    fn bulk_factors_match_per_pattern_route() {
        let focus_docs = [
            user("a", &["i am sad and i am done", "but i was fine"]),
            user("b", &["i was tired but i am ok"]),
        ];
        let control_docs = [user("c", &["i am here", "nothing else to say"])];
        let male_docs = [user("m", &["i was there", "i was sad"])];
        let focus: Vec<&UserDocument> = focus_docs.iter().collect();
        let control: Vec<&UserDocument> = control_docs.iter().collect();
        let male: Vec<&UserDocument> = male_docs.iter().collect();
        let patterns = vec![pat("i am *"), pat("i was *"), pat("* but i")];
        let input = AttentionInput {
            focus: &focus,
            control: &control,
            female_target: &focus,
            male_target: &male,
            target_gender: Some(Gender::Female),
        };
        let bulk = compute_factors(&patterns, &input).unwrap();
        for (p, f) in patterns.iter().zip(&bulk) {
            let pf = pattern_frequency(p, &focus).unwrap();
            assert_eq!(f.pf, pf);
            assert_eq!(f.uf, user_frequency(p, &focus));
            assert_eq!(f.div, diversity(p, &focus));
            let pf_m = pattern_frequency(p, &male).unwrap();
            assert_eq!(f.cgf, contrast_gender_frequency(pf, pf_m, Gender::Female));
            let pf_c = pattern_frequency(p, &control).unwrap();
            assert_eq!(f.cof, contrast_onset_frequency(pf, pf_c));
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let r = score_and_rank(
            &[pat("i am *"), pat("* but i")],
            &[factors(1.0 / 3.0, 0.5, 3), factors(0.2, 1.0, 1)],
        )
        .unwrap();
        let text = ranked_to_jsonl(&r).unwrap();
        assert!(text.starts_with("{\"slots\":[\"i\",\"am\",\"*\"],\"origin\":\"female\",\"stats\":{\"pf\":0.333333333333,"));
        let back = read_pattern_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].pattern, r[0].pattern);
        assert_eq!(ranked_to_jsonl(&back).unwrap(), text);

        let plain = patterns_to_jsonl(&[pat("i am *")]).unwrap();
        assert_eq!(
            plain,
            "{\"slots\":[\"i\",\"am\",\"*\"],\"origin\":\"female\"}\n"
        );
    }
}
