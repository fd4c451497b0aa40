//! Linguistic reports: top patterns per group, first-person pronoun ratio
//! and per-tense Welch t-tests.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::attention::RankedPattern;
use crate::corpus::{Group, UserDocument};
use crate::error::{Error, Result};
use crate::patterns::MatchCounts;
use crate::util::round_sig;

pub const DEFAULT_PRONOUNS: [&str; 9] = [
    "i", "i'm", "i've", "i'd", "i'll", "me", "my", "mine", "myself",
];

pub const STARTER_LEXICON: &str = include_str!("../data/tense_lexicon.txt");

// --- special functions -----------------------------------------------------

/// ln Γ(x) for x > 0 (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 10_000;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b).
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Two-sided tail probability P(|T| >= |t|) for Student's t with `df` degrees.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    if t == 0.0 {
        return 1.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub n_a: usize,
    pub n_b: usize,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's unequal-variance two-sample t-test, two-sided.
///
/// When both samples have zero variance: equal means give `t = 0, p = 1`,
/// different means give `t = ±inf, p = 0`.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid(format!(
            "t-test needs at least 2 observations per side, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (mean_a, var_a) = mean_var(a);
    let (mean_b, var_b) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sa = var_a / na;
    let sb = var_b / nb;
    let se2 = sa + sb;
    let base = WelchResult {
        t: 0.0,
        df: na + nb - 2.0,
        p: 1.0,
        mean_a,
        mean_b,
        n_a: a.len(),
        n_b: b.len(),
    };
    if se2 == 0.0 {
        if mean_a == mean_b {
            return Ok(base);
        }
        let t = if mean_a > mean_b {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        return Ok(WelchResult { t, p: 0.0, ..base });
    }
    let t = (mean_a - mean_b) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(WelchResult {
        t,
        df,
        p: student_t_two_sided(t, df),
        ..base
    })
}

// --- pronoun ratio ---------------------------------------------------------

pub fn default_pronouns() -> BTreeSet<String> {
    DEFAULT_PRONOUNS.iter().map(|s| s.to_string()).collect()
}

fn token_rate(docs: &[&UserDocument], words: &BTreeSet<String>) -> (u64, u64) {
    let mut hits = 0;
    let mut total = 0;
    for t in docs.iter().flat_map(|d| &d.tweets).flat_map(|t| &t.tokens) {
        total += 1;
        if words.contains(t) {
            hits += 1;
        }
    }
    (hits, total)
}

/// Per-token first-person rate of the target group over that of the control group.
pub fn first_person_ratio(
    target: &[&UserDocument],
    control: &[&UserDocument],
    pronouns: &BTreeSet<String>,
) -> Result<f64> {
    let (th, tt) = token_rate(target, pronouns);
    let (ch, ct) = token_rate(control, pronouns);
    if tt == 0 || ct == 0 {
        return Err(Error::invalid("both groups need at least one token"));
    }
    if ch == 0 {
        return Err(Error::UndefinedRatio);
    }
    Ok((th as f64 / tt as f64) / (ch as f64 / ct as f64))
}

// --- tense tests -----------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tense {
    Past,
    Present,
    Future,
}

impl fmt::Display for Tense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tense::Past => "past",
            Tense::Present => "present",
            Tense::Future => "future",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TenseLexicon {
    pub past: BTreeSet<String>,
    pub present: BTreeSet<String>,
    pub future: BTreeSet<String>,
}

impl TenseLexicon {
    /// Parses `[past]` / `[present]` / `[future]` sections, one token per line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lex = TenseLexicon::default();
        let mut section: Option<Tense> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line {
                "[past]" => section = Some(Tense::Past),
                "[present]" => section = Some(Tense::Present),
                "[future]" => section = Some(Tense::Future),
                word => {
                    let tense = section.ok_or_else(|| {
                        Error::Parse(format!("lexicon line {}: word before any section", i + 1))
                    })?;
                    lex.set_mut(tense).insert(word.to_lowercase());
                }
            }
        }
        lex.validate()?;
        Ok(lex)
    }

    pub fn starter() -> Self {
        TenseLexicon::parse(STARTER_LEXICON).expect("bundled lexicon parses")
    }

    pub fn set(&self, tense: Tense) -> &BTreeSet<String> {
        match tense {
            Tense::Past => &self.past,
            Tense::Present => &self.present,
            Tense::Future => &self.future,
        }
    }

    fn set_mut(&mut self, tense: Tense) -> &mut BTreeSet<String> {
        match tense {
            Tense::Past => &mut self.past,
            Tense::Present => &mut self.present,
            Tense::Future => &mut self.future,
        }
    }

    fn validate(&self) -> Result<()> {
        let pairs = [
            (Tense::Past, Tense::Present),
            (Tense::Past, Tense::Future),
            (Tense::Present, Tense::Future),
        ];
        for (a, b) in pairs {
            if let Some(w) = self.set(a).intersection(self.set(b)).next() {
                return Err(Error::Parse(format!(
                    "lexicon word `{w}` is in both [{a}] and [{b}]"
                )));
            }
        }
        Ok(())
    }
}

/// Per-user share of tokens that are in `words`; users without tokens are skipped.
pub fn per_user_rates(docs: &[&UserDocument], words: &BTreeSet<String>) -> Vec<f64> {
    docs.iter()
        .filter_map(|d| {
            let (hits, total) = token_rate(&[*d], words);
            (total > 0).then(|| hits as f64 / total as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TenseTest {
    pub tense: Tense,
    #[serde(flatten)]
    pub result: WelchResult,
}

/// Welch t-test of per-user tense-word rates for every non-empty lexicon section.
pub fn tense_ttest(
    a: &[&UserDocument],
    b: &[&UserDocument],
    lexicon: &TenseLexicon,
) -> Result<Vec<TenseTest>> {
    [Tense::Past, Tense::Present, Tense::Future]
        .into_iter()
        .filter(|&t| !lexicon.set(t).is_empty())
        .map(|tense| {
            let words = lexicon.set(tense);
            let result = welch_t_test(&per_user_rates(a, words), &per_user_rates(b, words))?;
            Ok(TenseTest { tense, result })
        })
        .collect()
}

// --- top patterns ----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopPatternEntry {
    pub rank: usize,
    pub pattern: String,
    pub score: f64,
    pub matches: u64,
    pub users: usize,
    /// Most frequent wildcard fillers, at most five.
    pub fillers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopPatternsReport {
    pub group: Group,
    pub entries: Vec<TopPatternEntry>,
}

/// Top `n` ranked patterns by match frequency in `counts` (a single group),
/// ties kept in ranking order.
pub fn top_patterns_report(
    ranked: &[RankedPattern],
    counts: &MatchCounts,
    group: Group,
    n: usize,
) -> TopPatternsReport {
    let index: BTreeMap<&str, usize> = counts
        .patterns
        .iter()
        .enumerate()
        .map(|(i, p)| (p.as_str(), i))
        .collect();
    let mut entries: Vec<TopPatternEntry> = ranked
        .iter()
        .map(|r| {
            let text = r.pattern.text();
            let (matches, users, fillers) = match index.get(text.as_str()) {
                Some(&i) => {
                    let mut f: Vec<(&String, &u64)> = counts.fillers[i].iter().collect();
                    f.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
                    (
                        counts.total(i),
                        counts.users_matching(i),
                        f.into_iter().take(5).map(|(t, _)| t.clone()).collect(),
                    )
                }
                None => (0, 0, Vec::new()),
            };
            TopPatternEntry {
                rank: 0,
                pattern: text,
                score: round_sig(r.stats.score),
                matches,
                users,
                fillers,
            }
        })
        .collect();
    entries.sort_by_key(|e| std::cmp::Reverse(e.matches));
    entries.truncate(n);
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    TopPatternsReport { group, entries }
}

impl TopPatternsReport {
    pub fn render_text(&self) -> String {
        let width = self
            .entries
            .iter()
            .map(|e| e.pattern.len())
            .max()
            .unwrap_or(7)
            .max(7);
        let mut out = format!("top patterns ({})\n", self.group);
        out.push_str(&format!(
            "{:>4}  {:<width$}  {:>8}  {:>6}  {:>12}  fillers\n",
            "rank", "pattern", "matches", "users", "score"
        ));
        for e in &self.entries {
            out.push_str(&format!(
                "{:>4}  {:<width$}  {:>8}  {:>6}  {:>12.6}  {}\n",
                e.rank,
                e.pattern,
                e.matches,
                e.users,
                e.score,
                e.fillers.join(", ")
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Gender, Tweet};
    use crate::patterns::{count_matches, Origin, Pattern};
    use chrono::{TimeZone, Utc};

    fn user(id: &str, text: &str) -> UserDocument {
        UserDocument {
            user_id: id.into(),
            group: Group::Target,
            gender: Gender::Female,
            anchor_date: None,
            tweets: vec![Tweet::new(
                Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(),
                text,
            )],
        }
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, 1) = x; I_x(a, 1) = x^a
        for &x in &[0.1, 0.5, 0.9] {
            assert!((regularized_incomplete_beta(1.0, 1.0, x) - x).abs() < 1e-14);
            assert!((regularized_incomplete_beta(3.0, 1.0, x) - x.powi(3)).abs() < 1e-14);
        }
        // df = 1 is Cauchy: P(|T| > 1) = 0.5
        assert!((student_t_two_sided(1.0, 1.0) - 0.5).abs() < 1e-13);
    }

    #[test]
    fn welch_examples() {
        let same = welch_t_test(&[0.1, 0.2, 0.3], &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!((same.t, same.p), (0.0, 1.0));

        let r = welch_t_test(&[0.1, 0.2, 0.3], &[0.4, 0.5, 0.6]).unwrap();
        assert!((r.t + 3.674234614174767).abs() < 1e-9);
        assert!((r.df - 4.0).abs() < 1e-12);
        assert!((r.p - 0.021311641128756).abs() < 1e-9);

        let flat = welch_t_test(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!((flat.t, flat.p), (0.0, 1.0));
        let apart = welch_t_test(&[1.0, 1.0], &[2.0, 2.0]).unwrap();
        assert_eq!(apart.p, 0.0);
        assert!(apart.t.is_infinite() && apart.t < 0.0);
        assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pronoun_ratio_examples() {
        let pronouns = default_pronouns();
        let a = user("a", "i am here and my dog is here");
        let b = user("b", "i am here and my dog is here");
        assert_eq!(first_person_ratio(&[&a], &[&b], &pronouns).unwrap(), 1.0);
        let none = user("n", "you are there");
        assert_eq!(first_person_ratio(&[&none], &[&b], &pronouns).unwrap(), 0.0);
        assert!(matches!(
            first_person_ratio(&[&a], &[&none], &pronouns),
            Err(Error::UndefinedRatio)
        ));
    }

    #[test]
    fn lexicon_parsing() {
        let lex =
            TenseLexicon::parse("[past]\nwas\n# c\n[present]\nam\nIs\n[future]\nwill\n").unwrap();
        assert!(lex.present.contains("is"));
        assert_eq!(lex.past.len(), 1);
        assert!(TenseLexicon::parse("[past]\nwas\n[present]\nwas\n").is_err());
        assert!(TenseLexicon::parse("orphan\n").is_err());
        let starter = TenseLexicon::starter();
        assert!(starter.past.contains("was") && starter.future.contains("will"));
    }

    #[test]
    fn tense_rates_per_user() {
        let lex = TenseLexicon::parse("[past]\nwas\n").unwrap();
        let docs = [
            user("a", "i was here"),
            user("b", "was was no no"),
            user("c", ""),
        ];
        let refs: Vec<&UserDocument> = docs.iter().collect();
        assert_eq!(per_user_rates(&refs, &lex.past), vec![1.0 / 3.0, 0.5]);
        let tests = tense_ttest(&refs, &refs, &lex).unwrap();
        assert_eq!(tests.len(), 1);
        assert_eq!(tests[0].result.p, 1.0);
    }

    #[test]
    fn top_report_orders_by_matches() {
        let p: Vec<Pattern> = ["i am *", "* but i", "never * x"]
            .iter()
            .map(|t| Pattern::parse(t, Origin::Female).unwrap())
            .collect();
        let docs = [
            user("a", "i am sad i am done tired but i"),
            user("b", "i am ok"),
        ];
        let refs: Vec<&UserDocument> = docs.iter().collect();
        let counts = count_matches(&p, &refs);
        let ranked: Vec<RankedPattern> = p
            .iter()
            .map(|p| RankedPattern {
                pattern: p.clone(),
                stats: Default::default(),
            })
            .collect();
        let rep = top_patterns_report(&ranked, &counts, Group::Target, 10);
        assert_eq!(rep.entries.len(), 3);
        assert_eq!(rep.entries[0].pattern, "i am *");
        assert_eq!(rep.entries[0].matches, 3);
        assert_eq!(rep.entries[0].users, 2);
        assert_eq!(rep.entries[0].fillers, ["done", "ok", "sad"]);
        assert!(top_patterns_report(&ranked, &counts, Group::Target, 0)
            .entries
            .is_empty());
        assert!(rep.render_text().contains("i am *"));
    }
}
