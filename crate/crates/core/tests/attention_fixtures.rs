mod common;

use common::{brute_pattern_counts, doc, random_docs, random_pattern, rng};
use patmine_core::attention::{
    compute_factors, contrast_gender_frequency, contrast_onset_frequency, rank_patterns,
    AttentionInput,
};
use patmine_core::corpus::{Gender, Group, UserDocument};
use patmine_core::patterns::{Origin, Pattern};
use proptest::prelude::*;

fn pat(s: &str) -> Pattern {
    Pattern::parse(s, Origin::Mixed).unwrap()
}

#[test]
fn hand_computed_fixture() {
    let f1 = doc(
        "f1",
        Group::Target,
        Gender::Female,
        &["i am sad", "i am so tired"],
    );
    let f2 = doc("f2", Group::Target, Gender::Female, &["i am happy today"]);
    let m1 = doc(
        "m1",
        Group::Target,
        Gender::Male,
        &["i am bored", "you are sad"],
    );
    let c1 = doc(
        "c1",
        Group::Control,
        Gender::Female,
        &["i am fine", "we are here now"],
    );
    let focus = [&f1, &f2];
    let control = [&c1];
    let male = [&m1];
    let input = AttentionInput {
        focus: &focus,
        control: &control,
        female_target: &focus,
        male_target: &male,
        target_gender: Some(Gender::Female),
    };
    let patterns = [pat("i am *"), pat("* are sad"), pat("am * tired")];
    let f = compute_factors(&patterns, &input).unwrap();

    // focus has 5 trigrams, male target 2, control 3
    assert!((f[0].pf - 3.0 / 5.0).abs() < 1e-12);
    assert_eq!((f[0].uf, f[0].div), (1.0, 3));
    assert!((f[0].cgf - 6.0 / 11.0).abs() < 1e-12);
    assert!((f[0].cof - 9.0 / 14.0).abs() < 1e-12);

    assert_eq!(
        (f[1].pf, f[1].uf, f[1].div, f[1].cgf, f[1].cof),
        (0.0, 0.0, 0, 0.0, 0.5)
    );

    assert!((f[2].pf - 0.2).abs() < 1e-12);
    assert_eq!((f[2].uf, f[2].div, f[2].cgf, f[2].cof), (0.5, 1, 1.0, 1.0));

    let ranked = rank_patterns(&patterns, &input).unwrap();
    let order: Vec<String> = ranked.iter().map(|r| r.pattern.text()).collect();
    assert_eq!(order, ["i am *", "am * tired", "* are sad"]);
    assert!((ranked[0].stats.score - 27.0 / 77.0).abs() < 1e-12);
    assert!((ranked[1].stats.score - 1.0 / 18.0).abs() < 1e-12);
    assert_eq!(ranked[2].stats.score, 0.0);
}

fn split(docs: &[UserDocument], group: Group, gender: Option<Gender>) -> Vec<&UserDocument> {
    docs.iter()
        .filter(|d| d.group == group && gender.is_none_or(|g| d.gender == g))
        .collect()
}

fn brute_pf(p: &Pattern, docs: &[&UserDocument]) -> f64 {
    let owned: Vec<UserDocument> = docs.iter().map(|d| (*d).clone()).collect();
    let (counts, _) = brute_pattern_counts(p, &owned);
    let trigrams: usize = docs
        .iter()
        .flat_map(|d| &d.tweets)
        .map(|t| t.tokens.len().saturating_sub(2))
        .sum();
    counts.iter().sum::<u64>() as f64 / trigrams as f64
}

fn share(a: f64, b: f64) -> f64 {
    if a + b > 0.0 {
        a / (a + b)
    } else {
        0.5
    }
}

#[test]
fn random_fixtures_match_recomputation() {
    let mut r = rng(31);
    let mut checked = 0;
    while checked < 60 {
        let docs = random_docs(&mut r, 16, 12);
        let focus = split(&docs, Group::Target, Some(Gender::Female));
        let male = split(&docs, Group::Target, Some(Gender::Male));
        let control = split(&docs, Group::Control, Some(Gender::Female));
        let has_trigrams = |g: &[&UserDocument]| {
            g.iter()
                .flat_map(|d| &d.tweets)
                .any(|t| t.tokens.len() >= 3)
        };
        if !has_trigrams(&focus) || !has_trigrams(&male) || !has_trigrams(&control) {
            continue;
        }
        checked += 1;
        let mut patterns: Vec<Pattern> = (0..10).map(|_| random_pattern(&mut r)).collect();
        patterns.sort_by_key(Pattern::text);
        patterns.dedup_by_key(|p| p.text());
        let input = AttentionInput {
            focus: &focus,
            control: &control,
            female_target: &focus,
            male_target: &male,
            target_gender: Some(Gender::Female),
        };
        let ranked = rank_patterns(&patterns, &input).unwrap();

        let owned: Vec<UserDocument> = focus.iter().map(|d| (*d).clone()).collect();
        let rows: Vec<(String, f64, f64, f64, f64, f64)> = patterns
            .iter()
            .map(|p| {
                let (counts, fillers) = brute_pattern_counts(p, &owned);
                let pf = brute_pf(p, &focus);
                let uf = counts.iter().filter(|&&c| c > 0).count() as f64 / focus.len() as f64;
                let cgf = share(pf, brute_pf(p, &male));
                let cof = share(pf, brute_pf(p, &control));
                (p.text(), pf, uf, fillers.len() as f64, cgf, cof)
            })
            .collect();
        let max_pf = rows.iter().map(|r| r.1).fold(0.0, f64::max);
        let max_div = rows.iter().map(|r| r.3).fold(0.0, f64::max);
        for row in &rows {
            let got = ranked.iter().find(|x| x.pattern.text() == row.0).unwrap();
            let norm = |v: f64, m: f64| if m > 0.0 { v / m } else { 0.0 };
            let expected = norm(row.1, max_pf) * row.2 * norm(row.3, max_div) * row.4 * row.5;
            assert!((got.stats.score - expected).abs() < 1e-12, "{}", row.0);
        }
        assert!(ranked
            .windows(2)
            .all(|w| w[0].stats.score >= w[1].stats.score));
    }
}

proptest! {
    #[test]
    fn gender_shares_sum_to_one(f in 0.0f64..1.0, m in 0.0f64..1.0) {
        prop_assume!(f + m > 0.0);
        let s = contrast_gender_frequency(f, m, Gender::Female) + contrast_gender_frequency(f, m, Gender::Male);
        prop_assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn onset_shares_sum_to_one(t in 0.0f64..1.0, c in 0.0f64..1.0) {
        prop_assume!(t + c > 0.0);
        let s = contrast_onset_frequency(t, c) + contrast_onset_frequency(c, t);
        prop_assert!((s - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&contrast_onset_frequency(t, c)));
    }
}

#[test]
fn neutral_when_both_zero() {
    assert_eq!(contrast_gender_frequency(0.0, 0.0, Gender::Male), 0.5);
    assert_eq!(contrast_onset_frequency(0.0, 0.0), 0.5);
}
