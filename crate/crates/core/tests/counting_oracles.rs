mod common;

use std::time::Instant;

use common::{brute_bigrams, brute_pattern_counts, random_docs, random_pattern, rng};
use patmine_core::corpus::UserDocument;
use patmine_core::patterns::{count_matches, match_pattern, Pattern, PatternIndex};
use patmine_core::wordgraph::build_word_graph;
use proptest::prelude::*;
use rand::seq::SliceRandom;

#[test]
fn word_graph_matches_brute_force_on_100_corpora() {
    let start = Instant::now();
    let mut r = rng(11);
    for case in 0..100 {
        let docs = random_docs(&mut r, 20, 50);
        let refs: Vec<&UserDocument> = docs.iter().collect();
        let (oracle, total) = brute_bigrams(&docs);
        for min_edge_count in [1, 2] {
            let g = build_word_graph(&refs, min_edge_count).unwrap();
            assert_eq!(g.total_bigrams, total, "case {case}");
            let kept: Vec<_> = oracle
                .iter()
                .filter(|(_, (c, _))| *c >= min_edge_count)
                .collect();
            assert_eq!(g.edges.len(), kept.len(), "case {case}");
            for (key, &(count, users)) in kept {
                let e = &g.edges[key];
                let tf = count as f64 / total as f64;
                let df = users as f64 / docs.len() as f64;
                assert_eq!((e.count, e.users), (count, users));
                assert_eq!(
                    (e.tf, e.df, e.weight),
                    (tf, df, tf * df),
                    "case {case} {key:?}"
                );
            }
        }
    }
    assert!(start.elapsed().as_secs() < 60);
}

#[test]
fn pattern_counts_match_brute_force_on_100_corpora() {
    let mut r = rng(12);
    for case in 0..100 {
        let docs = random_docs(&mut r, 20, 50);
        let refs: Vec<&UserDocument> = docs.iter().collect();
        let mut patterns: Vec<Pattern> = (0..8).map(|_| random_pattern(&mut r)).collect();
        patterns.sort_by_key(Pattern::text);
        patterns.dedup_by_key(|p| p.text());
        let counts = count_matches(&patterns, &refs);
        let index = PatternIndex::new(&patterns);
        for (i, p) in patterns.iter().enumerate() {
            let (per_user, fillers) = brute_pattern_counts(p, &docs);
            for (d, &expected) in docs.iter().zip(&per_user) {
                assert_eq!(
                    counts.count(&d.user_id, i),
                    expected,
                    "case {case} {}",
                    p.text()
                );
                assert_eq!(index.count_doc(d)[i], expected);
                let direct: usize = d
                    .tweets
                    .iter()
                    .map(|t| match_pattern(p, &t.tokens).len())
                    .sum();
                assert_eq!(direct as u64, expected);
            }
            assert_eq!(counts.total(i), per_user.iter().sum::<u64>());
            assert_eq!(
                counts.users_matching(i),
                per_user.iter().filter(|&&c| c > 0).count()
            );
            let ours: std::collections::BTreeSet<String> =
                counts.filler_set(i).into_iter().map(String::from).collect();
            assert_eq!(ours, fillers);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn graph_independent_of_document_order(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut docs = random_docs(&mut r, 12, 20);
        let a = build_word_graph(&docs.iter().collect::<Vec<_>>(), 1).unwrap();
        docs.shuffle(&mut r);
        let b = build_word_graph(&docs.iter().collect::<Vec<_>>(), 1).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn tf_sums_to_one_without_pruning(seed in any::<u64>()) {
        let mut r = rng(seed);
        let docs = random_docs(&mut r, 10, 20);
        let g = build_word_graph(&docs.iter().collect::<Vec<_>>(), 1).unwrap();
        if g.total_bigrams > 0 {
            let s: f64 = g.edges.values().map(|e| e.tf).sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }
        prop_assert!(g.edges.values().all(|e| e.df > 0.0 && e.df <= 1.0 && e.weight <= e.tf));
    }
}
