use std::collections::BTreeMap;

use proptest::prelude::*;

use codeshift::corpus::Strategy as Rewrite;
use codeshift::geometry::{l2_normalize, mean_offdiag_cosine, mean_offdiag_cosine_direct, EmbeddingMatrix};
use codeshift::lexical::{coverage_cdf, lexical_stats, token_entropy, TokenCounts, TokenId};
use codeshift::retrieval::{ndcg_at_k, retrieve_topk, retrieve_topk_bruteforce, Gain};
use codeshift::stats::{advise, average_ranks, pearson, spearman, Recommendation};
use codeshift::ExecMode;

fn matrix(rows: Vec<Vec<f64>>, prefix: &str) -> Option<EmbeddingMatrix> {
    let ids = (0..rows.len()).map(|i| format!("{prefix}{i:03}")).collect();
    l2_normalize(EmbeddingMatrix::from_rows("enc", ids, rows).ok()?).ok()
}

fn rows(b: std::ops::RangeInclusive<usize>, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), b)
        .prop_filter("no zero rows", |rs| rs.iter().all(|r| r.iter().any(|x| x.abs() > 1e-3)))
}

fn distinct(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, n).prop_filter("not constant", |v| v.iter().any(|&x| x != v[0]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn entropy_ignores_order_and_scale(mut tokens in prop::collection::vec(0u32..30, 1..200), c in 1u64..50) {
        let h = token_entropy(&TokenCounts::from_tokens(&tokens)).unwrap();
        tokens.reverse();
        let counts = TokenCounts::from_tokens(&tokens);
        prop_assert!((token_entropy(&counts).unwrap() - h).abs() < 1e-12);
        let scaled = TokenCounts::from_counts(counts.iter().map(|(t, n)| (t, n * c))).unwrap();
        prop_assert!((token_entropy(&scaled).unwrap() - h).abs() < 1e-12);
        prop_assert!(h >= 0.0 && h <= (counts.unique() as f64).log2() + 1e-12);
    }

    #[test]
    fn all_hapax_means_uniform_entropy(n in 1u32..200) {
        let tokens: Vec<TokenId> = (0..n).collect();
        let s = lexical_stats(&tokens, n).unwrap();
        prop_assert_eq!(s.hapax_type_rate, 1.0);
        prop_assert!((s.h_bits - f64::from(n).log2()).abs() < 1e-12);
    }

    #[test]
    fn coverage_is_monotone_and_complete(tokens in prop::collection::vec(0u32..50, 1..300)) {
        let cov = coverage_cdf(&TokenCounts::from_tokens(&tokens)).unwrap();
        prop_assert!(cov.points.windows(2).all(|w| w[0].1 <= w[1].1));
        prop_assert!((cov.points.last().unwrap().1 - 1.0).abs() < 1e-9);
        prop_assert!(cov.points[cov.k80 - 1].1 >= 0.8 - 1e-12);
    }

    #[test]
    fn s_bar_fast_path_and_bounds(rs in rows(2..=40, 6)) {
        let m = matrix(rs.clone(), "r").unwrap();
        let fast = mean_offdiag_cosine(ExecMode::Parallel, &m).unwrap();
        let direct = mean_offdiag_cosine_direct(ExecMode::Sequential, &m).unwrap();
        prop_assert!((fast - direct).abs() < 1e-9);
        prop_assert!(fast >= -1.0 / (m.len() as f64 - 1.0) - 1e-9 && fast <= 1.0 + 1e-9);
        let mut rev = rs;
        rev.reverse();
        let r = mean_offdiag_cosine(ExecMode::Sequential, &matrix(rev, "r").unwrap()).unwrap();
        prop_assert!((r - fast).abs() < 1e-9);
    }

    #[test]
    fn topk_matches_full_sort(docs in rows(1..=60, 3), qs in rows(1..=8, 3), k in 1usize..70) {
        let corpus = matrix(docs, "d").unwrap();
        let queries = matrix(qs, "q").unwrap();
        let fast = retrieve_topk(ExecMode::Parallel, &queries, &corpus, k).unwrap();
        let slow = retrieve_topk_bruteforce(ExecMode::Sequential, &queries, &corpus, k).unwrap();
        prop_assert_eq!(fast, slow);
    }

    #[test]
    fn ndcg_bounded_and_swap_monotone(grades in prop::collection::vec(0u32..4, 1..8), k in 1usize..10) {
        prop_assume!(grades.iter().any(|&g| g > 0));
        let docs: Vec<String> = (0..grades.len()).map(|i| format!("d{i}")).collect();
        let qrels: BTreeMap<String, u32> = docs.iter().cloned().zip(grades.iter().copied()).collect();
        for gain in [Gain::Linear, Gain::Exp] {
            let v = ndcg_at_k(&docs, &qrels, k, gain).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            for i in 0..docs.len() {
                for j in i + 1..docs.len() {
                    if grades[i] > grades[j] {
                        let mut s = docs.clone();
                        s.swap(i, j);
                        prop_assert!(ndcg_at_k(&s, &qrels, k, gain).unwrap() <= v + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn spearman_is_pearson_on_ranks_and_symmetric(x in distinct(3..=15), y in distinct(3..=15)) {
        let n = x.len().min(y.len());
        let (x, y) = (&x[..n], &y[..n]);
        prop_assume!(x.iter().any(|&a| a != x[0]) && y.iter().any(|&a| a != y[0]));
        let s = spearman(x, y).unwrap();
        let on_ranks = pearson(&average_ranks(x), &average_ranks(y)).unwrap();
        prop_assert!((s.coefficient - on_ranks.coefficient).abs() < 1e-12);
        let swapped = spearman(y, x).unwrap();
        prop_assert!((s.coefficient - swapped.coefficient).abs() < 1e-12);
        prop_assert!((s.p_value - swapped.p_value).abs() < 1e-12);
        prop_assert!(s.p_value > 0.0 && s.p_value <= 1.0);
        let p = pearson(x, y).unwrap();
        prop_assert!((p.coefficient - pearson(y, x).unwrap().coefficient).abs() < 1e-12);
        prop_assert!(p.coefficient.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn advice_survives_positive_scaling(r in -2.0f64..2.0, p in -2.0f64..2.0, nl in -2.0f64..2.0, c in 0.01f64..100.0) {
        let dh: BTreeMap<Rewrite, f64> = [(Rewrite::Rephrase, r), (Rewrite::Pseudo, p), (Rewrite::NL, nl)].into();
        let scaled: BTreeMap<Rewrite, f64> = dh.iter().map(|(&s, &v)| (s, v * c)).collect();
        let a = advise("t", &dh, 0.0).unwrap();
        prop_assert_eq!(a.recommended, advise("t", &scaled, 0.0).unwrap().recommended);
        prop_assert_eq!(a.recommended == Recommendation::Skip, dh.values().all(|&v| v <= 0.0));
    }
}
