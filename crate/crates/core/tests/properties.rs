mod common;

use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;

use common::{bm25_alignment, bm25_all, bm25_ranking, compare_ranking, split, ToyCorpus};
use qoqa_core::alignment::{alignment_score, AlignmentMode, Backends};
use qoqa_core::analyzer::{is_stopword, stem, tokenize};
use qoqa_core::corpus::{Collection, Qrels, QueryRecord};
use qoqa_core::eval::{ndcg_at_k, query_ndcg, Gain, TrecRun};
use qoqa_core::optimizer::{optimize_query, MockScripted, OptimizerConfig, Recording};
use qoqa_core::rank::ScoredDoc;
use qoqa_core::sparse::{build_index, Bm25Params};

fn token() -> impl Strategy<Value = String> {
    (0..15u32).prop_map(|i| format!("t{i}"))
}

fn corpus() -> impl Strategy<Value = ToyCorpus> {
    prop::collection::vec(prop::collection::vec(token(), 1..12), 1..50).prop_map(ToyCorpus::from_tokens)
}

fn query() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop_oneof![9 => token(), 1 => Just("oov".to_string())], 1..=10)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sparse_search_matches_oracle(c in corpus(), q in query(), n in 1usize..60) {
        let index = build_index(&c.docs).unwrap();
        let p = Bm25Params::default();
        let got = index.search_terms(p, &q, n).unwrap();
        let oracle = bm25_ranking(&c, &q, p.k1, p.b);
        compare_ranking(&got, &oracle, n, 1e-9).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn bm25_score_matches_oracle_for_every_doc(c in corpus(), q in query(), k1 in 0.0f64..3.0, b in 0.0f64..=1.0) {
        let index = build_index(&c.docs).unwrap();
        let p = Bm25Params::new(k1, b).unwrap();
        let oracle = bm25_all(&c.tokens, &q, k1, b);
        for (doc, want) in c.docs.iter().zip(oracle) {
            let got = index.bm25_score(p, &q, &doc.id).unwrap();
            prop_assert!((got - want).abs() <= 1e-9, "{}: {got} vs {want}", doc.id);
        }
    }

    #[test]
    fn ranked_output_is_sorted_and_unique(c in corpus(), q in query(), n in 1usize..60) {
        let index = build_index(&c.docs).unwrap();
        let got = index.search_terms(Bm25Params::default(), &q, n).unwrap();
        prop_assert!(got.len() <= n);
        prop_assert!(got.windows(2).all(|w| w[0].score >= w[1].score));
        let ids: HashSet<&str> = got.iter().map(|d| d.doc_id.as_str()).collect();
        prop_assert_eq!(ids.len(), got.len());
    }

    /// Swapping a non-query token for another occurrence of a query term
    /// keeps |D|, avgDL and n(term) fixed and raises tf by one.
    #[test]
    fn extra_occurrence_never_lowers_score(c in corpus(), pick in any::<prop::sample::Index>(), term in token()) {
        let which = pick.index(c.docs.len());
        let doc = &c.tokens[which];
        prop_assume!(doc.contains(&term));
        let Some(slot) = doc.iter().position(|w| w != &term) else {
            return Ok(());
        };
        let q = vec![term.clone()];
        let before = build_index(&c.docs).unwrap();
        prop_assume!(before.idf(&term) > 0.0);
        let removed = doc[slot].clone();
        let mut tokens = c.tokens.clone();
        tokens[which][slot] = term.clone();
        // The replaced token's own document frequency may drop; only `term` is queried.
        let after_corpus = ToyCorpus::from_tokens(tokens);
        let after = build_index(&after_corpus.docs).unwrap();
        let id = &c.docs[which].id;
        let p = Bm25Params::default();
        let s0 = before.bm25_score(p, &q, id).unwrap();
        let s1 = after.bm25_score(p, &q, id).unwrap();
        prop_assert!(s1 >= s0, "{s0} -> {s1} after replacing {removed}");
    }

    #[test]
    fn alignment_matches_oracle(c in corpus(), q in query(), n in 1usize..8) {
        let index = build_index(&c.docs).unwrap();
        let p = Bm25Params::default();
        let got = alignment_score(&q.join(" "), AlignmentMode::Bm25, n, &Backends::sparse(&index, p)).unwrap();
        let want = bm25_alignment(&c, &q, n, p.k1, p.b);
        prop_assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
    }

    /// Re-tokenizing joined output converges to the stem fixed point of each
    /// token, with stopwords dropped.
    #[test]
    fn tokenize_reaches_stem_fixed_point(text in "[a-zA-Z0-9 ,.'-]{0,80}") {
        let first = tokenize(&text).into_terms();
        let fixed = |mut w: String| {
            for _ in 0..8 {
                let next = stem(&w);
                if next == w {
                    break;
                }
                w = next;
            }
            w
        };
        let expected: Vec<String> = first.iter().cloned().map(fixed).filter(|w| !is_stopword(w)).collect();
        let mut cur = first;
        for _ in 0..8 {
            let next = tokenize(&cur.join(" ")).into_terms();
            if next == cur {
                break;
            }
            cur = next;
        }
        prop_assert_eq!(tokenize(&cur.join(" ")).into_terms(), cur.clone());
        prop_assert_eq!(cur, expected);
    }

    #[test]
    fn ndcg_bounded_and_affine_invariant(
        scores in prop::collection::vec(-5.0f64..5.0, 1..25),
        grades in prop::collection::vec(0u32..4, 1..25),
        scale in 0.1f64..10.0,
        shift in -3.0f64..3.0,
    ) {
        let docs: Vec<ScoredDoc> = scores.iter().enumerate().map(|(i, s)| ScoredDoc::new(format!("d{i:02}"), *s)).collect();
        let judged: BTreeMap<String, u32> = grades.iter().enumerate().map(|(i, g)| (format!("d{i:02}"), *g)).collect();
        let v = query_ndcg(&docs, &judged, 10, Gain::Exponential);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        let moved: Vec<ScoredDoc> = docs.iter().map(|d| ScoredDoc::new(d.doc_id.clone(), d.score * scale + shift)).collect();
        let w = query_ndcg(&moved, &judged, 10, Gain::Exponential);
        // Exact ties could be broken by the transform's rounding; allow for it.
        let tied = scores.iter().enumerate().any(|(i, a)| scores[i + 1..].iter().any(|b| (a - b).abs() < 1e-9));
        prop_assert!(tied || (v - w).abs() < 1e-12, "{v} vs {w}");
    }

    #[test]
    fn ndcg_unchanged_by_swapping_equal_grades(
        grades in prop::collection::vec(0u32..3, 2..15),
        i in any::<prop::sample::Index>(),
        j in any::<prop::sample::Index>(),
    ) {
        let ranked_ids: Vec<String> = (0..grades.len()).map(|k| format!("d{k:02}")).collect();
        let (i, j) = (i.index(grades.len()), j.index(grades.len()));
        prop_assume!(grades[i] == grades[j]);
        let mut qrels = Qrels::new();
        for (id, g) in ranked_ids.iter().zip(&grades) {
            qrels.insert("q", id, *g);
        }
        qrels.insert("q", "relevant-anchor", 1);
        let make = |order: &[String]| {
            let mut run = TrecRun::new("t").unwrap();
            run.insert("q", order.iter().enumerate().map(|(r, id)| ScoredDoc::new(id.clone(), 100.0 - r as f64)).collect()).unwrap();
            run
        };
        let mut swapped = ranked_ids.clone();
        swapped.swap(i, j);
        let a = ndcg_at_k(&make(&ranked_ids), &qrels, 10, Gain::Exponential).unwrap().mean;
        let b = ndcg_at_k(&make(&swapped), &qrels, 10, Gain::Exponential).unwrap().mean;
        prop_assert!((a - b).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// No regression, monotone running maximum, exact call accounting and
    /// oracle-consistent entry scores under a random scripted rephraser.
    #[test]
    fn optimizer_invariants(
        c in corpus(),
        q in query(),
        script in prop::collection::vec(prop::collection::vec(query(), 0..4), 1..6),
        iters in 1u32..12,
        r0 in 1usize..4,
        ri in 1usize..3,
    ) {
        let index = build_index(&c.docs).unwrap();
        let coll = Collection::new(c.docs.clone()).unwrap();
        let p = Bm25Params::default();
        let lines: Vec<Vec<String>> = script.iter().map(|l| l.iter().map(|t| t.join(" ")).collect()).collect();
        let mut r = Recording::new(MockScripted::new(lines).unwrap());
        let cfg = OptimizerConfig { max_iters: iters, r_initial: r0, r_step: ri, ..Default::default() };
        let original = QueryRecord::new("q", q.join(" "));
        let res = optimize_query(&original, &cfg, &Backends::sparse(&index, p), &coll, &mut r).unwrap();

        let base = bm25_alignment(&c, &q, cfg.n_docs, p.k1, p.b);
        prop_assert!((res.original_score - base).abs() <= 1e-9);
        prop_assert!(res.best_score >= res.original_score);
        prop_assert_eq!(r.calls() as u32, 1 + res.iterations_run);
        prop_assert_eq!(r.requested(), r0 + ri * iters as usize);
        let mut running = f64::NEG_INFINITY;
        for e in res.trace.entries() {
            let want = bm25_alignment(&c, &split(&e.text), cfg.n_docs, p.k1, p.b);
            prop_assert!((e.score - want).abs() <= 1e-9, "{}: {} vs {want}", e.text, e.score);
            let next = running.max(e.score);
            prop_assert!(next >= running);
            running = next;
        }
        prop_assert_eq!(res.best_score, running);
    }
}
