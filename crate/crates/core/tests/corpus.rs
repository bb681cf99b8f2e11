use convctx::corpus::{
    corpus_stats, gap_histogram, load_corpus, parse_corpus, save_corpus, transition_matrix, write_corpus,
    GapDirection,
};
use convctx::synthgen::{generate, GeneratorSpec};
use convctx::Corpus;
use proptest::prelude::*;

fn spec_strategy() -> impl Strategy<Value = GeneratorSpec> {
    (0.0f64..=1.0, 0.0f64..=1.0, 1usize..5, 1usize..8, prop::bool::ANY).prop_map(
        |(persistence, alpha, smin, tmax, acoustic)| {
            let base = if acoustic {
                GeneratorSpec {
                    frames_per_segment: (1, 6),
                    ..GeneratorSpec::acoustic(3, 10.0)
                }
            } else {
                GeneratorSpec::default()
            };
            GeneratorSpec {
                transition: convctx::synthgen::persistent_transition(persistence),
                emission_ambiguity: alpha,
                segments_per_dialogue: (smin, smin + 4),
                tokens_per_segment: (1, tmax),
                n_agents: 3,
                ..base
            }
        },
    )
}

fn bytes(c: &Corpus) -> Vec<u8> {
    let mut out = Vec::new();
    write_corpus(c, &mut out).unwrap();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn save_load_round_trip(spec in spec_strategy(), n in 0usize..6, seed in any::<u64>()) {
        let corpus = generate(&spec, n, seed).unwrap();
        let text = bytes(&corpus);
        let back = parse_corpus(std::str::from_utf8(&text).unwrap()).unwrap();
        prop_assert_eq!(&back, &corpus);
        prop_assert_eq!(bytes(&back), text);
    }

    #[test]
    fn transition_rows_and_totals(spec in spec_strategy(), n in 1usize..8, seed in any::<u64>(), min_count in 0u64..4) {
        let corpus = generate(&spec, n, seed).unwrap();
        let tm = transition_matrix(&corpus, min_count);
        let pairs: u64 = corpus.dialogues().iter().map(|d| d.segments.len().saturating_sub(1) as u64).sum();
        prop_assert_eq!(tm.total(), pairs);
        for i in 0..4 {
            let sum: f64 = tm.probabilities[i].iter().sum();
            let row_total: u64 = tm.counts[i].iter().sum();
            if row_total > 0 {
                prop_assert!((sum - 1.0).abs() < 1e-9);
            } else {
                prop_assert_eq!(sum, 0.0);
            }
            prop_assert_eq!(tm.included[i], row_total > 0 && row_total >= min_count);
        }
    }

    #[test]
    fn gap_totals(spec in spec_strategy(), n in 1usize..8, seed in any::<u64>(), width in 0.1f64..2.0) {
        let corpus = generate(&spec, n, seed).unwrap();
        let pairs: usize = corpus.dialogues().iter().map(|d| d.segments.len().saturating_sub(1)).sum();
        for dir in [GapDirection::PreviousToTarget, GapDirection::TargetToNext] {
            let h = gap_histogram(&corpus, dir, width).unwrap();
            prop_assert_eq!(h.n_binned() + h.n_contiguous, pairs);
            prop_assert_eq!(h.n_missing, corpus.dialogues().len());
        }
    }

    #[test]
    fn stats_totals_are_class_sums(spec in spec_strategy(), n in 1usize..8, seed in any::<u64>()) {
        let corpus = generate(&spec, n, seed).unwrap();
        let s = corpus_stats(&corpus).unwrap();
        let segs: usize = s.per_class.iter().map(|c| c.segments).sum();
        let dur: f64 = s.per_class.iter().map(|c| c.total_duration_min).sum();
        prop_assert_eq!(segs, s.total.segments);
        prop_assert_eq!(segs, corpus.n_segments());
        prop_assert!((dur - s.total.total_duration_min).abs() < 1e-9);
    }
}

#[test]
fn file_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate(&GeneratorSpec::default(), 50, 0).unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    save_corpus(&corpus, &a).unwrap();
    let loaded = load_corpus(&a).unwrap();
    assert_eq!(loaded, corpus);
    save_corpus(&loaded, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}
