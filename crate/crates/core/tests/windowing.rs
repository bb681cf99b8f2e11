use convctx::corpus::{Dialogue, Segment};
use convctx::synthgen::{generate, GeneratorSpec};
use convctx::windowing::{
    acoustic_turn_context, build_acoustic_dataset, build_dataset, token_context, turn_context, ContextPolicy,
    Direction, PositionRole, SpeakerScope,
};
use convctx::{Corpus, EmotionLabel, Role};
use proptest::prelude::*;

fn small_spec() -> impl Strategy<Value = GeneratorSpec> {
    (1usize..6, 1usize..10).prop_map(|(tmax, smax)| GeneratorSpec {
        tokens_per_segment: (1, tmax),
        segments_per_dialogue: (1, smax),
        ..GeneratorSpec::default()
    })
}

/// Tokens of all earlier segments in order, then the last `n`.
fn oracle_prev(d: &Dialogue, idx: usize, n: usize) -> Vec<String> {
    let all: Vec<String> = d.segments[..idx].iter().flat_map(|s| s.tokens.clone()).collect();
    all[all.len().saturating_sub(n)..].to_vec()
}

fn oracle_next(d: &Dialogue, idx: usize, n: usize) -> Vec<String> {
    d.segments[idx + 1..].iter().flat_map(|s| s.tokens.clone()).take(n).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn token_windows_match_concatenation(spec in small_spec(), seed in any::<u64>(), np in 0usize..30, nn in 0usize..30) {
        let corpus = generate(&spec, 3, seed).unwrap();
        for d in corpus.dialogues() {
            for (idx, s) in d.segments.iter().enumerate() {
                let c = token_context(&corpus, &d.dialogue_id, &s.segment_id, np, nn).unwrap();
                prop_assert_eq!(&c.target_tokens, &s.tokens);
                prop_assert_eq!(c.prev_tokens, oracle_prev(d, idx, np));
                prop_assert_eq!(c.next_tokens, oracle_next(d, idx, nn));
                prop_assert_eq!(c.label, s.label);
            }
        }
    }

    #[test]
    fn target_positions_are_the_segment(spec in small_spec(), seed in any::<u64>(), np in 0usize..20, nn in 0usize..20) {
        let corpus = generate(&spec, 3, seed).unwrap();
        for policy in [
            ContextPolicy::tokens(np, nn),
            ContextPolicy::turns(Direction::Previous, SpeakerScope::All),
            ContextPolicy::turns(Direction::Next, SpeakerScope::Opposite),
            ContextPolicy::turns(Direction::Both, SpeakerScope::Same),
        ] {
            for sample in build_dataset(&corpus, &policy).unwrap() {
                let (d, idx) = corpus.locate(&sample.dialogue_id, &sample.segment_id).unwrap();
                let positions = sample.positions();
                let mask = sample.role_mask();
                prop_assert_eq!(positions.len(), mask.len());
                let target: Vec<&str> = positions
                    .iter()
                    .zip(&mask)
                    .filter(|(_, r)| **r == PositionRole::Target)
                    .map(|(t, _)| *t)
                    .collect();
                let expected: Vec<&str> = d.segments[idx].tokens.iter().map(String::as_str).collect();
                prop_assert_eq!(target, expected);
            }
        }
    }

    #[test]
    fn none_is_zero_token_window(spec in small_spec(), seed in any::<u64>()) {
        let corpus = generate(&spec, 4, seed).unwrap();
        let a = build_dataset(&corpus, &ContextPolicy::none()).unwrap();
        let b = build_dataset(&corpus, &ContextPolicy::tokens(0, 0)).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.iter().all(|s| s.context_len() == 0));
    }

    #[test]
    fn acoustic_input_respects_cap(seed in any::<u64>(), cap in 4.0f64..9.0) {
        let spec = GeneratorSpec::acoustic(3, 10.0);
        let corpus = generate(&spec, 3, seed).unwrap();
        for dir in [Direction::Previous, Direction::Next, Direction::Both] {
            let policy = ContextPolicy { max_input_s: cap, ..ContextPolicy::turns(dir, SpeakerScope::All) };
            for s in build_acoustic_dataset(&corpus, &policy).unwrap() {
                let seg = &corpus.locate(&s.dialogue_id, &s.segment_id).unwrap();
                let seg = &seg.0.segments[seg.1];
                prop_assert!(s.total_duration_s <= cap + 1e-9);
                prop_assert_eq!(s.len() as f64 / corpus.frame_rate(), s.total_duration_s);
                prop_assert_eq!(&s.target_frames, seg.frames.as_ref().unwrap());
            }
        }
    }
}

fn seg(id: &str, spk: &str, role: Role, start: f64, toks: &[&str]) -> Segment {
    Segment {
        segment_id: id.into(),
        speaker_id: spk.into(),
        role,
        start_s: start,
        end_s: start + 0.2 * toks.len() as f64,
        tokens: toks.iter().map(|t| t.to_string()).collect(),
        frames: None,
        label: EmotionLabel::Neutral,
    }
}

fn alternating() -> Corpus {
    let segments = (0..6)
        .map(|j| {
            let (spk, role) = if j % 2 == 0 { ("c1", Role::Caller) } else { ("a1", Role::Agent) };
            seg(&format!("s{j}"), spk, role, j as f64 * 2.0, &[&format!("w{j}")])
        })
        .collect();
    Corpus::new(
        vec![Dialogue {
            dialogue_id: "d".into(),
            segments,
        }],
        0.0,
        0,
    )
    .unwrap()
}

#[test]
fn same_speaker_previous_turn_skips_one() {
    let corpus = alternating();
    for idx in 0..6usize {
        let c = turn_context(&corpus, "d", &format!("s{idx}"), Direction::Previous, SpeakerScope::Same).unwrap();
        let expected: Vec<String> = if idx >= 2 { vec![format!("w{}", idx - 2)] } else { vec![] };
        assert_eq!(c.prev_tokens, expected);
        assert!(c.next_tokens.is_empty());

        let o = turn_context(&corpus, "d", &format!("s{idx}"), Direction::Previous, SpeakerScope::Opposite).unwrap();
        let expected: Vec<String> = if idx >= 1 { vec![format!("w{}", idx - 1)] } else { vec![] };
        assert_eq!(o.prev_tokens, expected);

        let n = turn_context(&corpus, "d", &format!("s{idx}"), Direction::Next, SpeakerScope::Same).unwrap();
        let expected: Vec<String> = if idx + 2 < 6 { vec![format!("w{}", idx + 2)] } else { vec![] };
        assert_eq!(n.next_tokens, expected);
    }
}

#[test]
fn unknown_segment_is_an_error() {
    let corpus = alternating();
    assert!(token_context(&corpus, "d", "nope", 1, 1).is_err());
    assert!(turn_context(&corpus, "x", "s0", Direction::Previous, SpeakerScope::All).is_err());
}

#[test]
fn acoustic_cap_trims_context_not_target() {
    let spec = GeneratorSpec {
        frames_per_segment: (30, 40),
        ..GeneratorSpec::acoustic(2, 10.0)
    };
    let corpus = generate(&spec, 2, 0).unwrap();
    let d = &corpus.dialogues()[0];
    let s = &d.segments[1];
    let c = acoustic_turn_context(&corpus, &d.dialogue_id, &s.segment_id, Direction::Previous, SpeakerScope::All, 6.5)
        .unwrap();
    let target_rows = s.frames.as_ref().unwrap().rows();
    assert_eq!(c.target_frames.rows(), target_rows);
    assert_eq!(c.prev_frames.rows(), 65 - target_rows);
    // The kept rows are the ones closest to the target.
    let prev = d.segments[0].frames.as_ref().unwrap();
    let tail = prev.slice_rows(prev.rows() - c.prev_frames.rows(), prev.rows());
    assert_eq!(c.prev_frames, tail);
}
