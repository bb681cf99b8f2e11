//! Acceptance suite. Runs every criterion, prints one line per criterion and
//! exits non-zero if any fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use convctx::corpus::{
    corpus_stats, gap_histogram, parse_corpus, transition_matrix, write_corpus, GapDirection,
};
use convctx::evaluation::{
    self, confusion_matrix, evaluate, unweighted_accuracy, PredictionSet, Provenance,
};
use convctx::matrix::Matrix;
use convctx::model::{
    context_vector, encode, forward, logits_from_embeddings, loss_and_grad, EncoderConfig, EncoderParams,
    InputKind, ModelInput, ModelSample, Vocabulary,
};
use convctx::rng;
use convctx::synthgen::{
    exact_bayes_ua, generate, persistent_transition, stationary_distribution, GeneratorSpec,
};
use convctx::training::{
    cross_validate, hierarchical_train, initial_params, make_folds, token_sweep, train_on, AdamConfig, Dataset,
    Init, TrainConfig,
};
use convctx::windowing::{
    build_acoustic_dataset, build_dataset, ContextPolicy, Direction, PositionRole, SpeakerScope,
};
use convctx::{Corpus, Dialogue, EmotionLabel, Role, Segment};
use rand::Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn tiny(mwce: bool, ccfte: bool) -> EncoderConfig {
    EncoderConfig {
        d_model: 8,
        n_layers: 1,
        n_heads: 2,
        d_ff: 12,
        max_positions: 12,
        input: InputKind::Tokens { vocab_size: 12 },
        dropout_rate: 0.0,
        d_ctx: 4,
        mwce,
        ccfte,
        ..EncoderConfig::default()
    }
}

fn sample(ids: &[usize], roles: &[PositionRole], label: EmotionLabel) -> ModelSample {
    ModelSample {
        input: ModelInput::Tokens(ids.to_vec()),
        roles: roles.to_vec(),
        label,
    }
}

const STRATEGIES: [(bool, bool); 4] = [(false, false), (true, false), (false, true), (true, true)];

fn criterion_1() -> Outcome {
    use PositionRole::{Context, Target};
    let start = Instant::now();
    let batch = vec![
        sample(&[1, 2, 3, 4], &[Context, Context, Target, Target], EmotionLabel::Anger),
        sample(&[5, 6], &[Target, Target], EmotionLabel::Fear),
        sample(&[7, 8, 9], &[Context, Target, Context], EmotionLabel::Neutral),
        sample(&[0, 10, 11, 2, 3], &[Target, Target, Target, Context, Context], EmotionLabel::Positive),
    ];
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for (k, (mwce, ccfte)) in STRATEGIES.into_iter().enumerate() {
        let mut params = EncoderParams::init(&tiny(mwce, ccfte), &mut rng::indexed(11, k as u64)).unwrap();
        if let Some(c) = params.ccfte.as_mut() {
            for v in c.default_ctx.as_mut_slice() {
                *v = 0.3;
            }
        }
        let (_, grads) = loss_and_grad(&params, &batch).unwrap();
        let analytic: Vec<(String, Vec<f64>)> = grads
            .named_tensors()
            .into_iter()
            .map(|(n, m)| (n, m.as_slice().to_vec()))
            .collect();
        for (t, (name, values)) in analytic.iter().enumerate() {
            for (i, &a) in values.iter().enumerate() {
                let eval = |delta: f64| {
                    let mut p = params.clone();
                    p.tensors_mut()[t].as_mut_slice()[i] += delta;
                    loss_and_grad(&p, &batch).unwrap().0
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
                checked += 1;
                ensure!(
                    rel < 1e-4,
                    "mwce={mwce} ccfte={ccfte} {name}[{i}]: analytic {a:e} numeric {numeric:e}"
                );
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1}s");
    Ok(format!("{checked} gradients, worst relative error {worst:.2e}, {secs:.1}s"))
}

fn perturb(m: &Matrix, roles: &[PositionRole], which: PositionRole, r: &mut impl Rng) -> Matrix {
    let mut out = m.clone();
    for (t, role) in roles.iter().enumerate() {
        if *role == which {
            for v in out.row_mut(t) {
                *v += r.random::<f64>() * 4.0 - 2.0;
            }
        }
    }
    out
}

fn random_sample(r: &mut impl Rng, min_prev: usize) -> (Vec<usize>, Vec<PositionRole>) {
    let n_prev = r.random_range(min_prev..4);
    let n_tgt = r.random_range(1..4);
    let n_next = r.random_range(0..4);
    let n = n_prev + n_tgt + n_next;
    let ids = (0..n).map(|_| r.random_range(0..12)).collect();
    let roles = (0..n)
        .map(|i| {
            if i >= n_prev && i < n_prev + n_tgt {
                PositionRole::Target
            } else {
                PositionRole::Context
            }
        })
        .collect();
    (ids, roles)
}

fn criterion_2() -> Outcome {
    let mut r = rng::indexed(2, 0);
    let trials = 1000;
    let mut with_context = 0;
    for trial in 0..trials {
        let (ids, roles) = random_sample(&mut r, 0);
        if roles.contains(&PositionRole::Context) {
            with_context += 1;
        }
        let s = sample(&ids, &roles, EmotionLabel::Anger);

        let mw = EncoderParams::init(&tiny(true, false), &mut rng::indexed(2, 1 + trial)).unwrap();
        let emb = encode(&mw, &s).unwrap();
        let mut moved = emb.clone();
        moved.rows = perturb(&emb.rows, &roles, PositionRole::Context, &mut r);
        let a = logits_from_embeddings(&mw, &emb).unwrap().map(f64::to_bits);
        let b = logits_from_embeddings(&mw, &moved).unwrap().map(f64::to_bits);
        ensure!(a == b, "trial {trial}: MWCE logits moved with context embeddings");

        // The context vector needs at least one context row.
        let (ids, roles) = random_sample(&mut r, 1);
        let s = sample(&ids, &roles, EmotionLabel::Fear);
        let mwce = r.random();
        let cc = EncoderParams::init(&tiny(mwce, true), &mut rng::indexed(2, 10_000 + trial)).unwrap();
        let emb = encode(&cc, &s).unwrap();
        let mut moved = emb.clone();
        moved.rows = perturb(&emb.rows, &roles, PositionRole::Target, &mut r);
        let a = context_vector(&cc, &emb).unwrap();
        let b = context_vector(&cc, &moved).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        ensure!(bits(&a.0) == bits(&b.0), "trial {trial}: context vector moved with target embeddings");
    }
    Ok(format!("{trials} trials per property ({with_context} with context rows), bitwise"))
}

fn small_model() -> EncoderConfig {
    EncoderConfig {
        d_model: 8,
        n_layers: 1,
        n_heads: 2,
        d_ff: 16,
        d_ctx: 4,
        max_positions: 64,
        ..EncoderConfig::default()
    }
}

fn criterion_3() -> Outcome {
    let corpus = generate(&GeneratorSpec::default(), 50, 3).unwrap();
    let vocab = Vocabulary::from_corpus(&corpus);
    let samples: Vec<ModelSample> = build_dataset(&corpus, &ContextPolicy::none())
        .unwrap()
        .iter()
        .map(|s| vocab.encode(s))
        .collect();
    ensure!(samples.len() == corpus.n_segments(), "dataset misses segments");
    for (k, (mwce, ccfte)) in STRATEGIES.into_iter().enumerate() {
        let cfg = EncoderConfig {
            input: InputKind::Tokens { vocab_size: vocab.size() },
            mwce,
            ccfte,
            ..small_model()
        };
        let params = EncoderParams::init(&cfg, &mut rng::indexed(3, k as u64)).unwrap();
        let base = params.baseline();
        for (i, s) in samples.iter().enumerate() {
            let a = forward(&params, s).unwrap().map(f64::to_bits);
            let b = forward(&base, s).unwrap().map(f64::to_bits);
            ensure!(a == b, "mwce={mwce} ccfte={ccfte}: sample {i} differs from the baseline");
        }
    }

    let plan = make_folds(&corpus, 5, 0).unwrap();
    let cfg = TrainConfig {
        max_epochs: 3,
        model: small_model(),
        ..TrainConfig::default()
    };
    let sweep = token_sweep(&corpus, &plan, &[(0, 0), (10, 0)], &cfg).unwrap();
    let baseline = cross_validate(&corpus, &plan, &cfg.with_policy(ContextPolicy::none())).unwrap();
    let zero = &sweep[0].0;
    ensure!((zero.n_prev, zero.n_next) == (0, 0), "first sweep row is not (0,0)");
    ensure!(
        zero.ua.to_bits() == baseline.ua.to_bits(),
        "sweep (0,0) UA {} vs baseline {}",
        zero.ua,
        baseline.ua
    );
    ensure!(sweep[0].1.combined == baseline.combined, "sweep (0,0) predictions differ from the baseline");
    Ok(format!(
        "{} segments x 4 strategies bitwise; sweep (0,0) UA {:.4} == baseline",
        samples.len(),
        zero.ua
    ))
}

fn run_files(preds: &PredictionSet, corpus: &Corpus) -> Vec<(String, Vec<u8>)> {
    let dir = tempfile::tempdir().unwrap();
    let report = evaluate(preds, Some(corpus)).unwrap();
    let mut files: Vec<(String, Vec<u8>)> = evaluation::report(&report, None, dir.path())
        .unwrap()
        .into_iter()
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read(&p).unwrap())
        })
        .collect();
    files.push(("predictions.json".into(), serde_json::to_vec(preds).unwrap()));
    files
}

fn criterion_4() -> Outcome {
    let corpus = generate(&GeneratorSpec::default(), 80, 4).unwrap();
    let speakers: BTreeSet<String> = corpus.speakers().into_iter().map(String::from).collect();
    ensure!(speakers.len() == 100, "{} speakers", speakers.len());
    let plan = make_folds(&corpus, 5, 0).unwrap();
    ensure!(plan.folds.len() == 5, "{} folds", plan.folds.len());
    let mut tested = BTreeSet::new();
    for f in &plan.folds {
        ensure!(f.is_disjoint(), "fold {} sets overlap", f.index);
        for s in &f.test {
            ensure!(tested.insert(s.clone()), "speaker {s} tested twice");
        }
    }
    ensure!(tested == speakers, "test sets do not cover every speaker");

    let cfg = TrainConfig {
        max_epochs: 2,
        seed: 0,
        model: small_model(),
        policy: ContextPolicy::turns(Direction::Previous, SpeakerScope::All),
        ..TrainConfig::default()
    };
    let cfg = TrainConfig {
        model: EncoderConfig { ccfte: true, ..cfg.model.clone() },
        ..cfg
    };
    let a = cross_validate(&corpus, &plan, &cfg).unwrap();
    let plan_b = make_folds(&corpus, 5, 0).unwrap();
    ensure!(plan_b == plan, "fold plans differ between runs");
    let b = cross_validate(&corpus, &plan_b, &cfg).unwrap();
    ensure!(a.records == b.records, "run records differ");
    ensure!(a.combined == b.combined, "pooled predictions differ");
    ensure!(run_files(&a.combined, &corpus) == run_files(&b.combined, &corpus), "report files differ");
    Ok(format!("100 speakers, 5 disjoint folds, two seed-0 runs identical (UA {:.4})", a.ua))
}

fn brute_force_ua(pairs: &[(usize, usize)]) -> f64 {
    let mut total = 0.0;
    for c in 0..4 {
        let support = pairs.iter().filter(|(t, _)| *t == c).count();
        let hits = pairs.iter().filter(|(t, p)| *t == c && *p == c).count();
        total += hits as f64 / support as f64;
    }
    total / 4.0
}

fn prediction_set(pairs: &[(usize, usize)]) -> PredictionSet {
    let mut set = PredictionSet::new(Provenance {
        folds: vec![0],
        config_hash: "acceptance".into(),
    });
    for (i, (t, p)) in pairs.iter().enumerate() {
        set.insert(
            &format!("d{}", i / 10),
            &format!("s{}", i % 10),
            EmotionLabel::ALL[*t],
            EmotionLabel::ALL[*p],
        );
    }
    set
}

fn criterion_5() -> Outcome {
    let mut r = rng::indexed(5, 0);
    let mut worst = 0.0f64;
    for trial in 0..1000 {
        let n = r.random_range(4..300);
        let mut pairs: Vec<(usize, usize)> = (0..n).map(|_| (r.random_range(0..4), r.random_range(0..4))).collect();
        for c in 0..4 {
            pairs[c].0 = c;
        }
        // Occasionally a skewed predictor.
        if trial % 3 == 0 {
            let fav = r.random_range(0..4);
            for p in pairs.iter_mut().filter(|_| r.random_bool(0.5)) {
                p.1 = fav;
            }
        }
        let set = prediction_set(&pairs);
        let ua = unweighted_accuracy(&set).unwrap();
        let err = (ua - brute_force_ua(&pairs)).abs();
        worst = worst.max(err);
        ensure!(err <= 1e-12, "trial {trial}: UA {ua} vs oracle {}", brute_force_ua(&pairs));
        let total: usize = confusion_matrix(&set).iter().flatten().sum();
        ensure!(total == n, "confusion total {total} != {n}");
    }
    let pairs: Vec<(usize, usize)> = (0..10_000).map(|i| (i % 4, r.random_range(0..4))).collect();
    let chance = unweighted_accuracy(&prediction_set(&pairs)).unwrap();
    ensure!((chance - 0.25).abs() <= 0.02, "random predictions give UA {chance}");
    Ok(format!("1000 sets, max error {worst:.1e}; chance UA {chance:.4} at n=10000"))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let spec = GeneratorSpec {
        transition: persistent_transition(0.68),
        emission_ambiguity: 0.5,
        ..GeneratorSpec::default()
    };
    let oracle = exact_bayes_ua(&spec).unwrap();
    let bound_base = oracle.bayes_ua_no_context;
    let bound_ctx = oracle.bayes_ua_with_prev_context.unwrap();
    let model = EncoderConfig {
        d_model: 16,
        n_layers: 1,
        n_heads: 2,
        d_ff: 32,
        d_ctx: 8,
        max_positions: 32,
        dropout_rate: 0.1,
        mwce: true,
        ccfte: true,
        ..EncoderConfig::default()
    };
    let mut base = Vec::new();
    let mut ctx = Vec::new();
    for seed in 0..5u64 {
        let corpus = generate(&spec, 200, seed).unwrap();
        let plan = make_folds(&corpus, 5, seed).unwrap();
        let base_cfg = TrainConfig {
            seed,
            model: model.baseline(),
            ..TrainConfig::default()
        };
        let ctx_cfg = TrainConfig {
            model: model.clone(),
            policy: ContextPolicy::turns(Direction::Previous, SpeakerScope::All),
            ..base_cfg.clone()
        };
        base.push(cross_validate(&corpus, &plan, &base_cfg).unwrap().ua);
        ctx.push(cross_validate(&corpus, &plan, &ctx_cfg).unwrap().ua);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mb, mc) = (mean(&base), mean(&ctx));
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    let detail = format!(
        "baseline mean {mb:.4} [{}] (bound {bound_base:.4}), context mean {mc:.4} [{}] (bound {bound_ctx:.4}), {:.0}s",
        fmt(&base),
        fmt(&ctx),
        start.elapsed().as_secs_f64()
    );
    ensure!(mc > mb, "context does not beat baseline: {detail}");
    ensure!(mb > 0.25 && mb <= bound_base, "baseline mean out of bounds: {detail}");
    ensure!(mc > 0.25 && mc <= bound_ctx, "context mean out of bounds: {detail}");
    Ok(detail)
}

fn criterion_7() -> Outcome {
    let spec = GeneratorSpec {
        transition: [
            [0.6, 0.2, 0.1, 0.1],
            [0.1, 0.5, 0.3, 0.1],
            [0.2, 0.1, 0.6, 0.1],
            [0.1, 0.1, 0.1, 0.7],
        ],
        ..GeneratorSpec::default()
    };
    let mut lines = Vec::new();
    for (name, spec) in [("default", GeneratorSpec::default()), ("asymmetric", spec)] {
        let corpus = generate(&spec, 300, 7).unwrap();
        let tm = transition_matrix(&corpus, 1);
        ensure!(tm.total() >= 2000, "{name}: only {} transitions", tm.total());
        let mut worst = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                worst = worst.max((tm.probabilities[i][j] - spec.transition[i][j]).abs());
            }
        }
        ensure!(worst <= 0.05, "{name}: transition cell off by {worst}");
        let pi = stationary_distribution(&spec.transition);
        let mut counts = [0usize; 4];
        for (_, s) in corpus.segments() {
            counts[s.label.code()] += 1;
        }
        let n = corpus.n_segments() as f64;
        let worst_m = (0..4).map(|c| (counts[c] as f64 / n - pi[c]).abs()).fold(0.0, f64::max);
        ensure!(worst_m <= 0.05, "{name}: marginal off by {worst_m}");
        lines.push(format!("{name}: {} transitions, max cell dev {worst:.3}, max marginal dev {worst_m:.3}", tm.total()));
    }
    Ok(lines.join("; "))
}

fn criterion_8() -> Outcome {
    let corpus = generate(&GeneratorSpec::default(), 16, 8).unwrap();
    let plan = make_folds(&corpus, 3, 0).unwrap();
    let fold = &plan.folds[0];
    let model = EncoderConfig {
        ccfte: true,
        ..small_model()
    };
    let phase1 = TrainConfig {
        max_epochs: 2,
        model: model.baseline(),
        ..TrainConfig::default()
    };
    let phase2 = TrainConfig {
        model: model.clone(),
        policy: ContextPolicy::turns(Direction::Previous, SpeakerScope::All),
        optimizer: AdamConfig {
            learning_rate: 5e-4,
            ..AdamConfig::default()
        },
        ..phase1.clone()
    };

    let base = Dataset::build(&corpus, &phase1.policy, phase1.modality).unwrap();
    let (p1_record, p1) = train_on(&base, fold, &phase1, Init::Fresh).unwrap();
    let ctx_data = Dataset::build(&corpus, &phase2.policy, phase2.modality).unwrap();
    let ctl_cfg = phase2.with_policy(ContextPolicy::none());
    let ctl_data = Dataset::build(&corpus, &ctl_cfg.policy, ctl_cfg.modality).unwrap();
    let ctx_start = initial_params(&ctx_data, &phase2, Init::WarmStart(&p1)).unwrap();
    let ctl_start = initial_params(&ctl_data, &ctl_cfg, Init::WarmStart(&p1)).unwrap();
    ensure!(ctx_start.shared_bit_eq(&p1), "context run does not start from the checkpoint");
    ensure!(ctl_start.shared_bit_eq(&p1), "control run does not start from the checkpoint");

    let rec = hierarchical_train(&corpus, fold, &phase1, &phase2).unwrap();
    ensure!(rec.phase1_checkpoint == p1_record.checkpoint_hash, "phase-1 checkpoint hash not reproduced");
    ensure!(rec.phase1_checkpoint == rec.phase1.checkpoint_hash, "record hash mismatch");

    let none2 = phase2.with_policy(ContextPolicy::none());
    let rec_none = hierarchical_train(&corpus, fold, &phase1, &none2).unwrap();
    ensure!(rec_none.context == rec_none.control, "phase 2 without context differs from the control");
    ensure!(rec_none.phase1_checkpoint == rec.phase1_checkpoint, "checkpoint differs across runs");
    Ok(format!(
        "warm start bitwise, shared checkpoint {}, none == control",
        &rec.phase1_checkpoint[..12]
    ))
}

fn hand_corpus() -> Corpus {
    let seg = |id: &str, spk: &str, start: f64, end: f64, toks: &[&str], label| Segment {
        segment_id: id.into(),
        speaker_id: spk.into(),
        role: if spk.starts_with('a') { Role::Agent } else { Role::Caller },
        start_s: start,
        end_s: end,
        tokens: toks.iter().map(|t| t.to_string()).collect(),
        frames: None,
        label,
    };
    use EmotionLabel::*;
    Corpus::new(
        vec![
            Dialogue {
                dialogue_id: "d1".into(),
                segments: vec![
                    seg("s0", "c1", 0.0, 1.0, &["a", "b"], Anger),
                    seg("s1", "a1", 1.5, 2.5, &["b", "c", "d"], Anger),
                    seg("s2", "c1", 2.5, 4.0, &["e"], Neutral),
                ],
            },
            Dialogue {
                dialogue_id: "d2".into(),
                segments: vec![
                    seg("s0", "c2", 0.0, 2.0, &["a"], Positive),
                    seg("s1", "a1", 3.25, 4.0, &["f", "g"], Neutral),
                ],
            },
        ],
        0.0,
        0,
    )
    .unwrap()
}

fn corpus_bytes(c: &Corpus) -> Vec<u8> {
    let mut out = Vec::new();
    write_corpus(c, &mut out).unwrap();
    out
}

fn criterion_9() -> Outcome {
    let mut r = rng::indexed(9, 0);
    for trial in 0..100u64 {
        let base = if trial % 2 == 0 {
            GeneratorSpec::default()
        } else {
            GeneratorSpec {
                frames_per_segment: (1, 8),
                ..GeneratorSpec::acoustic(r.random_range(1..5), 10.0)
            }
        };
        let tmin = r.random_range(1..4);
        let smin = r.random_range(1..6);
        let spec = GeneratorSpec {
            transition: persistent_transition(r.random()),
            emission_ambiguity: r.random(),
            tokens_per_segment: (tmin, tmin + r.random_range(0..4)),
            segments_per_dialogue: (smin, smin + r.random_range(0..6)),
            ..base
        };
        let corpus = generate(&spec, r.random_range(0..8), trial).unwrap();
        let text = corpus_bytes(&corpus);
        let back = parse_corpus(std::str::from_utf8(&text).unwrap()).unwrap();
        ensure!(back == corpus, "trial {trial}: loaded corpus differs");
        ensure!(corpus_bytes(&back) == text, "trial {trial}: re-save differs");
    }

    use EmotionLabel::*;
    let c = hand_corpus();
    let st = corpus_stats(&c).unwrap();
    let ang = &st.per_class[Anger.code()];
    ensure!(
        (ang.segments, ang.speakers, ang.dialogues, ang.vocabulary_size) == (2, 2, 1, 4),
        "ANG counts {ang:?}"
    );
    ensure!(ang.total_duration_min == 2.0 / 60.0 && ang.mean_duration_s == 1.0, "ANG durations {ang:?}");
    ensure!(ang.avg_word_count == 2.5, "ANG words {ang:?}");
    ensure!(st.per_class[Fear.code()].segments == 0, "FEA not empty");
    let neu = &st.per_class[Neutral.code()];
    ensure!(
        (neu.segments, neu.speakers, neu.dialogues, neu.vocabulary_size) == (2, 2, 2, 3),
        "NEU counts {neu:?}"
    );
    ensure!(neu.total_duration_min == 2.25 / 60.0 && neu.mean_duration_s == 1.125, "NEU durations {neu:?}");
    ensure!(neu.avg_word_count == 1.5, "NEU words {neu:?}");
    let pos = &st.per_class[Positive.code()];
    ensure!(
        (pos.segments, pos.speakers, pos.dialogues, pos.vocabulary_size) == (1, 1, 1, 1),
        "POS counts {pos:?}"
    );
    ensure!(pos.mean_duration_s == 2.0 && pos.avg_word_count == 1.0, "POS {pos:?}");
    let t = &st.total;
    ensure!(
        (t.segments, t.speakers, t.dialogues, t.vocabulary_size) == (5, 3, 2, 7),
        "total counts {t:?}"
    );
    ensure!(t.total_duration_min == 6.25 / 60.0 && t.avg_word_count == 1.8, "total {t:?}");

    let tm = transition_matrix(&c, 1);
    let mut counts = [[0u64; 4]; 4];
    counts[Anger.code()][Anger.code()] = 1;
    counts[Anger.code()][Neutral.code()] = 1;
    counts[Positive.code()][Neutral.code()] = 1;
    ensure!(tm.counts == counts, "transition counts {:?}", tm.counts);
    ensure!(tm.probabilities[Anger.code()] == [0.5, 0.0, 0.5, 0.0], "ANG row");
    ensure!(tm.probabilities[Positive.code()] == [0.0, 0.0, 1.0, 0.0], "POS row");
    ensure!(tm.included == [true, false, false, true], "included rows {:?}", tm.included);

    for dir in [GapDirection::PreviousToTarget, GapDirection::TargetToNext] {
        let g = gap_histogram(&c, dir, 0.5).unwrap();
        ensure!(g.bins == vec![(0.0, 0), (0.5, 1), (1.0, 1)], "gap bins {:?}", g.bins);
        ensure!(g.n_contiguous == 1 && g.n_missing == 2, "gap totals {g:?}");
    }
    Ok("100 random corpora round-trip byte-identical; hand corpus analytics exact".into())
}

fn criterion_10() -> Outcome {
    let spec = GeneratorSpec::acoustic(4, 10.0);
    let corpus = generate(&spec, 200, 10).unwrap();
    let mut n = 0;
    let mut capped = 0;
    for dir in [Direction::Previous, Direction::Next, Direction::Both] {
        for scope in [SpeakerScope::All, SpeakerScope::Same, SpeakerScope::Opposite] {
            let policy = ContextPolicy::turns(dir, scope);
            ensure!(policy.max_input_s == 6.5, "default cap is {}", policy.max_input_s);
            for s in build_acoustic_dataset(&corpus, &policy).unwrap() {
                let (d, idx) = corpus.locate(&s.dialogue_id, &s.segment_id).unwrap();
                let seg = &d.segments[idx];
                ensure!(s.total_duration_s <= 6.5, "{}/{}: {} s", s.dialogue_id, s.segment_id, s.total_duration_s);
                ensure!(
                    Some(&s.target_frames) == seg.frames.as_ref(),
                    "{}/{}: target frames altered",
                    s.dialogue_id,
                    s.segment_id
                );
                if s.len() == 65 {
                    capped += 1;
                }
                n += 1;
            }
        }
    }
    ensure!(n == 9 * corpus.n_segments(), "{n} samples");
    ensure!(capped > 0, "the cap never binds");
    Ok(format!("{n} samples over 9 policies, all <= 6.5 s, {capped} at the cap"))
}

fn main() {
    let criteria: [(usize, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.strip_prefix("criterion_").and_then(|n| n.parse().ok()))
        .collect();
    let mut failed = 0;
    for (n, f) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let outcome = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(o) => o,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS  {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n}: FAIL  {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
