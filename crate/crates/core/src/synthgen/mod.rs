//! Synthetic two-speaker dialogue corpora with Markov emotion dynamics.
//!
//! Labels follow a first-order Markov chain. Every token (and every frame
//! row) of a segment is emitted from the segment's true class with
//! probability `1 - emission_ambiguity`, otherwise from one of the other three
//! classes chosen uniformly. Classes own disjoint token blocks, so the
//! likelihood of a segment under each label is available in closed form and
//! [`oracle`] can compute the Bayes-optimal unweighted accuracy.

mod oracle;

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{quantize_seconds, Corpus, Dialogue, EmotionLabel, Role, Segment, N_CLASSES};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

pub use oracle::{
    bayes_optimal_ua, exact_bayes_ua, stationary_distribution, OracleMethod, OracleReport,
};

const DIALOGUE_STREAM_BASE: u64 = 1 << 32;

/// Generative model of a synthetic corpus. Fields missing from a TOML
/// document take their default values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    /// Row-stochastic `transition[prev][next]`.
    pub transition: [[f64; N_CLASSES]; N_CLASSES],
    pub initial: [f64; N_CLASSES],
    /// Probability that a token or frame row is emitted from a confusable class.
    pub emission_ambiguity: f64,
    pub vocab_per_class: usize,
    pub tokens_per_segment: (usize, usize),
    /// Ignored when `d_feat == 0`.
    pub frames_per_segment: (usize, usize),
    /// 0 for text-only corpora.
    pub d_feat: usize,
    pub frame_rate: f64,
    /// `[4][d_feat]`
    pub class_means: Vec<Vec<f64>>,
    pub noise_sigma: f64,
    pub speakers_per_dialogue: usize,
    pub segments_per_dialogue: (usize, usize),
    pub inter_segment_gap_s: (f64, f64),
    /// Speech time per token for text-only corpora.
    pub seconds_per_token: f64,
    /// Agents are shared across dialogues round-robin; callers are unique.
    pub n_agents: usize,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            transition: persistent_transition(0.68),
            initial: [0.25; N_CLASSES],
            emission_ambiguity: 0.5,
            vocab_per_class: 6,
            tokens_per_segment: (2, 5),
            frames_per_segment: (10, 40),
            d_feat: 0,
            frame_rate: 0.0,
            class_means: Vec::new(),
            noise_sigma: 1.0,
            speakers_per_dialogue: 2,
            segments_per_dialogue: (6, 14),
            inter_segment_gap_s: (0.0, 2.5),
            seconds_per_token: 0.2,
            n_agents: 20,
        }
    }
}

/// Symmetric chain that keeps the current emotion with probability
/// `persistence` and otherwise moves uniformly to another one.
pub fn persistent_transition(persistence: f64) -> [[f64; N_CLASSES]; N_CLASSES] {
    let off = (1.0 - persistence) / (N_CLASSES - 1) as f64;
    let mut t = [[off; N_CLASSES]; N_CLASSES];
    for (i, row) in t.iter_mut().enumerate() {
        row[i] = persistence;
    }
    t
}

/// One-hot class means on the first four feature dimensions, scaled.
pub fn one_hot_means(d_feat: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..N_CLASSES)
        .map(|c| {
            let mut m = vec![0.0; d_feat];
            if c < d_feat {
                m[c] = scale;
            }
            m
        })
        .collect()
}

impl GeneratorSpec {
    /// Default spec with an acoustic channel of `d_feat` features at `frame_rate`.
    pub fn acoustic(d_feat: usize, frame_rate: f64) -> Self {
        Self {
            d_feat,
            frame_rate,
            class_means: one_hot_means(d_feat, 1.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        let dist_ok = |row: &[f64]| {
            row.iter().all(|p| p.is_finite() && *p >= 0.0)
                && (row.iter().sum::<f64>() - 1.0).abs() <= 1e-9
        };
        for (i, row) in self.transition.iter().enumerate() {
            if !dist_ok(row) {
                return bad(format!("transition row {i} is not a distribution"));
            }
        }
        if !dist_ok(&self.initial) {
            return bad("initial is not a distribution".into());
        }
        if !(0.0..=1.0).contains(&self.emission_ambiguity) {
            return bad(format!("emission_ambiguity {} outside [0,1]", self.emission_ambiguity));
        }
        if self.vocab_per_class == 0 {
            return bad("vocab_per_class must be >= 1".into());
        }
        let (tmin, tmax) = self.tokens_per_segment;
        if tmin == 0 || tmin > tmax {
            return bad(format!("tokens_per_segment ({tmin}, {tmax}) must satisfy 1 <= min <= max"));
        }
        let (smin, smax) = self.segments_per_dialogue;
        if smin == 0 || smin > smax {
            return bad(format!("segments_per_dialogue ({smin}, {smax}) must satisfy 1 <= min <= max"));
        }
        let (gmin, gmax) = self.inter_segment_gap_s;
        if !(gmin >= 0.0 && gmin <= gmax && gmax.is_finite()) {
            return bad(format!("inter_segment_gap_s ({gmin}, {gmax}) must satisfy 0 <= min <= max"));
        }
        if self.speakers_per_dialogue != 2 {
            return bad("speakers_per_dialogue must be 2".into());
        }
        if self.n_agents == 0 {
            return bad("n_agents must be >= 1".into());
        }
        if !(self.seconds_per_token > 0.0 && self.seconds_per_token.is_finite()) {
            return bad("seconds_per_token must be > 0".into());
        }
        if self.d_feat > 0 {
            if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
                return bad("frame_rate must be > 0 when d_feat > 0".into());
            }
            let (fmin, fmax) = self.frames_per_segment;
            if fmin == 0 || fmin > fmax {
                return bad(format!("frames_per_segment ({fmin}, {fmax}) must satisfy 1 <= min <= max"));
            }
            if self.class_means.len() != N_CLASSES
                || self.class_means.iter().any(|m| m.len() != self.d_feat)
            {
                return bad(format!("class_means must be {N_CLASSES} x d_feat ({})", self.d_feat));
            }
            if self.class_means.iter().flatten().any(|v| !v.is_finite()) {
                return bad("class_means must be finite".into());
            }
            if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
                return bad("noise_sigma must be > 0".into());
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: Self = toml::from_str(&text).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("generator spec serializes")
    }

    /// Token string for entry `index` of `class`'s vocabulary block.
    pub fn token(class: EmotionLabel, index: usize) -> String {
        format!("{}{index}", class.as_str().to_ascii_lowercase())
    }
}

/// Bookkeeping recorded while generating, used to cross-check analytics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerationLog {
    pub label_counts: [usize; N_CLASSES],
    /// Tokens emitted per content class.
    pub token_class_counts: [usize; N_CLASSES],
    pub transition_counts: [[u64; N_CLASSES]; N_CLASSES],
    pub n_tokens: usize,
    pub n_frames: usize,
    pub total_duration_s: f64,
}

pub fn generate(spec: &GeneratorSpec, n_dialogues: usize, seed: u64) -> Result<Corpus> {
    generate_with_log(spec, n_dialogues, seed).map(|(c, _)| c)
}

fn sample_categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding slack: fall back to the last class with positive mass.
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

fn emitted_class<R: Rng>(rng: &mut R, label: usize, ambiguity: f64) -> usize {
    if ambiguity > 0.0 && rng.random::<f64>() < ambiguity {
        let k = rng.random_range(0..N_CLASSES - 1);
        if k >= label {
            k + 1
        } else {
            k
        }
    } else {
        label
    }
}

pub fn generate_with_log(
    spec: &GeneratorSpec,
    n_dialogues: usize,
    seed: u64,
) -> Result<(Corpus, GenerationLog)> {
    spec.validate()?;
    let mut log = GenerationLog::default();
    let mut dialogues = Vec::with_capacity(n_dialogues);
    for d in 0..n_dialogues {
        let mut rng = rng::indexed(seed, DIALOGUE_STREAM_BASE + d as u64);
        let n_seg = rng.random_range(spec.segments_per_dialogue.0..=spec.segments_per_dialogue.1);
        let caller = format!("c{d:05}");
        let agent = format!("a{:03}", d % spec.n_agents);
        let caller_first: bool = rng.random();
        let mut t = 0.0;
        let mut prev_label: Option<usize> = None;
        let mut segments = Vec::with_capacity(n_seg);
        for j in 0..n_seg {
            let label = match prev_label {
                None => sample_categorical(&mut rng, &spec.initial),
                Some(p) => {
                    let l = sample_categorical(&mut rng, &spec.transition[p]);
                    log.transition_counts[p][l] += 1;
                    l
                }
            };
            prev_label = Some(label);
            log.label_counts[label] += 1;

            let n_tok = rng.random_range(spec.tokens_per_segment.0..=spec.tokens_per_segment.1);
            let tokens: Vec<String> = (0..n_tok)
                .map(|_| {
                    let c = emitted_class(&mut rng, label, spec.emission_ambiguity);
                    log.token_class_counts[c] += 1;
                    let idx = rng.random_range(0..spec.vocab_per_class);
                    GeneratorSpec::token(EmotionLabel::ALL[c], idx)
                })
                .collect();
            log.n_tokens += n_tok;

            let (frames, duration) = if spec.d_feat > 0 {
                let n_frames =
                    rng.random_range(spec.frames_per_segment.0..=spec.frames_per_segment.1);
                let mut m = Matrix::zeros(n_frames, spec.d_feat);
                for r in 0..n_frames {
                    let c = emitted_class(&mut rng, label, spec.emission_ambiguity);
                    for (x, mu) in m.row_mut(r).iter_mut().zip(&spec.class_means[c]) {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *x = mu + spec.noise_sigma * z;
                    }
                }
                log.n_frames += n_frames;
                (Some(m), n_frames as f64 / spec.frame_rate)
            } else {
                (None, n_tok as f64 * spec.seconds_per_token)
            };

            let start_s = quantize_seconds(t);
            let end_s = quantize_seconds(start_s + duration);
            log.total_duration_s += end_s - start_s;
            let gap = rng.random_range(spec.inter_segment_gap_s.0..=spec.inter_segment_gap_s.1);
            t = end_s + gap;

            let caller_turn = (j % 2 == 0) == caller_first;
            let (speaker_id, role) = if caller_turn {
                (caller.clone(), Role::Caller)
            } else {
                (agent.clone(), Role::Agent)
            };
            segments.push(Segment {
                segment_id: format!("s{j:03}"),
                speaker_id,
                role,
                start_s,
                end_s,
                tokens,
                frames,
                label: EmotionLabel::ALL[label],
            });
        }
        dialogues.push(Dialogue {
            dialogue_id: format!("d{d:05}"),
            segments,
        });
    }
    let frame_rate = if spec.d_feat > 0 { spec.frame_rate } else { 0.0 };
    let corpus = Corpus::new(dialogues, frame_rate, spec.d_feat)?;
    Ok((corpus, log))
}
