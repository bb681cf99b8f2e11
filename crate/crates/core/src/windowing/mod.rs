//! Context assembly at two scales.
//!
//! *Token scale* takes a fixed budget of tokens before and after the target
//! from the dialogue's running token stream, ignoring turn and speaker
//! boundaries and inserting no separators. *Turn scale* takes the single
//! nearest segment in a direction whose speaker matches a scope. Acoustic
//! samples apply the same turn selection to frame rows and enforce a total
//! duration cap by trimming context away from the target.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Dialogue, EmotionLabel};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Input cap for acoustic samples, in seconds.
pub const DEFAULT_MAX_INPUT_S: f64 = 6.5;

/// Average speech time covered by one token.
pub const SECONDS_PER_TOKEN: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Tokens,
    Turns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Previous,
    Next,
    Both,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeakerScope {
    Same,
    Opposite,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextPolicy {
    pub scale: Scale,
    pub direction: Direction,
    #[serde(default)]
    pub n_prev_tokens: usize,
    #[serde(default)]
    pub n_next_tokens: usize,
    /// Only consulted at turn scale.
    #[serde(default = "default_scope")]
    pub speaker_scope: SpeakerScope,
    /// Only consulted for acoustic samples.
    #[serde(default = "default_max_input_s")]
    pub max_input_s: f64,
}

fn default_scope() -> SpeakerScope {
    SpeakerScope::All
}

fn default_max_input_s() -> f64 {
    DEFAULT_MAX_INPUT_S
}

impl ContextPolicy {
    /// No context at all.
    pub fn none() -> Self {
        Self {
            scale: Scale::Turns,
            direction: Direction::None,
            n_prev_tokens: 0,
            n_next_tokens: 0,
            speaker_scope: SpeakerScope::All,
            max_input_s: DEFAULT_MAX_INPUT_S,
        }
    }

    pub fn tokens(n_prev: usize, n_next: usize) -> Self {
        let direction = match (n_prev > 0, n_next > 0) {
            (false, false) => Direction::None,
            (true, false) => Direction::Previous,
            (false, true) => Direction::Next,
            (true, true) => Direction::Both,
        };
        Self {
            scale: Scale::Tokens,
            direction,
            n_prev_tokens: n_prev,
            n_next_tokens: n_next,
            ..Self::none()
        }
    }

    pub fn turns(direction: Direction, speaker_scope: SpeakerScope) -> Self {
        Self {
            scale: Scale::Turns,
            direction,
            speaker_scope,
            ..Self::none()
        }
    }

    pub fn has_context(&self) -> bool {
        match (self.direction, self.scale) {
            (Direction::None, _) => false,
            (_, Scale::Turns) => true,
            (Direction::Previous, Scale::Tokens) => self.n_prev_tokens > 0,
            (Direction::Next, Scale::Tokens) => self.n_next_tokens > 0,
            (Direction::Both, Scale::Tokens) => self.n_prev_tokens + self.n_next_tokens > 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_input_s > 0.0 && self.max_input_s.is_finite()) {
            return Err(Error::Config(format!(
                "max_input_s must be > 0, got {}",
                self.max_input_s
            )));
        }
        Ok(())
    }

    /// Effective `(n_prev, n_next)` token budgets after applying the direction.
    fn token_budget(&self) -> (usize, usize) {
        match self.direction {
            Direction::None => (0, 0),
            Direction::Previous => (self.n_prev_tokens, 0),
            Direction::Next => (0, self.n_next_tokens),
            Direction::Both => (self.n_prev_tokens, self.n_next_tokens),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionRole {
    Context,
    Target,
}

/// A target segment's tokens with the surrounding context.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ContextualSample {
    pub dialogue_id: String,
    pub segment_id: String,
    pub prev_tokens: Vec<String>,
    pub target_tokens: Vec<String>,
    pub next_tokens: Vec<String>,
    pub label: EmotionLabel,
}

impl ContextualSample {
    /// `prev ++ target ++ next`
    pub fn positions(&self) -> Vec<&str> {
        self.prev_tokens
            .iter()
            .chain(&self.target_tokens)
            .chain(&self.next_tokens)
            .map(String::as_str)
            .collect()
    }

    pub fn role_mask(&self) -> Vec<PositionRole> {
        role_mask(self.prev_tokens.len(), self.target_tokens.len(), self.next_tokens.len())
    }

    pub fn len(&self) -> usize {
        self.prev_tokens.len() + self.target_tokens.len() + self.next_tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn context_len(&self) -> usize {
        self.prev_tokens.len() + self.next_tokens.len()
    }
}

/// A target segment's frame rows with the surrounding context.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticContextualSample {
    pub dialogue_id: String,
    pub segment_id: String,
    pub prev_frames: Matrix,
    pub target_frames: Matrix,
    pub next_frames: Matrix,
    pub label: EmotionLabel,
    pub total_duration_s: f64,
}

impl AcousticContextualSample {
    /// Rows in `prev ++ target ++ next` order.
    pub fn positions(&self) -> Matrix {
        Matrix::vstack(&[&self.prev_frames, &self.target_frames, &self.next_frames])
    }

    pub fn role_mask(&self) -> Vec<PositionRole> {
        role_mask(
            self.prev_frames.rows(),
            self.target_frames.rows(),
            self.next_frames.rows(),
        )
    }

    pub fn len(&self) -> usize {
        self.prev_frames.rows() + self.target_frames.rows() + self.next_frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn context_len(&self) -> usize {
        self.prev_frames.rows() + self.next_frames.rows()
    }
}

fn role_mask(n_prev: usize, n_target: usize, n_next: usize) -> Vec<PositionRole> {
    let mut m = vec![PositionRole::Context; n_prev];
    m.extend(std::iter::repeat_n(PositionRole::Target, n_target));
    m.extend(std::iter::repeat_n(PositionRole::Context, n_next));
    m
}

/// Blind token window around a segment.
///
/// The previous window is the last `n_prev` tokens of the dialogue stream
/// before the target; the next window the first `n_next` after it. Windows
/// stop at the dialogue boundary.
pub fn token_context(
    corpus: &Corpus,
    dialogue_id: &str,
    segment_id: &str,
    n_prev: usize,
    n_next: usize,
) -> Result<ContextualSample> {
    let (d, idx) = corpus.locate(dialogue_id, segment_id)?;
    Ok(token_context_at(d, idx, n_prev, n_next))
}

fn token_context_at(d: &Dialogue, idx: usize, n_prev: usize, n_next: usize) -> ContextualSample {
    let target = &d.segments[idx];
    let mut prev: Vec<String> = Vec::with_capacity(n_prev);
    for s in d.segments[..idx].iter().rev() {
        if prev.len() >= n_prev {
            break;
        }
        for t in s.tokens.iter().rev() {
            if prev.len() >= n_prev {
                break;
            }
            prev.push(t.clone());
        }
    }
    prev.reverse();
    let next: Vec<String> = d.segments[idx + 1..]
        .iter()
        .flat_map(|s| s.tokens.iter())
        .take(n_next)
        .cloned()
        .collect();
    ContextualSample {
        dialogue_id: d.dialogue_id.clone(),
        segment_id: target.segment_id.clone(),
        prev_tokens: prev,
        target_tokens: target.tokens.clone(),
        next_tokens: next,
        label: target.label,
    }
}

/// Index of the nearest segment before (`forward == false`) or after the
/// target whose speaker matches `scope`.
fn nearest_turn(d: &Dialogue, idx: usize, forward: bool, scope: SpeakerScope) -> Option<usize> {
    let speaker = &d.segments[idx].speaker_id;
    let matches = |j: &usize| match scope {
        SpeakerScope::All => true,
        SpeakerScope::Same => &d.segments[*j].speaker_id == speaker,
        SpeakerScope::Opposite => &d.segments[*j].speaker_id != speaker,
    };
    if forward {
        (idx + 1..d.segments.len()).find(matches)
    } else {
        (0..idx).rev().find(matches)
    }
}

/// `(previous, next)` context turns selected by a direction.
fn context_turns(
    d: &Dialogue,
    idx: usize,
    direction: Direction,
    scope: SpeakerScope,
) -> (Option<usize>, Option<usize>) {
    let want_prev = matches!(direction, Direction::Previous | Direction::Both);
    let want_next = matches!(direction, Direction::Next | Direction::Both);
    (
        want_prev.then(|| nearest_turn(d, idx, false, scope)).flatten(),
        want_next.then(|| nearest_turn(d, idx, true, scope)).flatten(),
    )
}

fn turn_direction_ok(direction: Direction) -> Result<()> {
    match direction {
        Direction::Previous | Direction::Next => Ok(()),
        other => Err(Error::Config(format!(
            "turn context takes direction previous or next, got {other:?}"
        ))),
    }
}

/// One-turn context: the nearest segment in `direction` whose speaker
/// matches `scope`, or no context when none exists.
pub fn turn_context(
    corpus: &Corpus,
    dialogue_id: &str,
    segment_id: &str,
    direction: Direction,
    scope: SpeakerScope,
) -> Result<ContextualSample> {
    turn_direction_ok(direction)?;
    let (d, idx) = corpus.locate(dialogue_id, segment_id)?;
    Ok(turn_context_at(d, idx, direction, scope))
}

fn turn_context_at(d: &Dialogue, idx: usize, direction: Direction, scope: SpeakerScope) -> ContextualSample {
    let target = &d.segments[idx];
    let (p, n) = context_turns(d, idx, direction, scope);
    let tokens_of = |j: Option<usize>| j.map(|j| d.segments[j].tokens.clone()).unwrap_or_default();
    ContextualSample {
        dialogue_id: d.dialogue_id.clone(),
        segment_id: target.segment_id.clone(),
        prev_tokens: tokens_of(p),
        target_tokens: target.tokens.clone(),
        next_tokens: tokens_of(n),
        label: target.label,
    }
}

/// Turn context on frame rows under a total duration cap.
///
/// Context rows are trimmed from the end farthest from the target until the
/// combined input fits in `max_input_s`; target rows are never trimmed.
pub fn acoustic_turn_context(
    corpus: &Corpus,
    dialogue_id: &str,
    segment_id: &str,
    direction: Direction,
    scope: SpeakerScope,
    max_input_s: f64,
) -> Result<AcousticContextualSample> {
    turn_direction_ok(direction)?;
    let (d, idx) = corpus.locate(dialogue_id, segment_id)?;
    acoustic_at(corpus, d, idx, direction, scope, max_input_s)
}

fn frames_of<'a>(corpus: &Corpus, d: &'a Dialogue, idx: usize) -> Result<&'a Matrix> {
    d.segments[idx].frames.as_ref().ok_or_else(|| {
        Error::Modality(format!(
            "segment {}/{} has no frames (corpus frame_rate {})",
            d.dialogue_id,
            d.segments[idx].segment_id,
            corpus.frame_rate()
        ))
    })
}

fn acoustic_at(
    corpus: &Corpus,
    d: &Dialogue,
    idx: usize,
    direction: Direction,
    scope: SpeakerScope,
    max_input_s: f64,
) -> Result<AcousticContextualSample> {
    let rate = corpus.frame_rate();
    let target = &d.segments[idx];
    let target_frames = frames_of(corpus, d, idx)?;
    // Small slack so caps like 6.5 s at 10 fps give exactly 65 rows.
    let cap_rows = (max_input_s * rate + 1e-9).floor() as usize;
    if target_frames.rows() > cap_rows {
        return Err(Error::TargetExceedsCap {
            segment_id: target.segment_id.clone(),
            duration_s: target_frames.rows() as f64 / rate,
            cap_s: max_input_s,
        });
    }
    let budget = cap_rows - target_frames.rows();
    let (p, n) = context_turns(d, idx, direction, scope);
    let empty = Matrix::zeros(0, corpus.d_feat());
    let prev_full = match p {
        Some(j) => frames_of(corpus, d, j)?,
        None => &empty,
    };
    let next_full = match n {
        Some(j) => frames_of(corpus, d, j)?,
        None => &empty,
    };
    // Split the budget evenly when both sides compete; unused share moves over.
    let half_up = budget - budget / 2;
    let keep_prev = prev_full
        .rows()
        .min(half_up.max(budget.saturating_sub(next_full.rows())));
    let keep_next = next_full.rows().min(budget - keep_prev);
    let prev_frames = prev_full.slice_rows(prev_full.rows() - keep_prev, prev_full.rows());
    let next_frames = next_full.slice_rows(0, keep_next);
    let total_rows = keep_prev + target_frames.rows() + keep_next;
    Ok(AcousticContextualSample {
        dialogue_id: d.dialogue_id.clone(),
        segment_id: target.segment_id.clone(),
        prev_frames,
        target_frames: target_frames.clone(),
        next_frames,
        label: target.label,
        total_duration_s: total_rows as f64 / rate,
    })
}

fn ordered_dialogues(corpus: &Corpus) -> Vec<&Dialogue> {
    let mut ds: Vec<&Dialogue> = corpus.dialogues().iter().collect();
    ds.sort_by(|a, b| a.dialogue_id.cmp(&b.dialogue_id));
    ds
}

/// Applies `policy` to every segment, ordered by (dialogue_id, start_s).
pub fn build_dataset(corpus: &Corpus, policy: &ContextPolicy) -> Result<Vec<ContextualSample>> {
    policy.validate()?;
    let mut out = Vec::with_capacity(corpus.n_segments());
    for d in ordered_dialogues(corpus) {
        for (idx, s) in d.segments.iter().enumerate() {
            if s.tokens.is_empty() {
                return Err(Error::Modality(format!(
                    "text policy on segment {}/{} without tokens",
                    d.dialogue_id, s.segment_id
                )));
            }
            let sample = match (policy.direction, policy.scale) {
                (Direction::None, _) => token_context_at(d, idx, 0, 0),
                (_, Scale::Tokens) => {
                    let (np, nn) = policy.token_budget();
                    token_context_at(d, idx, np, nn)
                }
                (dir, Scale::Turns) => turn_context_at(d, idx, dir, policy.speaker_scope),
            };
            out.push(sample);
        }
    }
    Ok(out)
}

/// Acoustic counterpart of [`build_dataset`]; only turn-scale (or empty)
/// context applies to frames.
pub fn build_acoustic_dataset(
    corpus: &Corpus,
    policy: &ContextPolicy,
) -> Result<Vec<AcousticContextualSample>> {
    policy.validate()?;
    if !corpus.has_frames() {
        return Err(Error::Modality("acoustic policy on a corpus without frames".into()));
    }
    if policy.scale == Scale::Tokens && policy.direction != Direction::None {
        return Err(Error::Modality("token-scale context has no acoustic counterpart".into()));
    }
    let mut out = Vec::with_capacity(corpus.n_segments());
    for d in ordered_dialogues(corpus) {
        for idx in 0..d.segments.len() {
            out.push(acoustic_at(
                corpus,
                d,
                idx,
                policy.direction,
                policy.speaker_scope,
                policy.max_input_s,
            )?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::*;
    use crate::corpus::EmotionLabel::*;

    fn three_turns() -> Corpus {
        Corpus::new(
            vec![dialogue(
                "d",
                vec![
                    seg("s1", "cA", 0.0, 1.0, &["a", "b"], Anger),
                    seg("s2", "aB", 1.0, 2.0, &["c", "d"], Fear),
                    seg("s3", "cA", 2.0, 3.0, &["e", "f"], Neutral),
                ],
            )],
            0.0,
            0,
        )
        .unwrap()
    }

    fn strs(v: &[String]) -> Vec<&str> {
        v.iter().map(String::as_str).collect()
    }

    #[test]
    fn zero_window_is_the_bare_segment() {
        let c = three_turns();
        let s = token_context(&c, "d", "s2", 0, 0).unwrap();
        assert!(s.prev_tokens.is_empty() && s.next_tokens.is_empty());
        assert_eq!(strs(&s.target_tokens), ["c", "d"]);
    }

    #[test]
    fn blind_window_crosses_turns_and_truncates_at_boundary() {
        let c = three_turns();
        let s = token_context(&c, "d", "s2", 1, 3).unwrap();
        assert_eq!(strs(&s.prev_tokens), ["b"]);
        assert_eq!(strs(&s.next_tokens), ["e", "f"]);
        let s = token_context(&c, "d", "s3", 3, 0).unwrap();
        assert_eq!(strs(&s.prev_tokens), ["b", "c", "d"]);
        assert_eq!(s.positions(), ["b", "c", "d", "e", "f"]);
        assert_eq!(
            s.role_mask(),
            [
                PositionRole::Context,
                PositionRole::Context,
                PositionRole::Context,
                PositionRole::Target,
                PositionRole::Target
            ]
        );
        assert!(matches!(
            token_context(&c, "d", "s9", 1, 1),
            Err(Error::UnknownSegment { .. })
        ));
    }

    #[test]
    fn turn_scopes_by_hand() {
        let c = three_turns();
        let ctx = |dir, scope| turn_context(&c, "d", "s3", dir, scope).unwrap().prev_tokens;
        assert_eq!(strs(&ctx(Direction::Previous, SpeakerScope::Same)), ["a", "b"]);
        assert_eq!(strs(&ctx(Direction::Previous, SpeakerScope::Opposite)), ["c", "d"]);
        assert_eq!(strs(&ctx(Direction::Previous, SpeakerScope::All)), ["c", "d"]);

        let first = turn_context(&c, "d", "s1", Direction::Previous, SpeakerScope::All).unwrap();
        assert_eq!(first, token_context(&c, "d", "s1", 0, 0).unwrap());

        let next = turn_context(&c, "d", "s1", Direction::Next, SpeakerScope::Same).unwrap();
        assert_eq!(strs(&next.next_tokens), ["e", "f"]);
        assert!(next.prev_tokens.is_empty());

        assert!(turn_context(&c, "d", "s1", Direction::Both, SpeakerScope::All).is_err());
    }

    #[test]
    fn dataset_policies() {
        let c = three_turns();
        let none = build_dataset(&c, &ContextPolicy::none()).unwrap();
        assert!(none.iter().all(|s| s.context_len() == 0));
        assert_eq!(none, build_dataset(&c, &ContextPolicy::tokens(0, 0)).unwrap());

        let prev = build_dataset(&c, &ContextPolicy::turns(Direction::Previous, SpeakerScope::All)).unwrap();
        let empties: Vec<bool> = prev.iter().map(|s| s.context_len() == 0).collect();
        assert_eq!(empties, [true, false, false]);

        let both = build_dataset(&c, &ContextPolicy::turns(Direction::Both, SpeakerScope::All)).unwrap();
        assert_eq!(strs(&both[1].prev_tokens), ["a", "b"]);
        assert_eq!(strs(&both[1].next_tokens), ["e", "f"]);

        assert!(build_acoustic_dataset(&c, &ContextPolicy::none()).is_err());
    }

    fn acoustic_pair(target_s: f64, prev_s: f64) -> Corpus {
        let rate = 10.0;
        let mut a = seg("s1", "cA", 0.0, prev_s, &[], Anger);
        a.frames = Some(Matrix::from_vec(
            (prev_s * rate) as usize,
            1,
            (0..(prev_s * rate) as usize).map(|i| i as f64).collect(),
        ));
        let mut b = seg("s2", "aB", prev_s + 0.5, prev_s + 0.5 + target_s, &[], Fear);
        b.frames = Some(Matrix::from_vec(
            (target_s * rate) as usize,
            1,
            vec![-1.0; (target_s * rate) as usize],
        ));
        Corpus::new(vec![dialogue("d", vec![a, b])], rate, 1).unwrap()
    }

    #[test]
    fn acoustic_context_within_cap_is_untouched() {
        let c = acoustic_pair(2.0, 3.0);
        let s = acoustic_turn_context(&c, "d", "s2", Direction::Previous, SpeakerScope::All, 6.5).unwrap();
        assert_eq!(s.prev_frames.rows(), 30);
        assert_eq!(s.total_duration_s, 5.0);
    }

    #[test]
    fn acoustic_context_is_trimmed_to_most_recent_part() {
        let c = acoustic_pair(4.0, 4.0);
        let s = acoustic_turn_context(&c, "d", "s2", Direction::Previous, SpeakerScope::All, 6.5).unwrap();
        assert_eq!(s.prev_frames.rows(), 25);
        // Most recent 2.5 s of the previous turn: rows 15..40.
        assert_eq!(s.prev_frames[(0, 0)], 15.0);
        assert_eq!(s.prev_frames[(24, 0)], 39.0);
        assert_eq!(s.target_frames.rows(), 40);
        assert!((s.total_duration_s - 6.5).abs() < 1e-12);

        let next = acoustic_turn_context(&c, "d", "s1", Direction::Next, SpeakerScope::All, 6.5).unwrap();
        assert_eq!(next.next_frames.rows(), 25);
        assert_eq!(next.next_frames[(0, 0)], -1.0);
    }

    #[test]
    fn target_above_cap_is_an_error() {
        let c = acoustic_pair(7.0, 1.0);
        assert!(matches!(
            acoustic_turn_context(&c, "d", "s2", Direction::Previous, SpeakerScope::All, 6.5),
            Err(Error::TargetExceedsCap { .. })
        ));
    }

    #[test]
    fn both_directions_share_the_budget() {
        let rate = 10.0;
        let mk = |id: &str, spk: &str, start: f64, dur: f64| {
            let mut s = seg(id, spk, start, start + dur, &[], Neutral);
            s.frames = Some(Matrix::zeros((dur * rate) as usize, 1));
            s
        };
        let c = Corpus::new(
            vec![dialogue(
                "d",
                vec![mk("s1", "cA", 0.0, 4.0), mk("s2", "aB", 5.0, 2.0), mk("s3", "cA", 8.0, 4.0)],
            )],
            rate,
            1,
        )
        .unwrap();
        let policy = ContextPolicy {
            max_input_s: 6.0,
            ..ContextPolicy::turns(Direction::Both, SpeakerScope::All)
        };
        let ds = build_acoustic_dataset(&c, &policy).unwrap();
        let mid = &ds[1];
        assert_eq!((mid.prev_frames.rows(), mid.next_frames.rows()), (20, 20));
        assert!(ds.iter().all(|s| s.total_duration_s <= 6.0 + 1e-12));
    }
}
