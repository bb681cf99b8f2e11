//! Conversation data model, corpus file I/O and descriptive analytics.

mod analytics;
mod io;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use analytics::{
    corpus_stats, gap_histogram, transition_matrix, ClassStats, CorpusStats, GapDirection,
    GapHistogram, TransitionMatrix,
};
pub use io::{load_corpus, parse_corpus, save_corpus, write_corpus};

pub const N_CLASSES: usize = 4;

/// The four emotion classes. Integer codes are stable: ANG=0, FEA=1, NEU=2, POS=3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EmotionLabel {
    #[serde(rename = "ANG")]
    Anger,
    #[serde(rename = "FEA")]
    Fear,
    #[serde(rename = "NEU")]
    Neutral,
    #[serde(rename = "POS")]
    Positive,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; N_CLASSES] = [
        EmotionLabel::Anger,
        EmotionLabel::Fear,
        EmotionLabel::Neutral,
        EmotionLabel::Positive,
    ];

    #[inline]
    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EmotionLabel::Anger => "ANG",
            EmotionLabel::Fear => "FEA",
            EmotionLabel::Neutral => "NEU",
            EmotionLabel::Positive => "POS",
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmotionLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ANG" => Ok(EmotionLabel::Anger),
            "FEA" => Ok(EmotionLabel::Fear),
            "NEU" => Ok(EmotionLabel::Neutral),
            "POS" => Ok(EmotionLabel::Positive),
            other => Err(format!("unknown emotion label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Caller,
    Agent,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Caller => "caller",
            Role::Agent => "agent",
        }
    }
}

/// One annotated speech turn.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub segment_id: String,
    pub speaker_id: String,
    pub role: Role,
    pub start_s: f64,
    pub end_s: f64,
    pub tokens: Vec<String>,
    /// `[n_frames × d_feat]` acoustic feature rows.
    pub frames: Option<Matrix>,
    pub label: EmotionLabel,
}

impl Segment {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dialogue {
    pub dialogue_id: String,
    /// Ordered by `start_s`.
    pub segments: Vec<Segment>,
}

impl Dialogue {
    pub fn segment_index(&self, segment_id: &str) -> Option<usize> {
        self.segments
            .iter()
            .position(|s| s.segment_id == segment_id)
    }

    /// Speaker ids in order of first appearance.
    pub fn speakers(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.segments
            .iter()
            .filter(|s| seen.insert(s.speaker_id.as_str()))
            .map(|s| s.speaker_id.as_str())
            .collect()
    }
}

/// A validated collection of dialogues.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    dialogues: Vec<Dialogue>,
    /// Frames per second; 0 for text-only corpora.
    frame_rate: f64,
    d_feat: usize,
}

/// Rounds seconds to the microsecond grid used by the file format.
pub fn quantize_seconds(s: f64) -> f64 {
    (s * 1e6).round() / 1e6
}

impl Corpus {
    /// Sorts each dialogue's segments by start time and checks every invariant.
    pub fn new(mut dialogues: Vec<Dialogue>, frame_rate: f64, d_feat: usize) -> Result<Self> {
        if !(frame_rate >= 0.0 && frame_rate.is_finite()) {
            return Err(Error::Invariant {
                dialogue_id: String::new(),
                segment_id: String::new(),
                message: format!("frame_rate must be finite and >= 0, got {frame_rate}"),
            });
        }
        for d in &mut dialogues {
            d.segments
                .sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        }
        let corpus = Self {
            dialogues,
            frame_rate,
            d_feat,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn empty(frame_rate: f64, d_feat: usize) -> Self {
        Self {
            dialogues: Vec::new(),
            frame_rate,
            d_feat,
        }
    }

    fn validate(&self) -> Result<()> {
        let mut dialogue_ids = HashSet::new();
        for d in &self.dialogues {
            let fail = |segment_id: &str, message: String| Error::Invariant {
                dialogue_id: d.dialogue_id.clone(),
                segment_id: segment_id.to_string(),
                message,
            };
            if !dialogue_ids.insert(d.dialogue_id.as_str()) {
                return Err(fail("", "duplicate dialogue_id".into()));
            }
            let mut seg_ids = HashSet::new();
            let mut speaker_roles: HashMap<&str, Role> = HashMap::new();
            let mut last_end: HashMap<&str, f64> = HashMap::new();
            let mut prev_start = f64::NEG_INFINITY;
            for s in &d.segments {
                let id = s.segment_id.as_str();
                if !seg_ids.insert(id) {
                    return Err(fail(id, "duplicate segment_id".into()));
                }
                if !(s.start_s.is_finite() && s.end_s.is_finite() && s.end_s > s.start_s) {
                    return Err(fail(
                        id,
                        format!("end_s ({}) must exceed start_s ({})", s.end_s, s.start_s),
                    ));
                }
                if s.start_s <= prev_start {
                    return Err(fail(id, "segments must have strictly increasing start_s".into()));
                }
                prev_start = s.start_s;
                match speaker_roles.insert(&s.speaker_id, s.role) {
                    Some(r) if r != s.role => {
                        return Err(fail(
                            id,
                            format!("speaker {} appears with two roles", s.speaker_id),
                        ))
                    }
                    _ => {}
                }
                if let Some(&end) = last_end.get(s.speaker_id.as_str()) {
                    if s.start_s < end {
                        return Err(fail(
                            id,
                            format!("overlaps a previous segment of speaker {}", s.speaker_id),
                        ));
                    }
                }
                last_end.insert(&s.speaker_id, s.end_s);
                match &s.frames {
                    None if s.tokens.is_empty() => {
                        return Err(fail(id, "segment has neither tokens nor frames".into()))
                    }
                    None => {}
                    Some(f) => {
                        if self.frame_rate <= 0.0 {
                            return Err(fail(id, "frames present but frame_rate is 0".into()));
                        }
                        if f.cols() != self.d_feat {
                            return Err(fail(
                                id,
                                format!("frame width {} != d_feat {}", f.cols(), self.d_feat),
                            ));
                        }
                        let expected = expected_frames(s.duration_s(), self.frame_rate);
                        if f.rows() != expected {
                            return Err(fail(
                                id,
                                format!("{} frame rows, expected {expected}", f.rows()),
                            ));
                        }
                        if !f.is_finite() {
                            return Err(fail(id, "non-finite frame values".into()));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dialogues(&self) -> &[Dialogue] {
        &self.dialogues
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn d_feat(&self) -> usize {
        self.d_feat
    }

    pub fn is_empty(&self) -> bool {
        self.n_segments() == 0
    }

    pub fn n_segments(&self) -> usize {
        self.dialogues.iter().map(|d| d.segments.len()).sum()
    }

    /// True when every segment carries frames.
    pub fn has_frames(&self) -> bool {
        self.n_segments() > 0
            && self
                .segments()
                .all(|(_, s)| s.frames.is_some())
    }

    pub fn dialogue(&self, dialogue_id: &str) -> Option<&Dialogue> {
        self.dialogues.iter().find(|d| d.dialogue_id == dialogue_id)
    }

    /// Looks up a segment, returning its dialogue and position in it.
    pub fn locate(&self, dialogue_id: &str, segment_id: &str) -> Result<(&Dialogue, usize)> {
        self.dialogue(dialogue_id)
            .and_then(|d| d.segment_index(segment_id).map(|i| (d, i)))
            .ok_or_else(|| Error::UnknownSegment {
                dialogue_id: dialogue_id.to_string(),
                segment_id: segment_id.to_string(),
            })
    }

    /// All segments with their dialogue, in (dialogue, start time) order.
    pub fn segments(&self) -> impl Iterator<Item = (&Dialogue, &Segment)> {
        self.dialogues
            .iter()
            .flat_map(|d| d.segments.iter().map(move |s| (d, s)))
    }

    /// Distinct tokens over the whole corpus.
    pub fn vocabulary(&self) -> BTreeSet<&str> {
        self.segments()
            .flat_map(|(_, s)| s.tokens.iter().map(String::as_str))
            .collect()
    }

    /// Distinct speaker ids, sorted.
    pub fn speakers(&self) -> BTreeSet<&str> {
        self.segments().map(|(_, s)| s.speaker_id.as_str()).collect()
    }
}

pub fn expected_frames(duration_s: f64, frame_rate: f64) -> usize {
    (duration_s * frame_rate).round() as usize
}
