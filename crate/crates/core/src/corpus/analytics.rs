//! Descriptive corpus analytics: per-class statistics, emotion transitions
//! between adjacent segments, and inter-segment gap histograms.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Corpus, EmotionLabel, N_CLASSES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassStats {
    pub segments: usize,
    pub speakers: usize,
    pub dialogues: usize,
    pub total_duration_min: f64,
    pub mean_duration_s: f64,
    pub vocabulary_size: usize,
    pub avg_word_count: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub per_class: [ClassStats; N_CLASSES],
    /// Segment counts and durations are sums over classes; speakers,
    /// dialogues and vocabulary are distinct counts over the whole corpus.
    pub total: ClassStats,
}

#[derive(Default)]
struct Acc<'a> {
    segments: usize,
    duration_s: f64,
    words: usize,
    speakers: BTreeSet<&'a str>,
    dialogues: BTreeSet<&'a str>,
    vocab: BTreeSet<&'a str>,
}

impl Acc<'_> {
    fn finish(self) -> ClassStats {
        let n = self.segments.max(1) as f64;
        ClassStats {
            segments: self.segments,
            speakers: self.speakers.len(),
            dialogues: self.dialogues.len(),
            total_duration_min: self.duration_s / 60.0,
            mean_duration_s: if self.segments == 0 { 0.0 } else { self.duration_s / n },
            vocabulary_size: self.vocab.len(),
            avg_word_count: if self.segments == 0 { 0.0 } else { self.words as f64 / n },
        }
    }
}

pub fn corpus_stats(corpus: &Corpus) -> Result<CorpusStats> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut per: [Acc; N_CLASSES] = Default::default();
    let mut total = Acc::default();
    for (d, s) in corpus.segments() {
        for acc in [&mut per[s.label.code()], &mut total] {
            acc.segments += 1;
            acc.duration_s += s.duration_s();
            acc.words += s.tokens.len();
            acc.speakers.insert(&s.speaker_id);
            acc.dialogues.insert(&d.dialogue_id);
            acc.vocab.extend(s.tokens.iter().map(String::as_str));
        }
    }
    // Sum per-class durations in class order so totals equal the per-class sum.
    let class_duration: f64 = per.iter().map(|a| a.duration_s).sum();
    total.duration_s = class_duration;
    Ok(CorpusStats {
        per_class: per.map(Acc::finish),
        total: total.finish(),
    })
}

impl CorpusStats {
    /// Columns: `class,segments,speakers,dialogues,total_duration_min,mean_duration_s,vocabulary_size,avg_word_count`;
    /// one row per class followed by a `TOTAL` row.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "class",
            "segments",
            "speakers",
            "dialogues",
            "total_duration_min",
            "mean_duration_s",
            "vocabulary_size",
            "avg_word_count",
        ])?;
        let rows = EmotionLabel::ALL
            .iter()
            .map(|l| (l.as_str(), &self.per_class[l.code()]))
            .chain(std::iter::once(("TOTAL", &self.total)));
        for (name, s) in rows {
            w.write_record([
                name.to_string(),
                s.segments.to_string(),
                s.speakers.to_string(),
                s.dialogues.to_string(),
                format!("{:.6}", s.total_duration_min),
                format!("{:.6}", s.mean_duration_s),
                s.vocabulary_size.to_string(),
                format!("{:.6}", s.avg_word_count),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Previous → target emotion statistics over adjacent segments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionMatrix {
    /// `counts[prev][target]`
    pub counts: [[u64; N_CLASSES]; N_CLASSES],
    /// Row-normalised counts; all-zero rows stay zero.
    pub probabilities: [[f64; N_CLASSES]; N_CLASSES],
    pub min_count: u64,
    /// Rows whose total reaches `min_count` (empty rows are never included).
    pub included: [bool; N_CLASSES],
}

impl TransitionMatrix {
    pub fn from_counts(counts: [[u64; N_CLASSES]; N_CLASSES], min_count: u64) -> Self {
        let mut probabilities = [[0.0; N_CLASSES]; N_CLASSES];
        let mut included = [false; N_CLASSES];
        for (i, row) in counts.iter().enumerate() {
            let total: u64 = row.iter().sum();
            included[i] = total > 0 && total >= min_count;
            if total > 0 {
                for j in 0..N_CLASSES {
                    probabilities[i][j] = row[j] as f64 / total as f64;
                }
            }
        }
        Self {
            counts,
            probabilities,
            min_count,
            included,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Columns: `previous,included,count_ANG,count_FEA,count_NEU,count_POS,p_ANG,p_FEA,p_NEU,p_POS`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["previous".to_string(), "included".to_string()];
        header.extend(EmotionLabel::ALL.iter().map(|l| format!("count_{l}")));
        header.extend(EmotionLabel::ALL.iter().map(|l| format!("p_{l}")));
        w.write_record(&header)?;
        for l in EmotionLabel::ALL {
            let i = l.code();
            let mut rec = vec![l.to_string(), self.included[i].to_string()];
            rec.extend(self.counts[i].iter().map(u64::to_string));
            rec.extend(self.probabilities[i].iter().map(|p| format!("{p:.6}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Counts transitions from each segment's immediately preceding segment in
/// the same dialogue, whoever the speaker.
pub fn transition_matrix(corpus: &Corpus, min_count: u64) -> TransitionMatrix {
    let mut counts = [[0u64; N_CLASSES]; N_CLASSES];
    for d in corpus.dialogues() {
        for pair in d.segments.windows(2) {
            counts[pair[0].label.code()][pair[1].label.code()] += 1;
        }
    }
    TransitionMatrix::from_counts(counts, min_count)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapDirection {
    PreviousToTarget,
    TargetToNext,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapHistogram {
    pub direction: GapDirection,
    pub bin_width_s: f64,
    /// `(lower_s, count)` for consecutive bins starting at 0.
    pub bins: Vec<(f64, usize)>,
    /// Adjacent pairs with zero (or negative, i.e. overlapping) gap.
    pub n_contiguous: usize,
    /// Segments with no neighbour in `direction`.
    pub n_missing: usize,
}

impl GapHistogram {
    pub fn n_binned(&self) -> usize {
        self.bins.iter().map(|b| b.1).sum()
    }

    /// Columns: `lower_s,upper_s,count`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lower_s", "upper_s", "count"])?;
        for &(lo, n) in &self.bins {
            w.write_record([
                format!("{lo:.6}"),
                format!("{:.6}", lo + self.bin_width_s),
                n.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn micros(s: f64) -> i64 {
    (s * 1e6).round() as i64
}

/// Histogram of silences between adjacent segments.
///
/// Every adjacent pair contributes one gap `next.start_s - prev.end_s`.
/// Non-positive gaps count as contiguous and are left out of the bins.
pub fn gap_histogram(corpus: &Corpus, direction: GapDirection, bin_width_s: f64) -> Result<GapHistogram> {
    if !(bin_width_s > 0.0 && bin_width_s.is_finite()) {
        return Err(Error::Config(format!("bin width must be > 0, got {bin_width_s}")));
    }
    let width_us = micros(bin_width_s);
    let mut bins: Vec<usize> = Vec::new();
    let mut n_contiguous = 0;
    let mut n_missing = 0;
    for d in corpus.dialogues() {
        if !d.segments.is_empty() {
            // The first (or last) segment has no neighbour in the chosen direction.
            n_missing += 1;
        }
        for pair in d.segments.windows(2) {
            let gap_us = micros(pair[1].start_s) - micros(pair[0].end_s);
            if gap_us <= 0 {
                n_contiguous += 1;
                continue;
            }
            let idx = if width_us > 0 {
                (gap_us / width_us) as usize
            } else {
                (gap_us as f64 / 1e6 / bin_width_s).floor() as usize
            };
            if bins.len() <= idx {
                bins.resize(idx + 1, 0);
            }
            bins[idx] += 1;
        }
    }
    Ok(GapHistogram {
        direction,
        bin_width_s,
        bins: bins
            .into_iter()
            .enumerate()
            .map(|(i, n)| (i as f64 * bin_width_s, n))
            .collect(),
        n_contiguous,
        n_missing,
    })
}
