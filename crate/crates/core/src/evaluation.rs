//! Unweighted accuracy, fold pooling, conditional accuracy by previous
//! emotion, and report files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, EmotionLabel, N_CLASSES};
use crate::error::{Error, Result};

/// `(dialogue_id, segment_id)`.
pub type SegmentKey = (String, String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub truth: EmotionLabel,
    pub predicted: EmotionLabel,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// Fold indices that contributed predictions, ascending.
    pub folds: Vec<usize>,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct PredictionRow {
    dialogue_id: String,
    segment_id: String,
    truth: EmotionLabel,
    predicted: EmotionLabel,
}

#[derive(Serialize, Deserialize)]
struct PredictionSetRepr {
    provenance: Provenance,
    predictions: Vec<PredictionRow>,
}

/// Per-segment true and predicted labels, keyed and ordered by segment.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "PredictionSetRepr", into = "PredictionSetRepr")]
pub struct PredictionSet {
    pub entries: BTreeMap<SegmentKey, Prediction>,
    pub provenance: Provenance,
}

impl From<PredictionSetRepr> for PredictionSet {
    fn from(r: PredictionSetRepr) -> Self {
        let entries = r
            .predictions
            .into_iter()
            .map(|p| {
                (
                    (p.dialogue_id, p.segment_id),
                    Prediction {
                        truth: p.truth,
                        predicted: p.predicted,
                    },
                )
            })
            .collect();
        Self {
            entries,
            provenance: r.provenance,
        }
    }
}

impl From<PredictionSet> for PredictionSetRepr {
    fn from(s: PredictionSet) -> Self {
        let predictions = s
            .entries
            .into_iter()
            .map(|((dialogue_id, segment_id), p)| PredictionRow {
                dialogue_id,
                segment_id,
                truth: p.truth,
                predicted: p.predicted,
            })
            .collect();
        Self {
            provenance: s.provenance,
            predictions,
        }
    }
}

impl PredictionSet {
    pub fn new(provenance: Provenance) -> Self {
        Self {
            entries: BTreeMap::new(),
            provenance,
        }
    }

    pub fn insert(&mut self, dialogue_id: &str, segment_id: &str, truth: EmotionLabel, predicted: EmotionLabel) {
        self.entries.insert(
            (dialogue_id.to_string(), segment_id.to_string()),
            Prediction { truth, predicted },
        );
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Writes `dialogue_id,segment_id,truth,predicted` rows in key order.
    pub fn write_csv(&self, out: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["dialogue_id", "segment_id", "truth", "predicted"])?;
        for ((d, s), p) in &self.entries {
            w.write_record([d.as_str(), s.as_str(), p.truth.as_str(), p.predicted.as_str()])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// `confusion[truth][predicted]` counts.
pub type Confusion = [[usize; N_CLASSES]; N_CLASSES];

pub fn confusion_matrix(predictions: &PredictionSet) -> Confusion {
    let mut m = [[0; N_CLASSES]; N_CLASSES];
    for p in predictions.entries.values() {
        m[p.truth.code()][p.predicted.code()] += 1;
    }
    m
}

/// Recall per class; `None` for classes without support.
pub fn per_class_recall(confusion: &Confusion) -> [Option<f64>; N_CLASSES] {
    std::array::from_fn(|c| {
        let support: usize = confusion[c].iter().sum();
        (support > 0).then(|| confusion[c][c] as f64 / support as f64)
    })
}

/// Mean of the four per-class recalls. Every class must occur in the truth.
pub fn unweighted_accuracy(predictions: &PredictionSet) -> Result<f64> {
    let recalls = per_class_recall(&confusion_matrix(predictions));
    let mut sum = 0.0;
    for (c, r) in recalls.iter().enumerate() {
        sum += r.ok_or(Error::MissingClass(EmotionLabel::ALL[c].as_str()))?;
    }
    Ok(sum / N_CLASSES as f64)
}

/// Mean recall over the classes present in the truth; equals
/// [`unweighted_accuracy`] when all four are present. Used for model
/// selection on validation sets, which may miss a rare class.
pub fn present_class_recall(predictions: &PredictionSet) -> Option<f64> {
    let present: Vec<f64> = per_class_recall(&confusion_matrix(predictions))
        .into_iter()
        .flatten()
        .collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}

/// Union of disjoint prediction sets. The result does not depend on input
/// order.
pub fn combine_folds(sets: &[PredictionSet]) -> Result<PredictionSet> {
    let mut entries = BTreeMap::new();
    let mut folds = BTreeSet::new();
    let mut hashes = BTreeSet::new();
    for s in sets {
        for (k, p) in &s.entries {
            if entries.insert(k.clone(), *p).is_some() {
                return Err(Error::OverlappingPredictions(format!("{}/{}", k.0, k.1)));
            }
        }
        folds.extend(s.provenance.folds.iter().copied());
        if !s.provenance.config_hash.is_empty() {
            hashes.insert(s.provenance.config_hash.clone());
        }
    }
    Ok(PredictionSet {
        entries,
        provenance: Provenance {
            folds: folds.into_iter().collect(),
            config_hash: hashes.into_iter().collect::<Vec<_>>().join("+"),
        },
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionalCell {
    pub support: usize,
    pub correct: usize,
}

impl ConditionalCell {
    pub fn recall(&self) -> Option<f64> {
        (self.support > 0).then(|| self.correct as f64 / self.support as f64)
    }
}

/// Recall of target emotions grouped by the emotion of the immediately
/// previous segment (any speaker).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionalMatrix {
    /// `cells[previous][target]`
    pub cells: [[ConditionalCell; N_CLASSES]; N_CLASSES],
    /// Predicted segments that open their dialogue.
    pub n_no_previous: usize,
}

impl ConditionalMatrix {
    pub fn total_support(&self) -> usize {
        self.cells.iter().flatten().map(|c| c.support).sum()
    }
}

pub fn conditional_accuracy(predictions: &PredictionSet, corpus: &Corpus) -> Result<ConditionalMatrix> {
    let mut m = ConditionalMatrix {
        cells: Default::default(),
        n_no_previous: 0,
    };
    for ((did, sid), p) in &predictions.entries {
        let (dialogue, idx) = corpus.locate(did, sid)?;
        if idx == 0 {
            m.n_no_previous += 1;
            continue;
        }
        let prev = dialogue.segments[idx - 1].label;
        let cell = &mut m.cells[prev.code()][p.truth.code()];
        cell.support += 1;
        cell.correct += usize::from(p.truth == p.predicted);
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_predictions: usize,
    pub per_class_recall: [f64; N_CLASSES],
    pub ua: f64,
    pub confusion: Confusion,
    pub conditional: Option<ConditionalMatrix>,
}

/// Full evaluation of pooled predictions. The conditional matrix needs the
/// corpus for previous-segment labels.
pub fn evaluate(predictions: &PredictionSet, corpus: Option<&Corpus>) -> Result<EvalReport> {
    let confusion = confusion_matrix(predictions);
    let ua = unweighted_accuracy(predictions)?;
    let per_class_recall = per_class_recall(&confusion).map(|r| r.unwrap_or(0.0));
    let conditional = corpus.map(|c| conditional_accuracy(predictions, c)).transpose()?;
    Ok(EvalReport {
        n_predictions: predictions.len(),
        per_class_recall,
        ua,
        confusion,
        conditional,
    })
}

/// One token-window setting of a context-size sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_prev: usize,
    pub n_next: usize,
    pub ua: f64,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn csv_bytes(rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

pub fn confusion_csv(report: &EvalReport) -> Result<Vec<u8>> {
    let mut rows = vec![std::iter::once("truth".to_string())
        .chain(EmotionLabel::ALL.iter().map(|l| l.to_string()))
        .collect()];
    for l in EmotionLabel::ALL {
        let mut r = vec![l.to_string()];
        r.extend(report.confusion[l.code()].iter().map(usize::to_string));
        rows.push(r);
    }
    csv_bytes(rows)
}

pub fn per_class_csv(report: &EvalReport) -> Result<Vec<u8>> {
    let mut rows = vec![vec!["class".into(), "support".into(), "correct".into(), "recall".into()]];
    for l in EmotionLabel::ALL {
        let c = l.code();
        let support: usize = report.confusion[c].iter().sum();
        rows.push(vec![
            l.to_string(),
            support.to_string(),
            report.confusion[c][c].to_string(),
            fmt6(report.per_class_recall[c]),
        ]);
    }
    rows.push(vec![
        "UA".into(),
        report.n_predictions.to_string(),
        String::new(),
        fmt6(report.ua),
    ]);
    csv_bytes(rows)
}

/// Rows are previous emotions; per target class a recall (empty when
/// unsupported) and a support column.
pub fn conditional_csv(m: &ConditionalMatrix) -> Result<Vec<u8>> {
    let mut header = vec!["previous".to_string()];
    for l in EmotionLabel::ALL {
        header.push(format!("recall_{l}"));
        header.push(format!("support_{l}"));
    }
    let mut rows = vec![header];
    for p in EmotionLabel::ALL {
        let mut r = vec![p.to_string()];
        for c in &m.cells[p.code()] {
            r.push(c.recall().map(fmt6).unwrap_or_default());
            r.push(c.support.to_string());
        }
        rows.push(r);
    }
    let mut last = vec!["NONE".to_string()];
    last.extend(std::iter::repeat_n(String::new(), 2 * N_CLASSES - 1));
    last.push(m.n_no_previous.to_string());
    rows.push(last);
    csv_bytes(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut out = vec![vec!["n_prev".into(), "n_next".into(), "ua".into()]];
    out.extend(
        rows.iter()
            .map(|r| vec![r.n_prev.to_string(), r.n_next.to_string(), fmt6(r.ua)]),
    );
    csv_bytes(out)
}

pub fn summary_text(report: &EvalReport, sweep: Option<&[SweepRow]>) -> String {
    let mut s = String::new();
    writeln!(s, "predictions: {}", report.n_predictions).unwrap();
    writeln!(s, "UA: {:.4}", report.ua).unwrap();
    for l in EmotionLabel::ALL {
        writeln!(s, "recall {l}: {:.4}", report.per_class_recall[l.code()]).unwrap();
    }
    if let Some(m) = &report.conditional {
        writeln!(s, "segments without a previous segment: {}", m.n_no_previous).unwrap();
    }
    if let Some(rows) = sweep {
        writeln!(s, "sweep:").unwrap();
        for r in rows {
            writeln!(s, "  prev {:>4} next {:>4}  UA {:.4}", r.n_prev, r.n_next, r.ua).unwrap();
        }
    }
    s
}

/// Writes `confusion.csv`, `per_class.csv`, `summary.txt` and, when
/// available, `conditional.csv` and `sweep.csv`. Returns the written paths.
pub fn report(report: &EvalReport, sweep: Option<&[SweepRow]>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files: Vec<(&str, Vec<u8>)> = vec![
        ("confusion.csv", confusion_csv(report)?),
        ("per_class.csv", per_class_csv(report)?),
    ];
    if let Some(m) = &report.conditional {
        files.push(("conditional.csv", conditional_csv(m)?));
    }
    if let Some(rows) = sweep {
        files.push(("sweep.csv", sweep_csv(rows)?));
    }
    files.push(("summary.txt", summary_text(report, sweep).into_bytes()));
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = out_dir.join(name);
        write_file(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}
