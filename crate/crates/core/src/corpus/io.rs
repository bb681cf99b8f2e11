//! Line-delimited corpus format.
//!
//! Line 1 is a header object; every following line is one dialogue. Keys are
//! written in sorted order, times with exactly six decimals and frame values
//! in shortest round-trip form, so serialization is deterministic:
//!
//! ```text
//! {"d_feat":0,"format":"convctx-corpus","frame_rate":0.000000,"version":1}
//! {"dialogue_id":"d0","segments":[{"end_s":1.200000,"label":"NEU","role":"agent","segment_id":"s000","speaker_id":"a000","start_s":0.000000,"tokens":["neu3","neu1"]}]}
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use super::{quantize_seconds, Corpus, Dialogue, EmotionLabel, Role, Segment};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const FORMAT: &str = "convctx-corpus";
const VERSION: u32 = 1;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    d_feat: usize,
    format: String,
    frame_rate: f64,
    version: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DialogueRecord {
    dialogue_id: String,
    segments: Vec<SegmentRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentRecord {
    end_s: f64,
    #[serde(default)]
    frames: Option<Vec<Vec<f64>>>,
    label: EmotionLabel,
    role: Role,
    segment_id: String,
    speaker_id: String,
    start_s: f64,
    #[serde(default)]
    tokens: Vec<String>,
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text)
}

pub fn parse_corpus(text: &str) -> Result<Corpus> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let (line_no, header_line) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing header line".into(),
    })?;
    let header: Header = serde_json::from_str(header_line).map_err(|e| Error::Parse {
        line: line_no,
        message: format!("header: {e}"),
    })?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(Error::Parse {
            line: line_no,
            message: format!(
                "unsupported format {:?} version {}",
                header.format, header.version
            ),
        });
    }

    let mut dialogues = Vec::new();
    for (line_no, line) in lines {
        let rec: DialogueRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let mut segments = Vec::with_capacity(rec.segments.len());
        for s in rec.segments {
            let frames = match s.frames {
                None => None,
                Some(rows) => {
                    if rows.iter().any(|r| r.len() != header.d_feat) {
                        return Err(Error::Parse {
                            line: line_no,
                            message: format!(
                                "segment {}: frame rows must have d_feat = {} values",
                                s.segment_id, header.d_feat
                            ),
                        });
                    }
                    let n = rows.len();
                    Some(Matrix::from_vec(
                        n,
                        header.d_feat,
                        rows.into_iter().flatten().collect(),
                    ))
                }
            };
            segments.push(Segment {
                segment_id: s.segment_id,
                speaker_id: s.speaker_id,
                role: s.role,
                start_s: quantize_seconds(s.start_s),
                end_s: quantize_seconds(s.end_s),
                tokens: s.tokens,
                frames,
                label: s.label,
            });
        }
        dialogues.push(Dialogue {
            dialogue_id: rec.dialogue_id,
            segments,
        });
    }
    Corpus::new(dialogues, quantize_seconds(header.frame_rate), header.d_feat)
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_corpus(corpus, &mut file).map_err(|e| Error::io(path, e))
}

pub fn write_corpus(corpus: &Corpus, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(
        out,
        "{{\"d_feat\":{},\"format\":\"{FORMAT}\",\"frame_rate\":{:.6},\"version\":{VERSION}}}",
        corpus.d_feat(),
        corpus.frame_rate()
    )?;
    let mut line = String::new();
    for d in corpus.dialogues() {
        line.clear();
        encode_dialogue(d, &mut line);
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

fn encode_dialogue(d: &Dialogue, out: &mut String) {
    // `write!` into a String cannot fail.
    let _ = write!(out, "{{\"dialogue_id\":{},\"segments\":[", json_str(&d.dialogue_id));
    for (i, s) in d.segments.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{{\"end_s\":{:.6},", s.end_s);
        if let Some(f) = &s.frames {
            out.push_str("\"frames\":[");
            for r in 0..f.rows() {
                if r > 0 {
                    out.push(',');
                }
                out.push('[');
                for (j, v) in f.row(r).iter().enumerate() {
                    if j > 0 {
                        out.push(',');
                    }
                    out.push_str(&serde_json::to_string(v).expect("finite frame value"));
                }
                out.push(']');
            }
            out.push_str("],");
        }
        let _ = write!(
            out,
            "\"label\":\"{}\",\"role\":\"{}\",\"segment_id\":{},\"speaker_id\":{},\"start_s\":{:.6},\"tokens\":[",
            s.label,
            s.role.as_str(),
            json_str(&s.segment_id),
            json_str(&s.speaker_id),
            s.start_s
        );
        for (j, t) in s.tokens.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&json_str(t));
        }
        out.push_str("]}");
    }
    out.push_str("]}");
}
