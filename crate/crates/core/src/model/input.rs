use std::collections::HashMap;

use crate::corpus::{Corpus, EmotionLabel};
use crate::matrix::Matrix;
use crate::windowing::{AcousticContextualSample, ContextualSample, PositionRole};

/// Token → id map over a corpus; id 0 is the unknown token.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    pub const UNKNOWN: usize = 0;

    pub fn from_corpus(corpus: &Corpus) -> Self {
        Self::from_tokens(corpus.vocabulary())
    }

    /// Ids are assigned in iteration order starting at 1; duplicates keep
    /// their first id.
    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut ids = HashMap::new();
        for t in tokens {
            let next = ids.len() + 1;
            ids.entry(t.to_string()).or_insert(next);
        }
        Self { ids }
    }

    /// Table size including the unknown slot.
    pub fn size(&self) -> usize {
        self.ids.len() + 1
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(Self::UNKNOWN)
    }

    pub fn encode(&self, sample: &ContextualSample) -> ModelSample {
        ModelSample {
            input: ModelInput::Tokens(sample.positions().into_iter().map(|t| self.id(t)).collect()),
            roles: sample.role_mask(),
            label: sample.label,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelInput {
    Tokens(Vec<usize>),
    /// `[n_positions × d_feat]`
    Frames(Matrix),
}

impl ModelInput {
    pub fn len(&self) -> usize {
        match self {
            ModelInput::Tokens(t) => t.len(),
            ModelInput::Frames(f) => f.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Model-ready sample: positions in `context ++ target ++ context` order
/// with their roles.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSample {
    pub input: ModelInput,
    pub roles: Vec<PositionRole>,
    pub label: EmotionLabel,
}

impl ModelSample {
    pub fn from_acoustic(sample: &AcousticContextualSample) -> Self {
        Self {
            input: ModelInput::Frames(sample.positions()),
            roles: sample.role_mask(),
            label: sample.label,
        }
    }

    pub fn len(&self) -> usize {
        self.input.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input.is_empty()
    }

    pub fn has_context(&self) -> bool {
        self.roles.contains(&PositionRole::Context)
    }

    /// Drops context positions, keeping only the target.
    pub fn without_context(&self) -> Self {
        let keep: Vec<usize> = (0..self.roles.len())
            .filter(|&i| self.roles[i] == PositionRole::Target)
            .collect();
        let input = match &self.input {
            ModelInput::Tokens(t) => ModelInput::Tokens(keep.iter().map(|&i| t[i]).collect()),
            ModelInput::Frames(f) => {
                let rows: Vec<Vec<f64>> = keep.iter().map(|&i| f.row(i).to_vec()).collect();
                ModelInput::Frames(if rows.is_empty() {
                    Matrix::zeros(0, f.cols())
                } else {
                    Matrix::from_rows(&rows)
                })
            }
        };
        Self {
            input,
            roles: vec![PositionRole::Target; keep.len()],
            label: self.label,
        }
    }
}
