//! Single-document experiment configuration.
//!
//! ```toml
//! seed = 0
//! folds = 5
//! corpus = "data/corpus.jsonl"   # or a [generator] table
//!
//! [policy]
//! scale = "turns"
//! direction = "previous"
//! speaker_scope = "all"
//!
//! [model]
//! d_model = 16
//! mwce = true
//! ccfte = true
//!
//! [train]
//! max_epochs = 30
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{load_corpus, Corpus};
use crate::error::{Error, Result};
use crate::model::EncoderConfig;
use crate::synthgen::{generate, GeneratorSpec};
use crate::training::{AdamConfig, Modality, TrainConfig};
use crate::windowing::ContextPolicy;

/// Synthetic corpus generated on the fly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSource {
    pub n_dialogues: usize,
    /// Generator seed; defaults to the experiment seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub spec: GeneratorSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub modality: Modality,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            optimizer: t.optimizer,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            modality: t.modality,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    /// `(n_prev, n_next)` token windows; must include `(0, 0)`.
    pub windows: Vec<(usize, usize)>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            windows: vec![(0, 0), (10, 0), (50, 0), (100, 0)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: Option<PathBuf>,
    pub generator: Option<GeneratorSource>,
    pub policy: ContextPolicy,
    pub model: EncoderConfig,
    pub train: TrainSettings,
    pub folds: usize,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    pub sweep: SweepSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            generator: None,
            policy: ContextPolicy::none(),
            model: EncoderConfig::default(),
            train: TrainSettings::default(),
            folds: 5,
            out_dir: None,
            seed: 0,
            sweep: SweepSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; a relative corpus path is resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(c) = &cfg.corpus {
            if c.is_relative() {
                let base = path.parent().unwrap_or(Path::new(""));
                cfg.corpus = Some(base.join(c));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.corpus, &self.generator) {
            (Some(_), None) => {}
            (None, Some(g)) => g.spec.validate()?,
            _ => {
                return Err(Error::Config(
                    "exactly one of `corpus` and `generator` must be given".into(),
                ))
            }
        }
        if self.folds < 3 {
            return Err(Error::Config(format!("folds must be >= 3, got {}", self.folds)));
        }
        self.policy.validate()?;
        // The input kind comes from the corpus; check the rest with a placeholder.
        let mut model = self.model.clone();
        model.input = crate::model::InputKind::Tokens { vocab_size: 1 };
        model.validate()?;
        self.train_config().validate()
    }

    /// Training configuration for single-phase runs.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            optimizer: self.train.optimizer,
            batch_size: self.train.batch_size,
            max_epochs: self.train.max_epochs,
            seed: self.seed,
            policy: self.policy.clone(),
            modality: self.train.modality,
            model: self.model.clone(),
        }
    }

    /// Hierarchical phase 1: the context-free architecture without context.
    pub fn phase1_config(&self) -> TrainConfig {
        TrainConfig {
            model: self.model.baseline(),
            ..self.train_config().with_policy(ContextPolicy::none())
        }
    }

    /// SHA-256 of the canonical JSON form of the config.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }

    pub fn corpus(&self) -> Result<Corpus> {
        match (&self.corpus, &self.generator) {
            (Some(path), None) => load_corpus(path),
            (None, Some(g)) => generate(&g.spec, g.n_dialogues, g.seed.unwrap_or(self.seed)),
            _ => Err(Error::Config("exactly one of `corpus` and `generator` must be given".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::windowing::{Direction, Scale};

    #[test]
    fn parses_a_minimal_document() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            seed = 3
            [generator]
            n_dialogues = 10
            [generator.spec]
            emission_ambiguity = 0.2
            [policy]
            scale = "tokens"
            direction = "previous"
            n_prev_tokens = 10
            [model]
            d_model = 16
            n_heads = 2
            [sweep]
            windows = [[0, 0], [10, 0]]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.policy.scale, Scale::Tokens);
        assert_eq!(cfg.policy.direction, Direction::Previous);
        assert_eq!(cfg.model.d_ff, EncoderConfig::default().d_ff);
        assert_eq!(cfg.sweep.windows, vec![(0, 0), (10, 0)]);
        assert_eq!(cfg.train_config().seed, 3);
        assert_eq!(cfg.corpus().unwrap().dialogues().len(), 10);
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn needs_exactly_one_corpus_source() {
        assert!(ExperimentConfig::from_toml("seed = 0").is_err());
        let both = "corpus = \"x.jsonl\"\n[generator]\nn_dialogues = 1\n";
        assert!(ExperimentConfig::from_toml(both).is_err());
        assert!(ExperimentConfig::from_toml("corpus = \"x.jsonl\"\nfolds = 2").is_err());
        assert!(ExperimentConfig::from_toml("corpus = \"x.jsonl\"\nbogus = 1").is_err());
    }
}
