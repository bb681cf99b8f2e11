//! Speaker-independent cross-validation, single-phase training with
//! best-validation selection, hierarchical two-phase fine-tuning and
//! token-window sweeps.

mod folds;
mod optim;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, EmotionLabel};
use crate::error::{Error, Result};
use crate::evaluation::{combine_folds, present_class_recall, unweighted_accuracy, PredictionSet, Provenance, SegmentKey, SweepRow};
use crate::model::{
    checkpoint_hash, forward, loss_and_grad_with_dropout, EncoderConfig, EncoderParams, InputKind, ModelSample,
    Vocabulary,
};
use crate::rng::{self, Stream};
use crate::windowing::{build_acoustic_dataset, build_dataset, ContextPolicy};

pub use folds::{make_folds, Fold, FoldPlan};
pub use optim::{Adam, AdamConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    #[default]
    Text,
    Acoustic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub policy: ContextPolicy,
    pub modality: Modality,
    /// Architecture and strategy flags. The input kind is filled in from
    /// the corpus.
    pub model: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: AdamConfig::default(),
            batch_size: 16,
            max_epochs: 30,
            seed: 0,
            policy: ContextPolicy::none(),
            modality: Modality::Text,
            model: EncoderConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size and max_epochs must be >= 1".into()));
        }
        let o = &self.optimizer;
        if !(o.learning_rate >= 0.0 && (0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2) && o.epsilon > 0.0) {
            return Err(Error::Config(format!("invalid optimizer settings {o:?}")));
        }
        self.policy.validate()
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }

    pub fn with_policy(&self, policy: ContextPolicy) -> Self {
        Self {
            policy,
            ..self.clone()
        }
    }
}

/// Model-ready samples for one corpus and policy, in (dialogue, start) order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<ModelSample>,
    pub keys: Vec<SegmentKey>,
    pub speakers: Vec<String>,
    pub input: InputKind,
}

impl Dataset {
    pub fn build(corpus: &Corpus, policy: &ContextPolicy, modality: Modality) -> Result<Self> {
        let speaker = |d: &str, s: &str| -> Result<String> {
            let (dlg, i) = corpus.locate(d, s)?;
            Ok(dlg.segments[i].speaker_id.clone())
        };
        let mut out = Dataset {
            samples: Vec::new(),
            keys: Vec::new(),
            speakers: Vec::new(),
            input: InputKind::Tokens { vocab_size: 1 },
        };
        match modality {
            Modality::Text => {
                let vocab = Vocabulary::from_corpus(corpus);
                out.input = InputKind::Tokens {
                    vocab_size: vocab.size(),
                };
                for s in build_dataset(corpus, policy)? {
                    out.speakers.push(speaker(&s.dialogue_id, &s.segment_id)?);
                    out.samples.push(vocab.encode(&s));
                    out.keys.push((s.dialogue_id, s.segment_id));
                }
            }
            Modality::Acoustic => {
                out.input = InputKind::Frames {
                    d_feat: corpus.d_feat(),
                };
                for s in build_acoustic_dataset(corpus, policy)? {
                    out.speakers.push(speaker(&s.dialogue_id, &s.segment_id)?);
                    out.samples.push(ModelSample::from_acoustic(&s));
                    out.keys.push((s.dialogue_id, s.segment_id));
                }
            }
        }
        Ok(out)
    }

    pub fn indices_for(&self, speakers: &BTreeSet<String>) -> Vec<usize> {
        (0..self.samples.len())
            .filter(|&i| speakers.contains(&self.speakers[i]))
            .collect()
    }

    /// The model configuration with the input kind of this dataset.
    pub fn model_config(&self, model: &EncoderConfig) -> EncoderConfig {
        EncoderConfig {
            input: self.input,
            ..model.clone()
        }
    }
}

fn argmax(logits: &[f64; 4]) -> EmotionLabel {
    let mut best = 0;
    for k in 1..4 {
        if logits[k] > logits[best] {
            best = k;
        }
    }
    EmotionLabel::ALL[best]
}

/// Inference-mode predictions for the samples at `indices`.
pub fn predict(params: &EncoderParams, data: &Dataset, indices: &[usize], provenance: Provenance) -> Result<PredictionSet> {
    let labels: Vec<EmotionLabel> = indices
        .par_iter()
        .map(|&i| forward(params, &data.samples[i]).map(|l| argmax(&l)))
        .collect::<Result<_>>()?;
    let mut set = PredictionSet::new(provenance);
    for (&i, predicted) in indices.iter().zip(labels) {
        let (d, s) = &data.keys[i];
        set.insert(d, s, data.samples[i].label, predicted);
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    /// Mean recall over the classes present in the validation speakers.
    pub val_ua: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub fold: usize,
    pub config_hash: String,
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch with the highest validation UA (earliest on ties).
    pub selected_epoch: usize,
    pub best_val_ua: f64,
    /// SHA-256 of the selected checkpoint.
    pub checkpoint_hash: String,
    pub test_predictions: PredictionSet,
}

/// Starting point of a training run.
#[derive(Debug, Clone, Copy)]
pub enum Init<'a> {
    /// Random initialisation from the run seed.
    Fresh,
    /// Shared weights copied from a checkpoint; the rest initialised fresh.
    WarmStart(&'a EncoderParams),
}

/// Initial parameters of a run, before any update.
pub fn initial_params(data: &Dataset, config: &TrainConfig, init: Init<'_>) -> Result<EncoderParams> {
    let model = data.model_config(&config.model);
    match init {
        Init::Fresh => EncoderParams::init(&model, &mut rng::substream(config.seed, Stream::Init)),
        Init::WarmStart(from) => {
            EncoderParams::warm_start(&model, from, &mut rng::substream(config.seed, Stream::FreshInit))
        }
    }
}

/// Trains on one fold and returns the record with the selected parameters.
pub fn train_on(data: &Dataset, fold: &Fold, config: &TrainConfig, init: Init<'_>) -> Result<(RunRecord, EncoderParams)> {
    config.validate()?;
    let train_idx = data.indices_for(&fold.train);
    let val_idx = data.indices_for(&fold.validation);
    let test_idx = data.indices_for(&fold.test);
    if train_idx.is_empty() {
        return Err(Error::Config(format!("fold {} has no training samples", fold.index)));
    }
    let mut params = initial_params(data, config, init)?;
    let mut adam = Adam::new(config.optimizer, &params);
    let mut shuffle_rng = rng::substream(config.seed, Stream::Shuffle);
    let mut dropout_rng = rng::substream(config.seed, Stream::Dropout);
    let provenance = Provenance {
        folds: vec![fold.index],
        config_hash: config.hash(),
    };

    let mut order = train_idx;
    let mut epochs = Vec::with_capacity(config.max_epochs);
    let mut best: Option<(usize, f64, EncoderParams)> = None;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&ModelSample> = chunk.iter().map(|&i| &data.samples[i]).collect();
            let (loss, grads) = match loss_and_grad_with_dropout(&params, &batch, &mut dropout_rng) {
                Err(Error::Divergence { loss, .. }) => {
                    return Err(Error::Divergence { epoch, batch: b + 1, loss })
                }
                r => r?,
            };
            adam.step(&mut params, &grads);
            if !params.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                    loss: f64::NAN,
                });
            }
            total += loss * chunk.len() as f64;
        }
        let val = predict(&params, data, &val_idx, provenance.clone())?;
        let val_ua = present_class_recall(&val).unwrap_or(0.0);
        epochs.push(EpochStats {
            epoch,
            train_loss: total / order.len() as f64,
            val_ua,
        });
        if best.as_ref().is_none_or(|(_, ua, _)| val_ua > *ua) {
            best = Some((epoch, val_ua, params.clone()));
        }
    }
    let (selected_epoch, best_val_ua, best_params) = best.expect("max_epochs >= 1");
    let test_predictions = predict(&best_params, data, &test_idx, provenance.clone())?;
    let record = RunRecord {
        fold: fold.index,
        config_hash: provenance.config_hash,
        epochs,
        selected_epoch,
        best_val_ua,
        checkpoint_hash: checkpoint_hash(&best_params),
        test_predictions,
    };
    Ok((record, best_params))
}

pub fn train_fold(corpus: &Corpus, fold: &Fold, config: &TrainConfig) -> Result<RunRecord> {
    let data = Dataset::build(corpus, &config.policy, config.modality)?;
    Ok(train_on(&data, fold, config, Init::Fresh)?.0)
}

/// Results of running every fold of a plan.
#[derive(Debug, Clone)]
pub struct CrossValidation {
    pub records: Vec<RunRecord>,
    pub params: Vec<EncoderParams>,
    pub combined: PredictionSet,
    /// UA of the pooled test predictions.
    pub ua: f64,
}

fn pool(runs: Vec<(RunRecord, EncoderParams)>) -> Result<CrossValidation> {
    let (records, params): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let sets: Vec<PredictionSet> = records.iter().map(|r| r.test_predictions.clone()).collect();
    let combined = combine_folds(&sets)?;
    let ua = unweighted_accuracy(&combined)?;
    Ok(CrossValidation {
        records,
        params,
        combined,
        ua,
    })
}

/// Trains every fold (in parallel) and pools the test predictions.
pub fn cross_validate(corpus: &Corpus, plan: &FoldPlan, config: &TrainConfig) -> Result<CrossValidation> {
    let data = Dataset::build(corpus, &config.policy, config.modality)?;
    let runs = plan
        .folds
        .par_iter()
        .map(|f| train_on(&data, f, config, Init::Fresh))
        .collect::<Result<Vec<_>>>()?;
    pool(runs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalRecord {
    pub phase1: RunRecord,
    /// Hash of the phase-1 checkpoint both phase-2 runs start from.
    pub phase1_checkpoint: String,
    pub context: RunRecord,
    pub control: RunRecord,
}

/// Phase-2 control: the phase-2 configuration without context.
pub fn control_config(phase2: &TrainConfig) -> TrainConfig {
    phase2.with_policy(ContextPolicy::none())
}

fn check_phases(phase1: &TrainConfig, phase2: &TrainConfig) -> Result<()> {
    if phase1.policy.has_context() {
        return Err(Error::Config("phase 1 must train without context".into()));
    }
    if phase1.modality != phase2.modality {
        return Err(Error::Config("both phases must use the same modality".into()));
    }
    Ok(())
}

/// Phase 1 without context, then two phase-2 runs warm-started from the
/// phase-1 checkpoint: one with `phase2`'s context policy and a control
/// without context.
pub fn hierarchical_train(corpus: &Corpus, fold: &Fold, phase1: &TrainConfig, phase2: &TrainConfig) -> Result<HierarchicalRecord> {
    check_phases(phase1, phase2)?;
    let base = Dataset::build(corpus, &phase1.policy, phase1.modality)?;
    let ctx_data = Dataset::build(corpus, &phase2.policy, phase2.modality)?;
    let ctl_cfg = control_config(phase2);
    let ctl_data = Dataset::build(corpus, &ctl_cfg.policy, ctl_cfg.modality)?;
    hierarchical_on(&base, &ctx_data, &ctl_data, fold, phase1, phase2)
}

fn hierarchical_on(
    base: &Dataset,
    ctx_data: &Dataset,
    ctl_data: &Dataset,
    fold: &Fold,
    phase1: &TrainConfig,
    phase2: &TrainConfig,
) -> Result<HierarchicalRecord> {
    let (phase1_record, p1) = train_on(base, fold, phase1, Init::Fresh)?;
    let (context, _) = train_on(ctx_data, fold, phase2, Init::WarmStart(&p1))?;
    let (control, _) = train_on(ctl_data, fold, &control_config(phase2), Init::WarmStart(&p1))?;
    Ok(HierarchicalRecord {
        phase1_checkpoint: phase1_record.checkpoint_hash.clone(),
        phase1: phase1_record,
        context,
        control,
    })
}

#[derive(Debug, Clone)]
pub struct HierarchicalCv {
    pub records: Vec<HierarchicalRecord>,
    pub context: PredictionSet,
    pub control: PredictionSet,
    pub context_ua: f64,
    pub control_ua: f64,
}

pub fn hierarchical_cross_validate(
    corpus: &Corpus,
    plan: &FoldPlan,
    phase1: &TrainConfig,
    phase2: &TrainConfig,
) -> Result<HierarchicalCv> {
    check_phases(phase1, phase2)?;
    let base = Dataset::build(corpus, &phase1.policy, phase1.modality)?;
    let ctx_data = Dataset::build(corpus, &phase2.policy, phase2.modality)?;
    let ctl_cfg = control_config(phase2);
    let ctl_data = Dataset::build(corpus, &ctl_cfg.policy, ctl_cfg.modality)?;
    let records = plan
        .folds
        .par_iter()
        .map(|f| hierarchical_on(&base, &ctx_data, &ctl_data, f, phase1, phase2))
        .collect::<Result<Vec<_>>>()?;
    let context = combine_folds(&records.iter().map(|r| r.context.test_predictions.clone()).collect::<Vec<_>>())?;
    let control = combine_folds(&records.iter().map(|r| r.control.test_predictions.clone()).collect::<Vec<_>>())?;
    Ok(HierarchicalCv {
        context_ua: unweighted_accuracy(&context)?,
        control_ua: unweighted_accuracy(&control)?,
        records,
        context,
        control,
    })
}

/// Cross-validated UA per token window. `(0, 0)` runs the no-context
/// policy, i.e. exactly the baseline.
pub fn token_sweep(
    corpus: &Corpus,
    plan: &FoldPlan,
    windows: &[(usize, usize)],
    config: &TrainConfig,
) -> Result<Vec<(SweepRow, CrossValidation)>> {
    if !windows.contains(&(0, 0)) {
        return Err(Error::Config("sweep windows must include (0, 0)".into()));
    }
    windows
        .iter()
        .map(|&(n_prev, n_next)| {
            let policy = if (n_prev, n_next) == (0, 0) {
                ContextPolicy::none()
            } else {
                ContextPolicy::tokens(n_prev, n_next)
            };
            let cv = cross_validate(corpus, plan, &config.with_policy(policy))?;
            Ok((SweepRow { n_prev, n_next, ua: cv.ua }, cv))
        })
        .collect()
}

/// Runs `f` on a thread pool limited to `jobs` threads (0 = all cores).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
