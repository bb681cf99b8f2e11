//! Emotion classification of two-party dialogue segments, with context
//! taken from neighbouring tokens or speech turns.
//!
//! The crate is organised bottom-up:
//!
//! - [`corpus`]: dialogue data model, the line-delimited corpus format and
//!   descriptive analytics (class statistics, emotion transitions, gaps).
//! - [`synthgen`]: a Markov-chain dialogue generator with known emotion
//!   dynamics and a Bayes-optimal accuracy oracle.
//! - [`windowing`]: context assembly at token scale ("blind" windows) and at
//!   speech-turn scale with speaker scoping, including acoustic length caps.
//! - [`model`]: a small transformer encoder classifier with masked attention
//!   pooling, an auxiliary context-vector module and hand-written backprop.
//! - [`training`]: speaker-independent folds, Adam training with
//!   best-validation selection, hierarchical fine-tuning and token sweeps.
//! - [`evaluation`]: unweighted accuracy, fold pooling, conditional accuracy
//!   by previous emotion and CSV reports.
//! - [`experiment`]: the single-document experiment configuration used by the
//!   command line front end.

pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod matrix;
pub mod model;
pub mod rng;
pub mod synthgen;
pub mod training;
pub mod windowing;

pub use corpus::{Corpus, Dialogue, EmotionLabel, Role, Segment};
pub use error::{Error, Result};
