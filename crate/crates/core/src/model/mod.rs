//! Transformer encoder classifier with masked attention pooling and an
//! auxiliary context-vector module.
//!
//! The whole sample (context ++ target) goes through a post-norm transformer
//! encoder with unrestricted self-attention. Two strategies then decide how
//! context reaches the classifier:
//!
//! - **masked context embeddings** (`mwce`): the pooling layer only reads
//!   target-position embeddings, so context influences the prediction only
//!   through self-attention;
//! - **context-vector concatenation** (`ccfte`): context-position embeddings
//!   are attention-pooled and passed through a fully connected layer to give
//!   a context vector, which is appended to every pooled embedding before the
//!   (widened) pooling and classifier.
//!
//! Gradients are computed by hand-written reverse-mode code in [`network`].

mod checkpoint;
mod input;
mod network;
mod params;

use serde::{Deserialize, Serialize};

use crate::corpus::N_CLASSES;
use crate::error::{Error, Result};

pub use checkpoint::{checkpoint_bytes, checkpoint_hash, load_checkpoint, parse_checkpoint, save_checkpoint};
pub use input::{ModelInput, ModelSample, Vocabulary};
pub use network::{
    attention_pool, context_vector, encode, forward, logits_from_embeddings, loss_and_grad,
    loss_and_grad_with_dropout, softmax, ContextVector, EmbeddingSequence, PoolOutput,
};
pub use params::{EncoderParams, LayerParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputKind {
    /// Token embedding table; id 0 is reserved for unknown tokens.
    Tokens { vocab_size: usize },
    /// Linear projection of `d_feat`-dimensional frame rows.
    Frames { d_feat: usize },
}

impl Default for InputKind {
    fn default() -> Self {
        InputKind::Tokens { vocab_size: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_positions: usize,
    pub input: InputKind,
    pub dropout_rate: f64,
    /// Context-vector width.
    pub d_ctx: usize,
    /// Pool over target positions only.
    pub mwce: bool,
    /// Append a pooled context vector to the pooled embeddings.
    pub ccfte: bool,
    pub ctx_activation: Activation,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 128,
            max_positions: 256,
            input: InputKind::default(),
            dropout_rate: 0.1,
            d_ctx: 32,
            mwce: true,
            ccfte: false,
            ctx_activation: Activation::Tanh,
        }
    }
}

impl EncoderConfig {
    pub fn n_classes(&self) -> usize {
        N_CLASSES
    }

    /// Width of the rows entering the main pooling layer and classifier.
    pub fn pooled_width(&self) -> usize {
        self.d_model + if self.ccfte { self.d_ctx } else { 0 }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Same encoder with both context strategies switched off.
    pub fn baseline(&self) -> Self {
        Self {
            mwce: false,
            ccfte: false,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad(format!(
                "d_model ({}) must be a positive multiple of n_heads ({})",
                self.d_model, self.n_heads
            ));
        }
        if self.d_ff == 0 || self.max_positions == 0 {
            return bad("d_ff and max_positions must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0,1)", self.dropout_rate));
        }
        if self.ccfte && self.d_ctx == 0 {
            return bad("ccfte needs d_ctx > 0".into());
        }
        match self.input {
            InputKind::Tokens { vocab_size: 0 } => bad("vocab_size must be > 0".into()),
            InputKind::Frames { d_feat: 0 } => bad("d_feat must be > 0".into()),
            _ => Ok(()),
        }
    }
}
