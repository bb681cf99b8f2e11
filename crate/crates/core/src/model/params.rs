use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{EncoderConfig, InputKind};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub wq: Matrix,
    pub bq: Matrix,
    pub wk: Matrix,
    pub bk: Matrix,
    pub wv: Matrix,
    pub bv: Matrix,
    pub wo: Matrix,
    pub bo: Matrix,
    pub ln1_gain: Matrix,
    pub ln1_bias: Matrix,
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
    pub ln2_gain: Matrix,
    pub ln2_bias: Matrix,
}

/// Context-vector module weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CcfteParams {
    pub query: Matrix,
    pub fc_w: Matrix,
    pub fc_b: Matrix,
    /// Stands in for the context vector when a sample has no context.
    pub default_ctx: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    /// `[vocab_size × d_model]` embedding table or `[d_feat × d_model]` projection.
    pub input_proj: Matrix,
    /// Frame projection bias; absent for token input.
    pub input_bias: Option<Matrix>,
    pub positions: Matrix,
    pub layers: Vec<LayerParams>,
    /// `1 × pooled_width`
    pub pool_query: Matrix,
    pub ccfte: Option<CcfteParams>,
    /// `pooled_width × n_classes`
    pub cls_w: Matrix,
    pub cls_b: Matrix,
}

fn normal<R: Rng>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            std * z
        })
        .collect();
    Matrix::from_vec(rows, cols, data)
}

fn glorot<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Matrix {
    normal(rng, fan_in, fan_out, (2.0 / (fan_in + fan_out) as f64).sqrt())
}

fn ones(n: usize) -> Matrix {
    Matrix::from_vec(1, n, vec![1.0; n])
}

impl LayerParams {
    fn init<R: Rng>(rng: &mut R, d: usize, d_ff: usize) -> Self {
        Self {
            wq: glorot(rng, d, d),
            bq: Matrix::zeros(1, d),
            wk: glorot(rng, d, d),
            bk: Matrix::zeros(1, d),
            wv: glorot(rng, d, d),
            bv: Matrix::zeros(1, d),
            wo: glorot(rng, d, d),
            bo: Matrix::zeros(1, d),
            ln1_gain: ones(d),
            ln1_bias: Matrix::zeros(1, d),
            w1: glorot(rng, d, d_ff),
            b1: Matrix::zeros(1, d_ff),
            w2: glorot(rng, d_ff, d),
            b2: Matrix::zeros(1, d),
            ln2_gain: ones(d),
            ln2_bias: Matrix::zeros(1, d),
        }
    }

    fn named(&self, i: usize) -> Vec<(String, &Matrix)> {
        [
            ("wq", &self.wq),
            ("bq", &self.bq),
            ("wk", &self.wk),
            ("bk", &self.bk),
            ("wv", &self.wv),
            ("bv", &self.bv),
            ("wo", &self.wo),
            ("bo", &self.bo),
            ("ln1_gain", &self.ln1_gain),
            ("ln1_bias", &self.ln1_bias),
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("b2", &self.b2),
            ("ln2_gain", &self.ln2_gain),
            ("ln2_bias", &self.ln2_bias),
        ]
        .into_iter()
        .map(|(n, m)| (format!("layer{i}.{n}"), m))
        .collect()
    }

    fn tensors_mut(&mut self) -> [&mut Matrix; 16] {
        [
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
        ]
    }
}

impl CcfteParams {
    fn init<R: Rng>(rng: &mut R, d: usize, d_ctx: usize) -> Self {
        Self {
            query: normal(rng, 1, d, (1.0 / d as f64).sqrt()),
            fc_w: glorot(rng, d, d_ctx),
            fc_b: Matrix::zeros(1, d_ctx),
            default_ctx: Matrix::zeros(1, d_ctx),
        }
    }
}

impl EncoderParams {
    /// Random initialisation: Glorot-normal weights, zero biases, unit layer
    /// norm gains and a zero default context vector.
    pub fn init<R: Rng>(config: &EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let (input_proj, input_bias) = match config.input {
            InputKind::Tokens { vocab_size } => (normal(rng, vocab_size, d, 1.0), None),
            InputKind::Frames { d_feat } => (glorot(rng, d_feat, d), Some(Matrix::zeros(1, d))),
        };
        let positions = normal(rng, config.max_positions, d, 0.1);
        let layers = (0..config.n_layers)
            .map(|_| LayerParams::init(rng, d, config.d_ff))
            .collect();
        let width = config.pooled_width();
        let pool_query = normal(rng, 1, width, (1.0 / width as f64).sqrt());
        let ccfte = config
            .ccfte
            .then(|| CcfteParams::init(rng, d, config.d_ctx));
        let cls_w = glorot(rng, width, config.n_classes());
        let cls_b = Matrix::zeros(1, config.n_classes());
        Ok(Self {
            config: config.clone(),
            input_proj,
            input_bias,
            positions,
            layers,
            pool_query,
            ccfte,
            cls_w,
            cls_b,
        })
    }

    /// All tensors with stable names, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> = vec![("input.proj".into(), &self.input_proj)];
        if let Some(b) = &self.input_bias {
            out.push(("input.bias".into(), b));
        }
        out.push(("positions".into(), &self.positions));
        for (i, l) in self.layers.iter().enumerate() {
            out.extend(l.named(i));
        }
        out.push(("pool.query".into(), &self.pool_query));
        if let Some(c) = &self.ccfte {
            out.push(("ccfte.query".into(), &c.query));
            out.push(("ccfte.fc_w".into(), &c.fc_w));
            out.push(("ccfte.fc_b".into(), &c.fc_b));
            out.push(("ccfte.default_ctx".into(), &c.default_ctx));
        }
        out.push(("cls.w".into(), &self.cls_w));
        out.push(("cls.b".into(), &self.cls_b));
        out
    }

    /// Mutable tensors in the same order as [`named_tensors`](Self::named_tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = vec![&mut self.input_proj];
        if let Some(b) = &mut self.input_bias {
            out.push(b);
        }
        out.push(&mut self.positions);
        for l in &mut self.layers {
            out.extend(l.tensors_mut());
        }
        out.push(&mut self.pool_query);
        if let Some(c) = &mut self.ccfte {
            out.push(&mut c.query);
            out.push(&mut c.fc_w);
            out.push(&mut c.fc_b);
            out.push(&mut c.default_ctx);
        }
        out.push(&mut self.cls_w);
        out.push(&mut self.cls_b);
        out
    }

    pub fn n_parameters(&self) -> usize {
        self.named_tensors().iter().map(|(_, m)| m.len()).sum()
    }

    /// Same shapes, all zeros (gradient and optimizer-moment buffers).
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, m)| m.is_finite())
    }

    /// Parameters of the context-free model that shares this model's encoder:
    /// the context-vector module is dropped and the widened pooling query and
    /// classifier are cut back to their first `d_model` rows.
    pub fn baseline(&self) -> Self {
        let d = self.config.d_model;
        let mut b = self.clone();
        b.config = self.config.baseline();
        b.ccfte = None;
        b.pool_query = Matrix::from_vec(1, d, self.pool_query.as_slice()[..d].to_vec());
        b.cls_w = self.cls_w.slice_rows(0, d);
        b
    }

    /// Fresh parameters for `config` whose shared weights are copied from
    /// `from`. Tensors that only exist in the new configuration (context
    /// module, widened pooling/classifier rows) keep their fresh values.
    pub fn warm_start<R: Rng>(config: &EncoderConfig, from: &EncoderParams, rng: &mut R) -> Result<Self> {
        if config.input != from.config.input
            || config.d_model != from.config.d_model
            || config.n_layers != from.config.n_layers
            || config.n_heads != from.config.n_heads
            || config.d_ff != from.config.d_ff
            || config.max_positions != from.config.max_positions
        {
            return Err(Error::Config(
                "warm start needs identical encoder dimensions".into(),
            ));
        }
        let mut fresh = Self::init(config, rng)?;
        let source: std::collections::HashMap<String, &Matrix> =
            from.named_tensors().into_iter().collect();
        let names: Vec<String> = fresh.named_tensors().into_iter().map(|(n, _)| n).collect();
        for (name, dst) in names.iter().zip(fresh.tensors_mut()) {
            let Some(src) = source.get(name) else { continue };
            if src.shape() == dst.shape() {
                dst.clone_from(src);
            } else if name == "pool.query" {
                let k = src.cols().min(dst.cols());
                dst.as_mut_slice()[..k].copy_from_slice(&src.as_slice()[..k]);
            } else if name == "cls.w" {
                let k = src.rows().min(dst.rows());
                dst.as_mut_slice()[..k * src.cols()]
                    .copy_from_slice(&src.as_slice()[..k * src.cols()]);
            }
        }
        Ok(fresh)
    }

    /// True when every weight shared with `other` is bitwise identical.
    pub fn shared_bit_eq(&self, other: &EncoderParams) -> bool {
        let mine: std::collections::HashMap<String, &Matrix> =
            self.named_tensors().into_iter().collect();
        other.named_tensors().into_iter().all(|(name, theirs)| {
            let Some(m) = mine.get(&name) else { return true };
            if m.shape() == theirs.shape() {
                return m.bit_eq(theirs);
            }
            let prefix = |a: &Matrix, b: &Matrix| {
                let k = a.len().min(b.len());
                a.as_slice()[..k]
                    .iter()
                    .zip(&b.as_slice()[..k])
                    .all(|(x, y)| x.to_bits() == y.to_bits())
            };
            (name == "pool.query" || name == "cls.w") && prefix(m, theirs)
        })
    }
}
