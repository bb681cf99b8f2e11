//! Forward pass, attention pooling, context vector and exact gradients.
//!
//! Every forward step stores what its backward step needs in a cache; the
//! backward functions mirror the forward ones in reverse order. Reductions
//! run in a fixed index order, so repeated calls are bitwise reproducible.

use std::borrow::Borrow;

use rand::Rng;

use super::params::{EncoderParams, LayerParams};
use super::{InputKind, ModelInput, ModelSample};
use crate::corpus::N_CLASSES;
use crate::error::{Error, Result};
use crate::matrix::{axpy, dot, Matrix};
use crate::windowing::PositionRole;

const LN_EPS: f64 = 1e-5;

/// Per-position encoder outputs with their roles.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    /// `[n_positions × d_model]`
    pub rows: Matrix,
    pub roles: Vec<PositionRole>,
}

impl EmbeddingSequence {
    pub fn mask(&self, role: PositionRole) -> Vec<bool> {
        self.roles.iter().map(|r| *r == role).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolOutput {
    pub vector: Vec<f64>,
    /// One weight per input position; exactly zero where the mask is off.
    pub weights: Vec<f64>,
}

/// Context vector produced by the auxiliary context module.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextVector(pub Vec<f64>);

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

// ---------------------------------------------------------------------------
// Attention pooling

struct PoolCache {
    alphas: Vec<f64>,
    scale: f64,
}

/// Softmax-weighted sum of `rows` scored by `query · row * scale`.
fn pool_rows(rows: &Matrix, query: &[f64], scale: f64) -> (Vec<f64>, PoolCache) {
    let mut alphas: Vec<f64> = (0..rows.rows())
        .map(|t| dot(query, rows.row(t)) * scale)
        .collect();
    softmax_in_place(&mut alphas);
    let mut out = vec![0.0; rows.cols()];
    for (t, &a) in alphas.iter().enumerate() {
        axpy(&mut out, a, rows.row(t));
    }
    (out, PoolCache { alphas, scale })
}

/// Returns `d rows` and accumulates the query gradient into `dquery`.
fn pool_rows_backward(
    rows: &Matrix,
    query: &[f64],
    cache: &PoolCache,
    dout: &[f64],
    dquery: &mut [f64],
) -> Matrix {
    let m = rows.rows();
    let dalpha: Vec<f64> = (0..m).map(|t| dot(rows.row(t), dout)).collect();
    let mean: f64 = cache.alphas.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
    let mut drows = Matrix::zeros(m, rows.cols());
    for t in 0..m {
        let a = cache.alphas[t];
        let ds = a * (dalpha[t] - mean) * cache.scale;
        let dr = drows.row_mut(t);
        axpy(dr, a, dout);
        axpy(dr, ds, query);
        axpy(dquery, ds, rows.row(t));
    }
    drows
}

fn gather_rows(src: &Matrix, idx: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(idx.len(), src.cols());
    for (o, &i) in idx.iter().enumerate() {
        out.row_mut(o).copy_from_slice(src.row(i));
    }
    out
}

/// Attention pooling restricted to positions where `mask` is set.
///
/// Scores are `query · h_t / sqrt(width)`; masked-out positions are never read.
pub fn attention_pool(rows: &Matrix, mask: &[bool], query: &[f64]) -> Result<PoolOutput> {
    if mask.len() != rows.rows() || query.len() != rows.cols() {
        return Err(Error::Model("pooling mask or query does not match the embeddings".into()));
    }
    let idx: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    if idx.is_empty() {
        return Err(Error::Model("attention pooling over an all-masked input".into()));
    }
    let scale = 1.0 / (rows.cols() as f64).sqrt();
    let (vector, cache) = pool_rows(&gather_rows(rows, &idx), query, scale);
    let mut weights = vec![0.0; mask.len()];
    for (&i, &a) in idx.iter().zip(&cache.alphas) {
        weights[i] = a;
    }
    Ok(PoolOutput { vector, weights })
}

// ---------------------------------------------------------------------------
// Layer norm, GELU, dropout

struct LnCache {
    xhat: Matrix,
    inv_std: Vec<f64>,
}

fn layer_norm(x: &Matrix, gain: &Matrix, bias: &Matrix) -> (Matrix, LnCache) {
    let (n, d) = x.shape();
    let mut y = Matrix::zeros(n, d);
    let mut xhat = Matrix::zeros(n, d);
    let mut inv_std = Vec::with_capacity(n);
    for i in 0..n {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(inv);
        let xh = xhat.row_mut(i);
        for j in 0..d {
            xh[j] = (row[j] - mean) * inv;
        }
        let yr = y.row_mut(i);
        for j in 0..d {
            yr[j] = gain.as_slice()[j] * xh[j] + bias.as_slice()[j];
        }
    }
    (y, LnCache { xhat, inv_std })
}

fn layer_norm_backward(
    dy: &Matrix,
    cache: &LnCache,
    gain: &Matrix,
    dgain: &mut Matrix,
    dbias: &mut Matrix,
) -> Matrix {
    let (n, d) = dy.shape();
    let mut dx = Matrix::zeros(n, d);
    let g = gain.as_slice();
    for i in 0..n {
        let dyr = dy.row(i);
        let xh = cache.xhat.row(i);
        let mut dxhat = vec![0.0; d];
        for j in 0..d {
            dgain.as_mut_slice()[j] += dyr[j] * xh[j];
            dbias.as_mut_slice()[j] += dyr[j];
            dxhat[j] = dyr[j] * g[j];
        }
        let mean_dxhat = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dxhat_xhat = dot(&dxhat, xh) / d as f64;
        let inv = cache.inv_std[i];
        let dxr = dx.row_mut(i);
        for j in 0..d {
            dxr[j] = inv * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Inverted dropout mask: entries are 0 or `1 / (1 - rate)`.
fn dropout_mask<R: Rng>(rng: &mut R, len: usize, rate: f64) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

fn apply_mask(m: &mut Matrix, mask: &Option<Vec<f64>>) {
    if let Some(mask) = mask {
        for (x, k) in m.as_mut_slice().iter_mut().zip(mask) {
            *x *= k;
        }
    }
}

struct Dropout<'a, R: Rng> {
    rng: &'a mut R,
    rate: f64,
}

impl<R: Rng> Dropout<'_, R> {
    fn mask(&mut self, len: usize) -> Option<Vec<f64>> {
        (self.rate > 0.0).then(|| dropout_mask(self.rng, len, self.rate))
    }
}

// ---------------------------------------------------------------------------
// Encoder layers

struct LayerCache {
    x: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    probs: Vec<Matrix>,
    o: Matrix,
    att_mask: Option<Vec<f64>>,
    ln1: LnCache,
    h1: Matrix,
    f1: Matrix,
    g: Matrix,
    ffn_mask: Option<Vec<f64>>,
    ln2: LnCache,
}

fn affine(x: &Matrix, w: &Matrix, b: &Matrix) -> Matrix {
    let mut y = x.matmul(w);
    y.add_row_broadcast(b);
    y
}

fn layer_forward<R: Rng>(
    p: &LayerParams,
    n_heads: usize,
    x: Matrix,
    dropout: &mut Option<Dropout<'_, R>>,
) -> (Matrix, LayerCache) {
    let (n, d) = x.shape();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = affine(&x, &p.wq, &p.bq);
    let k = affine(&x, &p.wk, &p.bk);
    let v = affine(&x, &p.wv, &p.bv);
    let mut o = Matrix::zeros(n, d);
    let mut probs = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let cols = h * dh..(h + 1) * dh;
        let mut pm = Matrix::zeros(n, n);
        for i in 0..n {
            let qi = &q.row(i)[cols.clone()];
            let row = pm.row_mut(i);
            for j in 0..n {
                row[j] = dot(qi, &k.row(j)[cols.clone()]) * scale;
            }
            softmax_in_place(row);
        }
        for i in 0..n {
            let mut acc = vec![0.0; dh];
            for j in 0..n {
                axpy(&mut acc, pm[(i, j)], &v.row(j)[cols.clone()]);
            }
            o.row_mut(i)[cols.clone()].copy_from_slice(&acc);
        }
        probs.push(pm);
    }
    let mut att = affine(&o, &p.wo, &p.bo);
    let att_mask = dropout.as_mut().and_then(|dr| dr.mask(att.len()));
    apply_mask(&mut att, &att_mask);
    let mut r1 = x.clone();
    r1.add_assign(&att);
    let (h1, ln1) = layer_norm(&r1, &p.ln1_gain, &p.ln1_bias);

    let f1 = affine(&h1, &p.w1, &p.b1);
    let mut g = f1.clone();
    g.as_mut_slice().iter_mut().for_each(|v| *v = gelu(*v));
    let mut f2 = affine(&g, &p.w2, &p.b2);
    let ffn_mask = dropout.as_mut().and_then(|dr| dr.mask(f2.len()));
    apply_mask(&mut f2, &ffn_mask);
    let mut r2 = h1.clone();
    r2.add_assign(&f2);
    let (out, ln2) = layer_norm(&r2, &p.ln2_gain, &p.ln2_bias);
    (
        out,
        LayerCache {
            x,
            q,
            k,
            v,
            probs,
            o,
            att_mask,
            ln1,
            h1,
            f1,
            g,
            ffn_mask,
            ln2,
        },
    )
}

/// `dW += xᵀ dy`, `db += Σ dy`, returns `dy Wᵀ`.
fn affine_backward(x: &Matrix, w: &Matrix, dy: &Matrix, dw: &mut Matrix, db: &mut Matrix) -> Matrix {
    dw.add_assign(&x.t_matmul(dy));
    dy.accumulate_col_sums(db);
    dy.matmul_t(w)
}

fn layer_backward(p: &LayerParams, n_heads: usize, c: &LayerCache, dout: &Matrix, gp: &mut LayerParams) -> Matrix {
    let (n, d) = c.x.shape();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let dr2 = layer_norm_backward(dout, &c.ln2, &p.ln2_gain, &mut gp.ln2_gain, &mut gp.ln2_bias);
    let mut dh1 = dr2.clone();
    let mut df2 = dr2;
    apply_mask(&mut df2, &c.ffn_mask);
    let mut dg = affine_backward(&c.g, &p.w2, &df2, &mut gp.w2, &mut gp.b2);
    for (dv, f) in dg.as_mut_slice().iter_mut().zip(c.f1.as_slice()) {
        *dv *= gelu_grad(*f);
    }
    dh1.add_assign(&affine_backward(&c.h1, &p.w1, &dg, &mut gp.w1, &mut gp.b1));

    let dr1 = layer_norm_backward(&dh1, &c.ln1, &p.ln1_gain, &mut gp.ln1_gain, &mut gp.ln1_bias);
    let mut dx = dr1.clone();
    let mut datt = dr1;
    apply_mask(&mut datt, &c.att_mask);
    let d_o = affine_backward(&c.o, &p.wo, &datt, &mut gp.wo, &mut gp.bo);

    let mut dq = Matrix::zeros(n, d);
    let mut dk = Matrix::zeros(n, d);
    let mut dv = Matrix::zeros(n, d);
    for h in 0..n_heads {
        let cols = h * dh..(h + 1) * dh;
        let pm = &c.probs[h];
        for i in 0..n {
            let doi = &d_o.row(i)[cols.clone()];
            let mut dp = vec![0.0; n];
            for j in 0..n {
                dp[j] = dot(doi, &c.v.row(j)[cols.clone()]);
                axpy(&mut dv.row_mut(j)[cols.clone()], pm[(i, j)], doi);
            }
            let mean: f64 = (0..n).map(|j| pm[(i, j)] * dp[j]).sum();
            for j in 0..n {
                let ds = pm[(i, j)] * (dp[j] - mean) * scale;
                if ds == 0.0 {
                    continue;
                }
                let kj = c.k.row(j)[cols.clone()].to_vec();
                axpy(&mut dq.row_mut(i)[cols.clone()], ds, &kj);
                let qi = c.q.row(i)[cols.clone()].to_vec();
                axpy(&mut dk.row_mut(j)[cols.clone()], ds, &qi);
            }
        }
    }
    dx.add_assign(&affine_backward(&c.x, &p.wq, &dq, &mut gp.wq, &mut gp.bq));
    dx.add_assign(&affine_backward(&c.x, &p.wk, &dk, &mut gp.wk, &mut gp.bk));
    dx.add_assign(&affine_backward(&c.x, &p.wv, &dv, &mut gp.wv, &mut gp.bv));
    dx
}

// ---------------------------------------------------------------------------
// Full model

struct EncodeCache {
    embed_mask: Option<Vec<f64>>,
    layers: Vec<LayerCache>,
}

fn check_sample(params: &EncoderParams, sample: &ModelSample) -> Result<()> {
    let n = sample.len();
    if n > params.config.max_positions {
        return Err(Error::Overlength {
            len: n,
            max: params.config.max_positions,
        });
    }
    if sample.roles.len() != n {
        return Err(Error::Model(format!("{} roles for {n} positions", sample.roles.len())));
    }
    if !sample.roles.contains(&PositionRole::Target) {
        return Err(Error::Model("sample has no target positions".into()));
    }
    match (&sample.input, params.config.input) {
        (ModelInput::Tokens(ids), InputKind::Tokens { vocab_size }) => {
            if let Some(bad) = ids.iter().find(|&&i| i >= vocab_size) {
                return Err(Error::Model(format!("token id {bad} outside vocabulary of {vocab_size}")));
            }
        }
        (ModelInput::Frames(f), InputKind::Frames { d_feat }) => {
            if f.cols() != d_feat {
                return Err(Error::Model(format!("frame width {} != d_feat {d_feat}", f.cols())));
            }
        }
        _ => return Err(Error::Modality("sample input does not match the model input kind".into())),
    }
    Ok(())
}

fn embed(params: &EncoderParams, input: &ModelInput) -> Matrix {
    let d = params.config.d_model;
    let mut x = match input {
        ModelInput::Tokens(ids) => {
            let mut x = Matrix::zeros(ids.len(), d);
            for (t, &id) in ids.iter().enumerate() {
                x.row_mut(t).copy_from_slice(params.input_proj.row(id));
            }
            x
        }
        ModelInput::Frames(f) => {
            let mut x = f.matmul(&params.input_proj);
            if let Some(b) = &params.input_bias {
                x.add_row_broadcast(b);
            }
            x
        }
    };
    for t in 0..x.rows() {
        let p = params.positions.row(t);
        for (a, b) in x.row_mut(t).iter_mut().zip(p) {
            *a += b;
        }
    }
    x
}

fn encode_impl<R: Rng>(
    params: &EncoderParams,
    sample: &ModelSample,
    mut dropout: Option<Dropout<'_, R>>,
) -> (Matrix, EncodeCache) {
    let mut x = embed(params, &sample.input);
    let embed_mask = dropout.as_mut().and_then(|dr| dr.mask(x.len()));
    apply_mask(&mut x, &embed_mask);
    let mut layers = Vec::with_capacity(params.layers.len());
    for lp in &params.layers {
        let (y, cache) = layer_forward(lp, params.config.n_heads, x, &mut dropout);
        layers.push(cache);
        x = y;
    }
    (x, EncodeCache { embed_mask, layers })
}

/// Runs the encoder over the full `context ++ target ++ context` sequence.
pub fn encode(params: &EncoderParams, sample: &ModelSample) -> Result<EmbeddingSequence> {
    check_sample(params, sample)?;
    let (rows, _) = encode_impl::<rand_chacha::ChaCha8Rng>(params, sample, None);
    Ok(EmbeddingSequence {
        rows,
        roles: sample.roles.clone(),
    })
}

struct ContextCache {
    idx: Vec<usize>,
    rows: Matrix,
    pool: PoolCache,
    pooled: Vec<f64>,
    out: Vec<f64>,
}

struct HeadCache {
    pool_idx: Vec<usize>,
    rows: Matrix,
    pool: PoolCache,
    pooled: Vec<f64>,
    /// `None` when the default context vector stood in.
    context: Option<ContextCache>,
}

fn positions_with(roles: &[PositionRole], role: PositionRole) -> Vec<usize> {
    (0..roles.len()).filter(|&i| roles[i] == role).collect()
}

fn context_forward(params: &EncoderParams, h: &Matrix, idx: Vec<usize>) -> ContextCache {
    let c = params.ccfte.as_ref().expect("context module present");
    let rows = gather_rows(h, &idx);
    let scale = 1.0 / (params.config.d_model as f64).sqrt();
    let (pooled, pool) = pool_rows(&rows, c.query.as_slice(), scale);
    let pm = Matrix::from_vec(1, pooled.len(), pooled.clone());
    let act = params.config.ctx_activation;
    let out: Vec<f64> = affine(&pm, &c.fc_w, &c.fc_b)
        .into_vec()
        .into_iter()
        .map(|z| act.apply(z))
        .collect();
    ContextCache {
        idx,
        rows,
        pool,
        pooled,
        out,
    }
}

fn head_forward(params: &EncoderParams, h: &Matrix, roles: &[PositionRole]) -> ([f64; N_CLASSES], HeadCache) {
    let cfg = &params.config;
    let d = cfg.d_model;
    let pool_idx = if cfg.mwce {
        positions_with(roles, PositionRole::Target)
    } else {
        (0..roles.len()).collect()
    };
    let (context, ctx_vec): (Option<ContextCache>, Option<Vec<f64>>) = match &params.ccfte {
        None => (None, None),
        Some(c) => {
            let idx = positions_with(roles, PositionRole::Context);
            if idx.is_empty() {
                (None, Some(c.default_ctx.as_slice().to_vec()))
            } else {
                let cc = context_forward(params, h, idx);
                let v = cc.out.clone();
                (Some(cc), Some(v))
            }
        }
    };
    let width = cfg.pooled_width();
    let mut rows = Matrix::zeros(pool_idx.len(), width);
    for (o, &t) in pool_idx.iter().enumerate() {
        let r = rows.row_mut(o);
        r[..d].copy_from_slice(h.row(t));
        if let Some(cv) = &ctx_vec {
            r[d..].copy_from_slice(cv);
        }
    }
    // Same 1/sqrt(d_model) scale as the unwidened path, so a zero context
    // vector leaves the scores unchanged.
    let scale = 1.0 / (d as f64).sqrt();
    let (pooled, pool) = pool_rows(&rows, params.pool_query.as_slice(), scale);
    let pm = Matrix::from_vec(1, width, pooled.clone());
    let z = affine(&pm, &params.cls_w, &params.cls_b);
    let logits: [f64; N_CLASSES] = z.as_slice().try_into().expect("four classes");
    (
        logits,
        HeadCache {
            pool_idx,
            rows,
            pool,
            pooled,
            context,
        },
    )
}

fn head_backward(
    params: &EncoderParams,
    n_positions: usize,
    c: &HeadCache,
    dlogits: &[f64; N_CLASSES],
    grads: &mut EncoderParams,
) -> Matrix {
    let cfg = &params.config;
    let d = cfg.d_model;
    let width = cfg.pooled_width();
    let pooled = Matrix::from_vec(1, width, c.pooled.clone());
    let dz = Matrix::from_vec(1, N_CLASSES, dlogits.to_vec());
    let dpooled = affine_backward(&pooled, &params.cls_w, &dz, &mut grads.cls_w, &mut grads.cls_b);
    let drows = pool_rows_backward(
        &c.rows,
        params.pool_query.as_slice(),
        &c.pool,
        dpooled.as_slice(),
        grads.pool_query.as_mut_slice(),
    );
    let mut dh = Matrix::zeros(n_positions, d);
    let mut dctx = vec![0.0; width - d];
    for (o, &t) in c.pool_idx.iter().enumerate() {
        let r = drows.row(o);
        axpy(dh.row_mut(t), 1.0, &r[..d]);
        axpy(&mut dctx, 1.0, &r[d..]);
    }
    if let (Some(cp), Some(gc)) = (&params.ccfte, grads.ccfte.as_mut()) {
        match &c.context {
            None => axpy(gc.default_ctx.as_mut_slice(), 1.0, &dctx),
            Some(cc) => {
                let act = cfg.ctx_activation;
                let dpre: Vec<f64> = dctx
                    .iter()
                    .zip(&cc.out)
                    .map(|(g, y)| g * act.grad_from_output(*y))
                    .collect();
                let pm = Matrix::from_vec(1, d, cc.pooled.clone());
                let dpre = Matrix::from_vec(1, dpre.len(), dpre);
                let dpool = affine_backward(&pm, &cp.fc_w, &dpre, &mut gc.fc_w, &mut gc.fc_b);
                let dctx_rows = pool_rows_backward(
                    &cc.rows,
                    cp.query.as_slice(),
                    &cc.pool,
                    dpool.as_slice(),
                    gc.query.as_mut_slice(),
                );
                for (o, &t) in cc.idx.iter().enumerate() {
                    axpy(dh.row_mut(t), 1.0, dctx_rows.row(o));
                }
            }
        }
    }
    dh
}

fn encoder_backward(params: &EncoderParams, sample: &ModelSample, cache: &EncodeCache, dh: Matrix, grads: &mut EncoderParams) {
    let mut dx = dh;
    for (l, lc) in cache.layers.iter().enumerate().rev() {
        dx = layer_backward(&params.layers[l], params.config.n_heads, lc, &dx, &mut grads.layers[l]);
    }
    apply_mask(&mut dx, &cache.embed_mask);
    for t in 0..dx.rows() {
        axpy(grads.positions.row_mut(t), 1.0, dx.row(t));
    }
    match &sample.input {
        ModelInput::Tokens(ids) => {
            for (t, &id) in ids.iter().enumerate() {
                axpy(grads.input_proj.row_mut(id), 1.0, dx.row(t));
            }
        }
        ModelInput::Frames(f) => {
            grads.input_proj.add_assign(&f.t_matmul(&dx));
            if let Some(b) = grads.input_bias.as_mut() {
                dx.accumulate_col_sums(b);
            }
        }
    }
}

/// Attention-pooled context vector over context positions only.
pub fn context_vector(params: &EncoderParams, embeddings: &EmbeddingSequence) -> Result<ContextVector> {
    if params.ccfte.is_none() {
        return Err(Error::Model("model has no context module".into()));
    }
    if embeddings.rows.cols() != params.config.d_model || embeddings.roles.len() != embeddings.rows.rows() {
        return Err(Error::Model("embedding shape does not match the model".into()));
    }
    let idx = positions_with(&embeddings.roles, PositionRole::Context);
    if idx.is_empty() {
        return Err(Error::Model("no context positions for the context vector".into()));
    }
    Ok(ContextVector(context_forward(params, &embeddings.rows, idx).out))
}

/// Classifier logits from post-encoder embeddings.
pub fn logits_from_embeddings(params: &EncoderParams, embeddings: &EmbeddingSequence) -> Result<[f64; N_CLASSES]> {
    if embeddings.rows.cols() != params.config.d_model || embeddings.roles.len() != embeddings.rows.rows() {
        return Err(Error::Model("embedding shape does not match the model".into()));
    }
    if !embeddings.roles.contains(&PositionRole::Target) {
        return Err(Error::Model("no target positions to pool".into()));
    }
    Ok(head_forward(params, &embeddings.rows, &embeddings.roles).0)
}

/// Inference-mode logits (no dropout).
pub fn forward(params: &EncoderParams, sample: &ModelSample) -> Result<[f64; N_CLASSES]> {
    let emb = encode(params, sample)?;
    logits_from_embeddings(params, &emb)
}

/// Mean cross-entropy over `batch` and its exact gradient, without dropout.
pub fn loss_and_grad<S: Borrow<ModelSample>>(params: &EncoderParams, batch: &[S]) -> Result<(f64, EncoderParams)> {
    loss_and_grad_impl::<S, rand_chacha::ChaCha8Rng>(params, batch, None)
}

/// Training-mode variant: dropout masks are drawn from `rng` in sample order.
pub fn loss_and_grad_with_dropout<S: Borrow<ModelSample>, R: Rng>(
    params: &EncoderParams,
    batch: &[S],
    rng: &mut R,
) -> Result<(f64, EncoderParams)> {
    loss_and_grad_impl(params, batch, Some(rng))
}

fn loss_and_grad_impl<S: Borrow<ModelSample>, R: Rng>(
    params: &EncoderParams,
    batch: &[S],
    mut rng: Option<&mut R>,
) -> Result<(f64, EncoderParams)> {
    if batch.is_empty() {
        return Err(Error::Model("empty batch".into()));
    }
    let mut grads = params.zeros_like();
    let mut total = 0.0;
    let inv_b = 1.0 / batch.len() as f64;
    let rate = params.config.dropout_rate;
    for sample in batch {
        let sample = sample.borrow();
        check_sample(params, sample)?;
        let dropout = match rng.as_deref_mut() {
            Some(r) if rate > 0.0 => Some(Dropout { rng: r, rate }),
            _ => None,
        };
        let (h, enc_cache) = encode_impl(params, sample, dropout);
        let (logits, head_cache) = head_forward(params, &h, &sample.roles);
        let probs = softmax(&logits);
        let y = sample.label.code();
        let loss = -probs[y].ln();
        total += loss;
        let mut dlogits = [0.0; N_CLASSES];
        for k in 0..N_CLASSES {
            dlogits[k] = (probs[k] - if k == y { 1.0 } else { 0.0 }) * inv_b;
        }
        let dh = head_backward(params, h.rows(), &head_cache, &dlogits, &mut grads);
        encoder_backward(params, sample, &enc_cache, dh, &mut grads);
    }
    let loss = total * inv_b;
    if !loss.is_finite() {
        // Epoch and batch are filled in by the training loop.
        return Err(Error::Divergence { epoch: 0, batch: 0, loss });
    }
    Ok((loss, grads))
}
