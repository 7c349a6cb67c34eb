//! A small transformer encoder with manual reverse-mode differentiation.
//!
//! Everything is f64 and single-sequence; batching happens by accumulating
//! gradients across examples before an optimizer step. Forward passes take
//! `&self` and return explicit cache values, so inference is shareable
//! across threads while training drives the same code with caches kept.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A trainable array with its gradient and Adam moment buffers.
#[derive(Debug, Clone)]
pub struct Tensor {
    pub v: Array2<f64>,
    pub g: Array2<f64>,
    m: Array2<f64>,
    s: Array2<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            v: Array2::zeros((rows, cols)),
            g: Array2::zeros((rows, cols)),
            m: Array2::zeros((rows, cols)),
            s: Array2::zeros((rows, cols)),
        }
    }

    pub fn randn(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut t = Tensor::zeros(rows, cols);
        for x in t.v.iter_mut() {
            *x = std * standard_normal(rng);
        }
        t
    }

    pub fn zero_grad(&mut self) {
        self.g.fill(0.0);
    }
}

/// Box-Muller draw, deterministic under the caller's rng.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Adam with bias correction; moment state lives inside each Tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    steps: u64,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam { learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8, steps: 0 }
    }

    /// Advances the step counter once per optimizer step, before visiting
    /// the tensors belonging to that step.
    pub fn begin_step(&mut self) {
        self.steps += 1;
    }

    pub fn update(&self, t: &mut Tensor) {
        debug_assert!(self.steps > 0);
        let b1t = 1.0 - self.beta1.powi(self.steps as i32);
        let b2t = 1.0 - self.beta2.powi(self.steps as i32);
        for ((w, g), (m, s)) in t
            .v
            .iter_mut()
            .zip(t.g.iter())
            .zip(t.m.iter_mut().zip(t.s.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *s = self.beta2 * *s + (1.0 - self.beta2) * g * g;
            let m_hat = *m / b1t;
            let s_hat = *s / b2t;
            *w -= self.learning_rate * m_hat / (s_hat.sqrt() + self.eps);
        }
    }
}

pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    pub fn new(d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Self {
        Linear { w: Tensor::randn(d_out, d_in, 0.02, rng), b: Tensor::zeros(1, d_out) }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w.v.t()) + &self.b.v.row(0)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    /// `x` must be the forward input.
    pub fn backward(&mut self, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        self.w.g += &dy.t().dot(x);
        self.b.g += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        dy.dot(&self.w.v)
    }

    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(format!("{prefix}.w"), &mut self.w);
        f(format!("{prefix}.b"), &mut self.b);
    }
}

pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub eps: f64,
}

pub struct LayerNormCache {
    x_hat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        let mut gamma = Tensor::zeros(1, dim);
        gamma.v.fill(1.0);
        LayerNorm { gamma, beta: Tensor::zeros(1, dim), eps: 1e-5 }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LayerNormCache) {
        let d = x.ncols() as f64;
        let mean = x.mean_axis(Axis(1)).unwrap();
        let mut x_hat = x.clone();
        for (mut row, &mu) in x_hat.rows_mut().into_iter().zip(mean.iter()) {
            row -= mu;
        }
        let var = x_hat.mapv(|v| v * v).sum_axis(Axis(1)) / d;
        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        for (mut row, &is) in x_hat.rows_mut().into_iter().zip(inv_std.iter()) {
            row *= is;
        }
        let y = &x_hat * &self.gamma.v.row(0) + &self.beta.v.row(0);
        (y, LayerNormCache { x_hat, inv_std })
    }

    pub fn backward(&mut self, cache: &LayerNormCache, dy: &Array2<f64>) -> Array2<f64> {
        let d = dy.ncols() as f64;
        self.gamma.g += &(dy * &cache.x_hat).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.beta.g += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));

        let dx_hat = dy * &self.gamma.v.row(0);
        let mut dx = Array2::zeros(dy.raw_dim());
        for i in 0..dy.nrows() {
            let xh = cache.x_hat.row(i);
            let dxh = dx_hat.row(i);
            let sum_dxh = dxh.sum();
            let sum_dxh_xh = dxh.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>();
            let is = cache.inv_std[i];
            for j in 0..dy.ncols() {
                dx[[i, j]] = is / d * (d * dxh[j] - sum_dxh - xh[j] * sum_dxh_xh);
            }
        }
        dx
    }

    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(format!("{prefix}.gamma"), &mut self.gamma);
        f(format!("{prefix}.beta"), &mut self.beta);
    }
}

fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let u = c * (x + 0.044715 * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn gelu_prime(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let u = c * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * 0.044715 * x * x)
}

fn softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let mut p = z.clone();
    for mut row in p.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    p
}

/// Gradient through a row-wise softmax, given the probabilities.
fn softmax_rows_backward(p: &Array2<f64>, dp: &Array2<f64>) -> Array2<f64> {
    let mut dz = Array2::zeros(p.raw_dim());
    for i in 0..p.nrows() {
        let dot = p.row(i).iter().zip(dp.row(i).iter()).map(|(a, b)| a * b).sum::<f64>();
        for j in 0..p.ncols() {
            dz[[i, j]] = p[[i, j]] * (dp[[i, j]] - dot);
        }
    }
    dz
}

pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub n_heads: usize,
    pub causal: bool,
}

pub struct AttentionCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
}

impl MultiHeadAttention {
    pub fn new(d_model: usize, n_heads: usize, causal: bool, rng: &mut ChaCha8Rng) -> Self {
        assert!(d_model % n_heads == 0);
        MultiHeadAttention {
            wq: Linear::new(d_model, d_model, rng),
            wk: Linear::new(d_model, d_model, rng),
            wv: Linear::new(d_model, d_model, rng),
            wo: Linear::new(d_model, d_model, rng),
            n_heads,
            causal,
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, AttentionCache) {
        let (s, d) = (x.nrows(), x.ncols());
        let dh = d / self.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let q = self.wq.forward(x);
        let k = self.wk.forward(x);
        let v = self.wv.forward(x);

        let mut ctx = Array2::zeros((s, d));
        let mut probs = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let cols = h * dh..(h + 1) * dh;
            let qh = q.slice(ndarray::s![.., cols.clone()]);
            let kh = k.slice(ndarray::s![.., cols.clone()]);
            let vh = v.slice(ndarray::s![.., cols.clone()]);
            let mut scores = qh.dot(&kh.t()) * scale;
            if self.causal {
                for i in 0..s {
                    for j in (i + 1)..s {
                        scores[[i, j]] = f64::NEG_INFINITY;
                    }
                }
            }
            let p = softmax_rows(&scores);
            let ctx_h = p.dot(&vh);
            ctx.slice_mut(ndarray::s![.., cols]).assign(&ctx_h);
            probs.push(p);
        }
        let out = self.wo.forward(&ctx);
        (out, AttentionCache { x: x.clone(), q, k, v, probs, ctx })
    }

    pub fn backward(&mut self, cache: &AttentionCache, dy: &Array2<f64>) -> Array2<f64> {
        let (s, d) = (cache.x.nrows(), cache.x.ncols());
        let dh = d / self.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let dctx = self.wo.backward(&cache.ctx, dy);
        let mut dq = Array2::zeros((s, d));
        let mut dk = Array2::zeros((s, d));
        let mut dv = Array2::zeros((s, d));
        for h in 0..self.n_heads {
            let cols = h * dh..(h + 1) * dh;
            let qh = cache.q.slice(ndarray::s![.., cols.clone()]);
            let kh = cache.k.slice(ndarray::s![.., cols.clone()]);
            let vh = cache.v.slice(ndarray::s![.., cols.clone()]);
            let dctx_h = dctx.slice(ndarray::s![.., cols.clone()]);
            let p = &cache.probs[h];

            let dp = dctx_h.dot(&vh.t());
            let dvh = p.t().dot(&dctx_h);
            let dscores = softmax_rows_backward(p, &dp);
            let dqh = dscores.dot(&kh) * scale;
            let dkh = dscores.t().dot(&qh) * scale;

            dq.slice_mut(ndarray::s![.., cols.clone()]).assign(&dqh);
            dk.slice_mut(ndarray::s![.., cols.clone()]).assign(&dkh);
            dv.slice_mut(ndarray::s![.., cols]).assign(&dvh);
        }
        let dx_q = self.wq.backward(&cache.x, &dq);
        let dx_k = self.wk.backward(&cache.x, &dk);
        let dx_v = self.wv.backward(&cache.x, &dv);
        dx_q + dx_k + dx_v
    }

    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.wq.visit(&format!("{prefix}.wq"), f);
        self.wk.visit(&format!("{prefix}.wk"), f);
        self.wv.visit(&format!("{prefix}.wv"), f);
        self.wo.visit(&format!("{prefix}.wo"), f);
    }
}

pub struct FeedForward {
    pub lin1: Linear,
    pub lin2: Linear,
}

pub struct FeedForwardCache {
    x: Array2<f64>,
    pre_act: Array2<f64>,
    act: Array2<f64>,
}

impl FeedForward {
    pub fn new(d_model: usize, d_ff: usize, rng: &mut ChaCha8Rng) -> Self {
        FeedForward { lin1: Linear::new(d_model, d_ff, rng), lin2: Linear::new(d_ff, d_model, rng) }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, FeedForwardCache) {
        let pre_act = self.lin1.forward(x);
        let act = pre_act.mapv(gelu);
        let y = self.lin2.forward(&act);
        (y, FeedForwardCache { x: x.clone(), pre_act, act })
    }

    pub fn backward(&mut self, cache: &FeedForwardCache, dy: &Array2<f64>) -> Array2<f64> {
        let dact = self.lin2.backward(&cache.act, dy);
        let dpre = &dact * &cache.pre_act.mapv(gelu_prime);
        self.lin1.backward(&cache.x, &dpre)
    }

    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.lin1.visit(&format!("{prefix}.lin1"), f);
        self.lin2.visit(&format!("{prefix}.lin2"), f);
    }
}

pub struct Block {
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub ff: FeedForward,
}

pub struct BlockCache {
    ln1: LayerNormCache,
    attn: AttentionCache,
    ln2: LayerNormCache,
    ff: FeedForwardCache,
}

impl Block {
    pub fn new(d_model: usize, n_heads: usize, d_ff: usize, causal: bool, rng: &mut ChaCha8Rng) -> Self {
        Block {
            ln1: LayerNorm::new(d_model),
            attn: MultiHeadAttention::new(d_model, n_heads, causal, rng),
            ln2: LayerNorm::new(d_model),
            ff: FeedForward::new(d_model, d_ff, rng),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, BlockCache) {
        let (n1, ln1) = self.ln1.forward(x);
        let (att, attn) = self.attn.forward(&n1);
        let a = x + &att;
        let (n2, ln2) = self.ln2.forward(&a);
        let (ffo, ff) = self.ff.forward(&n2);
        let y = &a + &ffo;
        (y, BlockCache { ln1, attn, ln2, ff })
    }

    pub fn backward(&mut self, cache: &BlockCache, dy: &Array2<f64>) -> Array2<f64> {
        let dffo = dy;
        let dn2 = self.ff.backward(&cache.ff, dffo);
        let da = dy + &self.ln2.backward(&cache.ln2, &dn2);
        let dn1 = self.attn.backward(&cache.attn, &da);
        let dx_ln = self.ln1.backward(&cache.ln1, &dn1);
        &da + &dx_ln
    }

    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.ln1.visit(&format!("{prefix}.ln1"), f);
        self.attn.visit(&format!("{prefix}.attn"), f);
        self.ln2.visit(&format!("{prefix}.ln2"), f);
        self.ff.visit(&format!("{prefix}.ff"), f);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub causal: bool,
}

/// Token embeddings, learned positions, pre-norm blocks, and a final
/// normalization. The output vocabulary head reuses the token embedding
/// matrix, plus a separate bias.
pub struct Encoder {
    pub cfg: EncoderConfig,
    pub tok_emb: Tensor,
    pub pos_emb: Tensor,
    pub blocks: Vec<Block>,
    pub ln_f: LayerNorm,
    pub out_bias: Tensor,
}

pub struct EncoderCache {
    ids: Vec<usize>,
    block_caches: Vec<BlockCache>,
    ln_f: LayerNormCache,
    pub hidden: Array2<f64>,
}

impl Encoder {
    pub fn new(cfg: EncoderConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tok_emb = Tensor::randn(cfg.vocab_size, cfg.d_model, 0.02, &mut rng);
        let pos_emb = Tensor::randn(cfg.max_len, cfg.d_model, 0.01, &mut rng);
        let blocks = (0..cfg.n_layers)
            .map(|_| Block::new(cfg.d_model, cfg.n_heads, cfg.d_ff, cfg.causal, &mut rng))
            .collect();
        Encoder {
            cfg,
            tok_emb,
            pos_emb,
            blocks,
            ln_f: LayerNorm::new(cfg.d_model),
            out_bias: Tensor::zeros(1, cfg.vocab_size),
        }
    }

    pub fn check_len(&self, len: usize) -> Result<()> {
        if len == 0 {
            return Err(Error::EmptyInput);
        }
        if len > self.cfg.max_len {
            return Err(Error::TooLong { len, max: self.cfg.max_len });
        }
        Ok(())
    }

    /// Final hidden states for a token id sequence.
    pub fn forward(&self, ids: &[usize]) -> Result<(Array2<f64>, EncoderCache)> {
        self.check_len(ids.len())?;
        let d = self.cfg.d_model;
        let mut x = Array2::zeros((ids.len(), d));
        for (i, &id) in ids.iter().enumerate() {
            debug_assert!(id < self.cfg.vocab_size);
            let row = &self.tok_emb.v.row(id) + &self.pos_emb.v.row(i);
            x.row_mut(i).assign(&row);
        }
        let mut block_caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, cache) = block.forward(&x);
            block_caches.push(cache);
            x = y;
        }
        let (hidden, ln_f) = self.ln_f.forward(&x);
        let cache =
            EncoderCache { ids: ids.to_vec(), block_caches, ln_f, hidden: hidden.clone() };
        Ok((hidden, cache))
    }

    /// Vocabulary logits from hidden states, through the tied embedding.
    pub fn logits(&self, hidden: &Array2<f64>) -> Array2<f64> {
        hidden.dot(&self.tok_emb.v.t()) + &self.out_bias.v.row(0)
    }

    /// Backward through the tied output head, returning the hidden-state
    /// gradient.
    pub fn logits_backward(&mut self, hidden: &Array2<f64>, dlogits: &Array2<f64>) -> Array2<f64> {
        self.tok_emb.g += &dlogits.t().dot(hidden);
        self.out_bias.g += &dlogits.sum_axis(Axis(0)).insert_axis(Axis(0));
        dlogits.dot(&self.tok_emb.v)
    }

    /// Backward from a hidden-state gradient down to the embeddings.
    pub fn backward(&mut self, cache: &EncoderCache, dhidden: &Array2<f64>) {
        let mut dx = self.ln_f.backward(&cache.ln_f, dhidden);
        for (block, bc) in self.blocks.iter_mut().zip(cache.block_caches.iter()).rev() {
            dx = block.backward(bc, &dx);
        }
        for (i, &id) in cache.ids.iter().enumerate() {
            let drow = dx.row(i);
            let mut emb_row = self.tok_emb.g.row_mut(id);
            emb_row += &drow;
            let mut pos_row = self.pos_emb.g.row_mut(i);
            pos_row += &drow;
        }
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(String, &mut Tensor)) {
        f("tok_emb".to_string(), &mut self.tok_emb);
        f("pos_emb".to_string(), &mut self.pos_emb);
        for (i, block) in self.blocks.iter_mut().enumerate() {
            block.visit(&format!("blocks.{i}"), f);
        }
        self.ln_f.visit("ln_f", f);
        f("out_bias".to_string(), &mut self.out_bias);
    }

    pub fn zero_grads(&mut self) {
        self.visit_params(&mut |_, t| t.zero_grad());
    }

    pub fn adam_step(&mut self, adam: &Adam) {
        self.visit_params(&mut |_, t| adam.update(t));
    }

    pub fn state_dict(&mut self) -> BTreeMap<String, TensorData> {
        let mut out = BTreeMap::new();
        self.visit_params(&mut |name, t| {
            out.insert(
                name,
                TensorData {
                    shape: vec![t.v.nrows(), t.v.ncols()],
                    data: t.v.iter().cloned().collect(),
                },
            );
        });
        out
    }

    pub fn load_state_dict(&mut self, state: &BTreeMap<String, TensorData>) -> Result<()> {
        let mut missing = Vec::new();
        let mut result = Ok(());
        self.visit_params(&mut |name, t| {
            match state.get(&name) {
                None => missing.push(name),
                Some(td) => {
                    if td.shape != [t.v.nrows(), t.v.ncols()]
                        || td.data.len() != t.v.len()
                    {
                        result = Err(Error::Checkpoint(format!(
                            "shape mismatch for parameter {name}"
                        )));
                        return;
                    }
                    for (dst, src) in t.v.iter_mut().zip(td.data.iter()) {
                        *dst = *src;
                    }
                }
            }
        });
        result?;
        if !missing.is_empty() {
            return Err(Error::Checkpoint(format!(
                "checkpoint missing parameters: {}",
                missing.join(", ")
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorData {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Mean cross-entropy over `(position, target id)` pairs, with the matching
/// logit gradient. Positions must be in range and non-empty.
pub fn cross_entropy_at(
    logits: &Array2<f64>,
    targets: &[(usize, usize)],
) -> Result<(f64, Array2<f64>)> {
    if targets.is_empty() {
        return Err(Error::EmptyInput);
    }
    let probs = softmax_rows(logits);
    let mut dlogits = Array2::zeros(logits.raw_dim());
    let inv_n = 1.0 / targets.len() as f64;
    let mut loss = 0.0;
    for &(pos, target) in targets {
        if pos >= logits.nrows() || target >= logits.ncols() {
            return Err(Error::Domain(format!(
                "cross-entropy target ({pos}, {target}) out of range"
            )));
        }
        let p = probs[[pos, target]].max(1e-300);
        loss -= p.ln();
        for j in 0..logits.ncols() {
            dlogits[[pos, j]] += probs[[pos, j]] * inv_n;
        }
        dlogits[[pos, target]] -= inv_n;
    }
    Ok((loss * inv_n, dlogits))
}

/// Row-wise softmax exposed for model heads.
pub fn softmax(z: &Array2<f64>) -> Array2<f64> {
    softmax_rows(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(causal: bool) -> EncoderConfig {
        EncoderConfig {
            vocab_size: 11,
            d_model: 8,
            n_heads: 2,
            n_layers: 2,
            d_ff: 16,
            max_len: 9,
            causal,
        }
    }

    fn loss_of(enc: &Encoder, ids: &[usize], targets: &[(usize, usize)]) -> f64 {
        let (hidden, _) = enc.forward(ids).unwrap();
        let logits = enc.logits(&hidden);
        cross_entropy_at(&logits, targets).unwrap().0
    }

    #[test]
    fn gradients_match_finite_differences() {
        for causal in [false, true] {
            let mut enc = Encoder::new(tiny_config(causal), 3);
            let ids = vec![4, 9, 2, 7, 5];
            let targets = vec![(1usize, 3usize), (3, 8)];

            enc.zero_grads();
            let (hidden, cache) = enc.forward(&ids).unwrap();
            let logits = enc.logits(&hidden);
            let (_, dlogits) = cross_entropy_at(&logits, &targets).unwrap();
            let dhidden = enc.logits_backward(&hidden, &dlogits);
            enc.backward(&cache, &dhidden);

            let mut analytic = Vec::new();
            enc.visit_params(&mut |name, t| {
                for (idx, g) in t.g.iter().enumerate() {
                    analytic.push((name.clone(), idx, *g));
                }
            });

            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let mut checked = 0;
            let h = 1e-5;
            while checked < 25 {
                let pick = rng.random_range(0..analytic.len());
                let (name, idx, g) = analytic[pick].clone();
                if g.abs() < 1e-6 {
                    continue;
                }
                let bump = |delta: f64, enc: &mut Encoder| {
                    enc.visit_params(&mut |n, t| {
                        if n == name {
                            let flat = t.v.as_slice_mut().unwrap();
                            flat[idx] += delta;
                        }
                    });
                };
                bump(h, &mut enc);
                let up = loss_of(&enc, &ids, &targets);
                bump(-2.0 * h, &mut enc);
                let down = loss_of(&enc, &ids, &targets);
                bump(h, &mut enc);
                let numeric = (up - down) / (2.0 * h);
                let abs = (numeric - g).abs();
                let rel = abs / g.abs().max(numeric.abs());
                assert!(
                    rel < 1e-4 || abs < 1e-10,
                    "param {name}[{idx}]: analytic {g}, numeric {numeric}, rel {rel}"
                );
                checked += 1;
            }
        }
    }

    #[test]
    fn causal_positions_ignore_the_future() {
        let enc = Encoder::new(tiny_config(true), 5);
        let a = vec![1, 2, 3, 4, 5];
        let b = vec![1, 2, 3, 9, 10];
        let (ha, _) = enc.forward(&a).unwrap();
        let (hb, _) = enc.forward(&b).unwrap();
        for j in 0..enc.cfg.d_model {
            for i in 0..3 {
                assert!((ha[[i, j]] - hb[[i, j]]).abs() < 1e-12);
            }
            assert!((ha[[3, j]] - hb[[3, j]]).abs() > 0.0 || ha[[3, j]] == hb[[3, j]]);
        }
        let diff: f64 = (0..enc.cfg.d_model).map(|j| (ha[[4, j]] - hb[[4, j]]).abs()).sum();
        assert!(diff > 1e-9);
    }

    #[test]
    fn bidirectional_positions_see_the_future() {
        let enc = Encoder::new(tiny_config(false), 5);
        let (ha, _) = enc.forward(&[1, 2, 3, 4, 5]).unwrap();
        let (hb, _) = enc.forward(&[1, 2, 3, 9, 10]).unwrap();
        let diff: f64 = (0..enc.cfg.d_model).map(|j| (ha[[0, j]] - hb[[0, j]]).abs()).sum();
        assert!(diff > 1e-9);
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let ln = LayerNorm::new(6);
        let x = Array2::from_shape_fn((3, 6), |(i, j)| (i * 7 + j * 3) as f64 * 0.37 - 2.0);
        let (y, _) = ln.forward(&x);
        for row in y.rows() {
            let mean = row.mean().unwrap();
            let var = row.mapv(|v| (v - mean) * (v - mean)).mean().unwrap();
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut t = Tensor::zeros(1, 3);
        t.v[[0, 0]] = 5.0;
        t.v[[0, 1]] = -4.0;
        t.v[[0, 2]] = 2.5;
        let mut adam = Adam::new(0.1);
        for _ in 0..500 {
            t.zero_grad();
            t.g.assign(&(2.0 * &t.v));
            adam.begin_step();
            adam.update(&mut t);
        }
        for w in t.v.iter() {
            assert!(w.abs() < 1e-2);
        }
    }

    #[test]
    fn training_reduces_loss_and_checkpoints_round_trip() {
        let mut enc = Encoder::new(tiny_config(false), 11);
        let ids = vec![3, 8, 1, 6];
        let targets = vec![(0usize, 9usize), (2, 4)];
        let before = loss_of(&enc, &ids, &targets);
        let mut adam = Adam::new(1e-2);
        for _ in 0..60 {
            enc.zero_grads();
            let (hidden, cache) = enc.forward(&ids).unwrap();
            let logits = enc.logits(&hidden);
            let (_, dlogits) = cross_entropy_at(&logits, &targets).unwrap();
            let dhidden = enc.logits_backward(&hidden, &dlogits);
            enc.backward(&cache, &dhidden);
            adam.begin_step();
            enc.adam_step(&adam);
        }
        let after = loss_of(&enc, &ids, &targets);
        assert!(after < before * 0.5, "loss {before} -> {after}");

        let state = enc.state_dict();
        let mut fresh = Encoder::new(tiny_config(false), 999);
        fresh.load_state_dict(&state).unwrap();
        let (ha, _) = enc.forward(&ids).unwrap();
        let (hb, _) = fresh.forward(&ids).unwrap();
        assert_eq!(ha, hb);

        let mut wrong = Encoder::new(tiny_config(true), 1);
        wrong.cfg.vocab_size = 12;
        let mut bigger = Encoder::new(
            EncoderConfig { vocab_size: 12, ..tiny_config(false) },
            1,
        );
        assert!(bigger.load_state_dict(&state).is_err());
    }

    #[test]
    fn sequence_length_budget_is_enforced() {
        let enc = Encoder::new(tiny_config(false), 2);
        assert!(matches!(enc.forward(&[]), Err(Error::EmptyInput)));
        let too_long = vec![1usize; 10];
        assert!(matches!(enc.forward(&too_long), Err(Error::TooLong { len: 10, max: 9 })));
        assert!(enc.forward(&vec![1usize; 9]).is_ok());
    }

    #[test]
    fn same_seed_builds_identical_encoders() {
        let a = Encoder::new(tiny_config(false), 42);
        let b = Encoder::new(tiny_config(false), 42);
        let (ha, _) = a.forward(&[1, 2, 3]).unwrap();
        let (hb, _) = b.forward(&[1, 2, 3]).unwrap();
        assert_eq!(ha, hb);
    }
}
