//! Forward pass, hand-derived backward pass, and the two training losses.
//!
//! Only the unpadded prefix of a sequence is computed: padding sits after
//! `[SEP]` and is excluded from attention, so it cannot affect any unpadded
//! output. Hidden states therefore have one row per active position.

use rand::Rng as _;

use super::attention::attend;
use super::{EncoderConfig, EncoderParams, FineTuneScope, Mode};
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tokenizer::TokenSequence;
use crate::{axpy, dot, log_sum_exp, softmax_in_place, Scalar, Tensor};

const LN_EPS: f64 = 1e-12;

/// Hidden states of every layer (`[n_active × hidden]` each) and the pooled
/// `[CLS]` vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<T> {
    pub hidden: Vec<Tensor<T>>,
    pub pooled: Vec<T>,
}

struct NormCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
}

struct LayerCache<T> {
    input: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    probs: Vec<Vec<T>>,
    ctx: Vec<T>,
    attn_drop: Option<Vec<T>>,
    ln1: NormCache<T>,
    h1: Vec<T>,
    ffn_pre: Vec<T>,
    ffn_act: Vec<T>,
    ffn_drop: Option<Vec<T>>,
    ln2: NormCache<T>,
    out: Vec<T>,
}

struct Cache<T> {
    n: usize,
    ids: Vec<u32>,
    emb_drop: Option<Vec<T>>,
    layers: Vec<LayerCache<T>>,
    pooled: Vec<T>,
}

impl<T> Cache<T> {
    fn last_hidden(&self) -> &[T] {
        &self.layers.last().expect("at least one layer").out
    }
}

/// `Y = X Wᵀ + b` for `x: [n × in]`, `w: [out × in]`.
fn linear<T: Scalar>(x: &[T], w: &Tensor<T>, b: &Tensor<T>) -> Vec<T> {
    let (out_dim, in_dim) = (w.rows(), w.cols());
    let n = x.len() / in_dim;
    let mut y = vec![T::zero(); n * out_dim];
    for i in 0..n {
        let xi = &x[i * in_dim..(i + 1) * in_dim];
        let yi = &mut y[i * out_dim..(i + 1) * out_dim];
        for (o, yo) in yi.iter_mut().enumerate() {
            *yo = dot(xi, w.row(o)) + b.data()[o];
        }
    }
    y
}

/// Backward of [`linear`]; accumulates into `dw`, `db` and optionally `dx`.
fn linear_backward<T: Scalar>(
    dy: &[T],
    x: &[T],
    w: &Tensor<T>,
    dw: &mut Tensor<T>,
    db: &mut Tensor<T>,
    dx: Option<&mut [T]>,
) {
    let (out_dim, in_dim) = (w.rows(), w.cols());
    let n = x.len() / in_dim;
    for i in 0..n {
        let xi = &x[i * in_dim..(i + 1) * in_dim];
        let dyi = &dy[i * out_dim..(i + 1) * out_dim];
        for (o, &g) in dyi.iter().enumerate() {
            if g != T::zero() {
                axpy(g, xi, dw.row_mut(o));
                db.data_mut()[o] += g;
            }
        }
    }
    if let Some(dx) = dx {
        for i in 0..n {
            let dyi = &dy[i * out_dim..(i + 1) * out_dim];
            let dxi = &mut dx[i * in_dim..(i + 1) * in_dim];
            for (o, &g) in dyi.iter().enumerate() {
                if g != T::zero() {
                    axpy(g, w.row(o), dxi);
                }
            }
        }
    }
}

fn layer_norm<T: Scalar>(x: &[T], gain: &Tensor<T>, shift: &Tensor<T>) -> (Vec<T>, NormCache<T>) {
    let h = gain.len();
    let n = x.len() / h;
    let hf = T::from_usize(h).unwrap();
    let eps = T::lit(LN_EPS);
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut inv_std = vec![T::zero(); n];
    for i in 0..n {
        let row = &x[i * h..(i + 1) * h];
        let mean = row.iter().copied().sum::<T>() / hf;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / hf;
        let is = T::one() / (var + eps).sqrt();
        inv_std[i] = is;
        for j in 0..h {
            let xh = (row[j] - mean) * is;
            xhat[i * h + j] = xh;
            y[i * h + j] = xh * gain.data()[j] + shift.data()[j];
        }
    }
    (y, NormCache { xhat, inv_std })
}

fn layer_norm_backward<T: Scalar>(
    dy: &[T],
    cache: &NormCache<T>,
    gain: &Tensor<T>,
    dgain: &mut Tensor<T>,
    dshift: &mut Tensor<T>,
) -> Vec<T> {
    let h = gain.len();
    let n = dy.len() / h;
    let hf = T::from_usize(h).unwrap();
    let mut dx = vec![T::zero(); dy.len()];
    let mut dxhat = vec![T::zero(); h];
    for i in 0..n {
        let dyi = &dy[i * h..(i + 1) * h];
        let xh = &cache.xhat[i * h..(i + 1) * h];
        for j in 0..h {
            dgain.data_mut()[j] += dyi[j] * xh[j];
            dshift.data_mut()[j] += dyi[j];
            dxhat[j] = dyi[j] * gain.data()[j];
        }
        let mean_d = dxhat.iter().copied().sum::<T>() / hf;
        let mean_dx = dxhat.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>() / hf;
        let is = cache.inv_std[i];
        for j in 0..h {
            dx[i * h + j] = is * (dxhat[j] - mean_d - xh[j] * mean_dx);
        }
    }
    dx
}

// tanh approximation of GELU
fn gelu<T: Scalar>(x: T) -> T {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let a = T::lit(0.044715);
    T::lit(0.5) * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let a = T::lit(0.044715);
    let half = T::lit(0.5);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::lit(3.0) * a * x * x)
}

fn dropout_mask<T: Scalar>(len: usize, rate: f64, mode: Mode, rng: &mut Rng) -> Option<Vec<T>> {
    if mode != Mode::Train || rate == 0.0 {
        return None;
    }
    let keep = T::one() / T::lit(1.0 - rate);
    Some(
        (0..len)
            .map(|_| if rng.gen_bool(rate) { T::zero() } else { keep })
            .collect(),
    )
}

fn apply_mask<T: Scalar>(x: &mut [T], mask: &Option<Vec<T>>) {
    if let Some(m) = mask {
        for (v, &k) in x.iter_mut().zip(m) {
            *v *= k;
        }
    }
}

fn run<T: Scalar>(
    params: &EncoderParams<T>,
    cfg: &EncoderConfig,
    seq: &TokenSequence,
    mode: Mode,
    rng: &mut Rng,
) -> Result<Cache<T>> {
    let h = cfg.hidden_dim;
    let n = seq.active_len();
    if n == 0 || n > cfg.max_seq_len {
        return Err(Error::data(format!(
            "sequence of {n} active positions does not fit max_seq_len {}",
            cfg.max_seq_len
        )));
    }
    let ids = seq.ids[..n].to_vec();
    if let Some(&bad) = ids.iter().find(|&&t| t as usize >= cfg.vocab_size) {
        return Err(Error::data(format!("token id {bad} >= vocab_size {}", cfg.vocab_size)));
    }

    let mut x = vec![T::zero(); n * h];
    for (i, &id) in ids.iter().enumerate() {
        let row = &mut x[i * h..(i + 1) * h];
        row.copy_from_slice(params.token_embeddings.row(id as usize));
        axpy(T::one(), params.position_embeddings.row(i), row);
    }
    let emb_drop = dropout_mask(n * h, cfg.dropout_rate, mode, rng);
    apply_mask(&mut x, &emb_drop);

    let dh = cfg.head_dim();
    let mut layers = Vec::with_capacity(cfg.n_layers);
    for lp in &params.layers {
        let q = linear(&x, &lp.query_w, &lp.query_b);
        let k = linear(&x, &lp.key_w, &lp.key_b);
        let v = linear(&x, &lp.value_w, &lp.value_b);

        let mut ctx = vec![T::zero(); n * h];
        let mut probs = Vec::with_capacity(cfg.n_heads);
        for head in 0..cfg.n_heads {
            let (qh, kh, vh) = (
                head_slice(&q, n, h, head, dh),
                head_slice(&k, n, h, head, dh),
                head_slice(&v, n, h, head, dh),
            );
            let (p, o) = attend(&qh, &kh, &vh, dh, dh, None);
            for i in 0..n {
                ctx[i * h + head * dh..i * h + (head + 1) * dh].copy_from_slice(&o[i * dh..(i + 1) * dh]);
            }
            probs.push(p);
        }

        let mut attn = linear(&ctx, &lp.output_w, &lp.output_b);
        let attn_drop = dropout_mask(n * h, cfg.dropout_rate, mode, rng);
        apply_mask(&mut attn, &attn_drop);
        for (a, &xi) in attn.iter_mut().zip(&x) {
            *a += xi;
        }
        let (h1, ln1) = layer_norm(&attn, &lp.ln1_gain, &lp.ln1_shift);

        let ffn_pre = linear(&h1, &lp.ffn_in_w, &lp.ffn_in_b);
        let ffn_act: Vec<T> = ffn_pre.iter().map(|&z| gelu(z)).collect();
        let mut ffn_out = linear(&ffn_act, &lp.ffn_out_w, &lp.ffn_out_b);
        let ffn_drop = dropout_mask(n * h, cfg.dropout_rate, mode, rng);
        apply_mask(&mut ffn_out, &ffn_drop);
        for (f, &hv) in ffn_out.iter_mut().zip(&h1) {
            *f += hv;
        }
        let (out, ln2) = layer_norm(&ffn_out, &lp.ln2_gain, &lp.ln2_shift);

        layers.push(LayerCache {
            input: std::mem::replace(&mut x, out.clone()),
            q,
            k,
            v,
            probs,
            ctx,
            attn_drop,
            ln1,
            h1,
            ffn_pre,
            ffn_act,
            ffn_drop,
            ln2,
            out,
        });
    }

    let cls = &x[..h];
    let pooled: Vec<T> = (0..h)
        .map(|o| (dot(cls, params.pooler_w.row(o)) + params.pooler_b.data()[o]).tanh())
        .collect();

    Ok(Cache {
        n,
        ids,
        emb_drop,
        layers,
        pooled,
    })
}

fn head_slice<T: Scalar>(m: &[T], n: usize, h: usize, head: usize, dh: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(n * dh);
    for i in 0..n {
        out.extend_from_slice(&m[i * h + head * dh..i * h + (head + 1) * dh]);
    }
    out
}

/// Backpropagates `d_out` (gradient w.r.t. the last layer's output) through
/// layers `lowest..n_layers`, and into the embeddings when `embeddings` is set.
fn backward<T: Scalar>(
    params: &EncoderParams<T>,
    cfg: &EncoderConfig,
    cache: &Cache<T>,
    mut d_out: Vec<T>,
    grads: &mut EncoderParams<T>,
    lowest: usize,
    embeddings: bool,
) {
    let (n, h, dh) = (cache.n, cfg.hidden_dim, cfg.head_dim());
    let scale = T::one() / T::from_usize(dh).unwrap().sqrt();

    for li in (lowest..cfg.n_layers).rev() {
        let lp = &params.layers[li];
        let lc = &cache.layers[li];
        let need_dx = li > lowest || embeddings;
        let g = &mut grads.layers[li];

        let d_r2 = layer_norm_backward(&d_out, &lc.ln2, &lp.ln2_gain, &mut g.ln2_gain, &mut g.ln2_shift);
        let mut d_h1 = d_r2.clone();
        let mut d_f2 = d_r2;
        apply_mask(&mut d_f2, &lc.ffn_drop);
        let mut d_act = vec![T::zero(); n * cfg.ffn_dim];
        linear_backward(
            &d_f2,
            &lc.ffn_act,
            &lp.ffn_out_w,
            &mut g.ffn_out_w,
            &mut g.ffn_out_b,
            Some(&mut d_act),
        );
        for (d, &z) in d_act.iter_mut().zip(&lc.ffn_pre) {
            *d *= gelu_grad(z);
        }
        linear_backward(
            &d_act,
            &lc.h1,
            &lp.ffn_in_w,
            &mut g.ffn_in_w,
            &mut g.ffn_in_b,
            Some(&mut d_h1),
        );

        let d_r1 = layer_norm_backward(&d_h1, &lc.ln1, &lp.ln1_gain, &mut g.ln1_gain, &mut g.ln1_shift);
        let mut d_x = if need_dx { d_r1.clone() } else { Vec::new() };
        let mut d_attn = d_r1;
        apply_mask(&mut d_attn, &lc.attn_drop);
        let mut d_ctx = vec![T::zero(); n * h];
        linear_backward(
            &d_attn,
            &lc.ctx,
            &lp.output_w,
            &mut g.output_w,
            &mut g.output_b,
            Some(&mut d_ctx),
        );

        let mut d_q = vec![T::zero(); n * h];
        let mut d_k = vec![T::zero(); n * h];
        let mut d_v = vec![T::zero(); n * h];
        for head in 0..cfg.n_heads {
            let p = &lc.probs[head];
            let qh = head_slice(&lc.q, n, h, head, dh);
            let kh = head_slice(&lc.k, n, h, head, dh);
            let vh = head_slice(&lc.v, n, h, head, dh);
            let dc = head_slice(&d_ctx, n, h, head, dh);
            let off = head * dh;
            for i in 0..n {
                let prow = &p[i * n..(i + 1) * n];
                let dci = &dc[i * dh..(i + 1) * dh];
                // dP_ij = dC_i · V_j ; dV_j += P_ij dC_i
                let mut dp = vec![T::zero(); n];
                for j in 0..n {
                    dp[j] = dot(dci, &vh[j * dh..(j + 1) * dh]);
                    axpy(prow[j], dci, &mut d_v[j * h + off..j * h + off + dh]);
                }
                let s: T = dp.iter().zip(prow).map(|(&a, &b)| a * b).sum();
                for j in 0..n {
                    let ds = prow[j] * (dp[j] - s) * scale;
                    if ds != T::zero() {
                        axpy(ds, &kh[j * dh..(j + 1) * dh], &mut d_q[i * h + off..i * h + off + dh]);
                        axpy(ds, &qh[i * dh..(i + 1) * dh], &mut d_k[j * h + off..j * h + off + dh]);
                    }
                }
            }
        }

        let dx_opt = if need_dx { Some(d_x.as_mut_slice()) } else { None };
        linear_backward(&d_q, &lc.input, &lp.query_w, &mut g.query_w, &mut g.query_b, dx_opt);
        let dx_opt = if need_dx { Some(d_x.as_mut_slice()) } else { None };
        linear_backward(&d_k, &lc.input, &lp.key_w, &mut g.key_w, &mut g.key_b, dx_opt);
        let dx_opt = if need_dx { Some(d_x.as_mut_slice()) } else { None };
        linear_backward(&d_v, &lc.input, &lp.value_w, &mut g.value_w, &mut g.value_b, dx_opt);
        d_out = d_x;
    }

    if embeddings && lowest == 0 {
        apply_mask(&mut d_out, &cache.emb_drop);
        for (i, &id) in cache.ids.iter().enumerate() {
            let d = &d_out[i * h..(i + 1) * h];
            axpy(T::one(), d, grads.token_embeddings.row_mut(id as usize));
            axpy(T::one(), d, grads.position_embeddings.row_mut(i));
        }
    }
}

/// Runs the encoder. Dropout is drawn from `rng` in [`Mode::Train`] only.
pub fn forward<T: Scalar>(
    params: &EncoderParams<T>,
    cfg: &EncoderConfig,
    seq: &TokenSequence,
    mode: Mode,
    rng: &mut Rng,
) -> Result<ForwardOutput<T>> {
    let cache = run(params, cfg, seq, mode, rng)?;
    let n = cache.n;
    Ok(ForwardOutput {
        hidden: cache
            .layers
            .iter()
            .map(|l| Tensor::from_vec(&[n, cfg.hidden_dim], l.out.clone()))
            .collect(),
        pooled: cache.pooled,
    })
}

/// Adds `weight ×` the masked-LM gradient into `grads`; returns the loss
/// (mean cross-entropy over masked positions, unweighted).
pub fn accumulate_mlm<T: Scalar>(
    params: &EncoderParams<T>,
    cfg: &EncoderConfig,
    seq: &TokenSequence,
    mode: Mode,
    rng: &mut Rng,
    grads: &mut EncoderParams<T>,
    weight: T,
) -> Result<T> {
    let targets = seq
        .mlm_targets
        .as_ref()
        .filter(|t| !t.is_empty())
        .ok_or_else(|| Error::data("masked-LM loss needs at least one target"))?;
    let cache = run(params, cfg, seq, mode, rng)?;
    let h = cfg.hidden_dim;
    let hidden = cache.last_hidden();
    let count = T::from_usize(targets.len()).unwrap();
    let mut loss = T::zero();
    let mut d_out = vec![T::zero(); cache.n * h];
    let mut logits = vec![T::zero(); cfg.vocab_size];

    for (&pos, &target) in targets {
        if pos >= cache.n {
            return Err(Error::data(format!("masked position {pos} is padding")));
        }
        let hp = &hidden[pos * h..(pos + 1) * h];
        for (v, l) in logits.iter_mut().enumerate() {
            *l = dot(hp, params.mlm_w.row(v)) + params.mlm_b.data()[v];
        }
        let lse = log_sum_exp(&logits);
        loss += lse - logits[target as usize];

        let dpos = &mut d_out[pos * h..(pos + 1) * h];
        for (v, &l) in logits.iter().enumerate() {
            let mut g = (l - lse).exp();
            if v == target as usize {
                g -= T::one();
            }
            let g = g * weight / count;
            if g != T::zero() {
                axpy(g, hp, grads.mlm_w.row_mut(v));
                grads.mlm_b.data_mut()[v] += g;
                axpy(g, params.mlm_w.row(v), dpos);
            }
        }
    }
    backward(params, cfg, &cache, d_out, grads, 0, true);
    Ok(loss / count)
}

/// Masked-LM loss and the gradient of every parameter.
pub fn mlm_loss<T: Scalar>(
    params: &EncoderParams<T>,
    cfg: &EncoderConfig,
    seq: &TokenSequence,
    mode: Mode,
    rng: &mut Rng,
) -> Result<(T, EncoderParams<T>)> {
    let mut grads = EncoderParams::zeros(cfg);
    let loss = accumulate_mlm(params, cfg, seq, mode, rng, &mut grads, T::one())?;
    Ok((loss, grads))
}

/// Top-1 masked-LM predictions as `(position, predicted, original)`.
pub fn mlm_predictions<T: Scalar>(
    params: &EncoderParams<T>,
    cfg: &EncoderConfig,
    seq: &TokenSequence,
) -> Result<Vec<(usize, u32, u32)>> {
    let targets = seq
        .mlm_targets
        .as_ref()
        .ok_or_else(|| Error::data("sequence has no masked-LM targets"))?;
    let cache = run(params, cfg, seq, Mode::Infer, &mut crate::rng::seeded(0))?;
    let h = cfg.hidden_dim;
    let hidden = cache.last_hidden();
    Ok(targets
        .iter()
        .map(|(&pos, &orig)| {
            let hp = &hidden[pos * h..(pos + 1) * h];
            let mut best = (0u32, T::neg_infinity());
            for v in 0..cfg.vocab_size {
                let l = dot(hp, params.mlm_w.row(v)) + params.mlm_b.data()[v];
                if l > best.1 {
                    best = (v as u32, l);
                }
            }
            (pos, best.0, orig)
        })
        .collect())
}

fn class_logits<T: Scalar>(params: &EncoderParams<T>, pooled: &[T]) -> [T; 2] {
    [
        dot(pooled, params.classifier_w.row(0)) + params.classifier_b.data()[0],
        dot(pooled, params.classifier_w.row(1)) + params.classifier_b.data()[1],
    ]
}

fn softmax2<T: Scalar>(logits: [T; 2]) -> [T; 2] {
    let mut p = logits;
    softmax_in_place(&mut p);
    p
}

/// Argmax with ties going to the negative class.
pub fn predicted_label<T: Scalar>(probs: [T; 2]) -> Label {
    if probs[1] > probs[0] {
        Label::Positive
    } else {
        Label::Negative
    }
}

/// `(p_negative, p_positive)` in inference mode.
pub fn classify<T: Scalar>(params: &EncoderParams<T>, cfg: &EncoderConfig, seq: &TokenSequence) -> Result<[T; 2]> {
    let cache = run(params, cfg, seq, Mode::Infer, &mut crate::rng::seeded(0))?;
    Ok(softmax2(class_logits(params, &cache.pooled)))
}

pub fn classify_batch<T: Scalar>(
    params: &EncoderParams<T>,
    cfg: &EncoderConfig,
    seqs: &[TokenSequence],
) -> Result<Vec<[T; 2]>> {
    seqs.iter().map(|s| classify(params, cfg, s)).collect()
}

/// Adds `weight ×` the classification cross-entropy gradient for the
/// parameters in `scope`; returns the unweighted loss and probabilities.
#[allow(clippy::too_many_arguments)]
pub fn accumulate_classification<T: Scalar>(
    params: &EncoderParams<T>,
    cfg: &EncoderConfig,
    seq: &TokenSequence,
    label: Label,
    mode: Mode,
    rng: &mut Rng,
    scope: FineTuneScope,
    grads: &mut EncoderParams<T>,
    weight: T,
) -> Result<(T, [T; 2])> {
    let cache = run(params, cfg, seq, mode, rng)?;
    let h = cfg.hidden_dim;
    let logits = class_logits(params, &cache.pooled);
    let probs = softmax2(logits);
    let loss = log_sum_exp(&logits) - logits[label.index()];

    let mut d_pooled = vec![T::zero(); h];
    for c in 0..2 {
        let mut g = probs[c];
        if c == label.index() {
            g -= T::one();
        }
        let g = g * weight;
        axpy(g, &cache.pooled, grads.classifier_w.row_mut(c));
        grads.classifier_b.data_mut()[c] += g;
        axpy(g, params.classifier_w.row(c), &mut d_pooled);
    }

    let (lowest, embeddings) = scope.depth(cfg.n_layers);
    let cls = &cache.last_hidden()[..h];
    let mut d_cls = vec![T::zero(); h];
    for o in 0..h {
        let p = cache.pooled[o];
        let d_pre = d_pooled[o] * (T::one() - p * p);
        if d_pre != T::zero() {
            axpy(d_pre, cls, grads.pooler_w.row_mut(o));
            grads.pooler_b.data_mut()[o] += d_pre;
            axpy(d_pre, params.pooler_w.row(o), &mut d_cls);
        }
    }
    if lowest < cfg.n_layers {
        let mut d_out = vec![T::zero(); cache.n * h];
        d_out[..h].copy_from_slice(&d_cls);
        backward(params, cfg, &cache, d_out, grads, lowest, embeddings);
    }
    Ok((loss, probs))
}

/// Classification cross-entropy and its gradient over `scope`.
pub fn classification_loss<T: Scalar>(
    params: &EncoderParams<T>,
    cfg: &EncoderConfig,
    seq: &TokenSequence,
    label: Label,
    mode: Mode,
    rng: &mut Rng,
    scope: FineTuneScope,
) -> Result<(T, EncoderParams<T>)> {
    let mut grads = EncoderParams::zeros(cfg);
    let (loss, _) = accumulate_classification(params, cfg, seq, label, mode, rng, scope, &mut grads, T::one())?;
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::init_params;
    use crate::rng;
    use crate::tokenizer::{MASK, PAD, SEP};
    use std::collections::BTreeMap;

    fn seq(ids: &[u32], max_len: usize) -> TokenSequence {
        let mut s = vec![crate::tokenizer::CLS];
        s.extend_from_slice(ids);
        s.push(SEP);
        let n = s.len();
        s.resize(max_len, PAD);
        let mut mask = vec![1u8; n];
        mask.resize(max_len, 0);
        TokenSequence {
            ids: s,
            attention_mask: mask,
            mlm_targets: None,
            truncated: false,
        }
    }

    fn params(cfg: &EncoderConfig) -> EncoderParams<f64> {
        init_params(cfg, 17).unwrap()
    }

    #[test]
    fn infer_is_bit_identical() {
        let cfg = EncoderConfig::tiny();
        let p = params(&cfg);
        let s = seq(&[5, 9, 11], 6);
        let a = forward(&p, &cfg, &s, Mode::Infer, &mut rng::seeded(1)).unwrap();
        let b = forward(&p, &cfg, &s, Mode::Infer, &mut rng::seeded(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pad_positions_do_not_leak() {
        let cfg = EncoderConfig::tiny();
        let p = params(&cfg);
        let s = seq(&[5, 9], 6);
        let mut t = s.clone();
        t.ids[4] = 13;
        t.ids[5] = 7;
        let a = forward(&p, &cfg, &s, Mode::Infer, &mut rng::seeded(1)).unwrap();
        let b = forward(&p, &cfg, &t, Mode::Infer, &mut rng::seeded(1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn layer_norm_rows_are_standardized_at_init() {
        let cfg = EncoderConfig {
            n_layers: 2,
            ..EncoderConfig::tiny()
        };
        let p = params(&cfg);
        let out = forward(&p, &cfg, &seq(&[5, 6, 7, 8], 6), Mode::Infer, &mut rng::seeded(0)).unwrap();
        for layer in &out.hidden {
            for i in 0..layer.rows() {
                let r = layer.row(i);
                let mean = r.iter().sum::<f64>() / r.len() as f64;
                let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / r.len() as f64;
                assert!(mean.abs() < 1e-6 && (var - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn attention_is_bidirectional() {
        let cfg = EncoderConfig::tiny();
        let p = params(&cfg);
        let a = forward(&p, &cfg, &seq(&[5, 6, 7], 6), Mode::Infer, &mut rng::seeded(0)).unwrap();
        let b = forward(&p, &cfg, &seq(&[5, 6, 12], 6), Mode::Infer, &mut rng::seeded(0)).unwrap();
        let last = cfg.n_layers - 1;
        assert_ne!(a.hidden[last].row(1), b.hidden[last].row(1));
    }

    #[test]
    fn shapes_for_every_length() {
        let cfg = EncoderConfig {
            max_seq_len: 10,
            ..EncoderConfig::tiny()
        };
        let p = params(&cfg);
        for len in 3..=10 {
            let ids: Vec<u32> = (0..len - 2).map(|i| 5 + i as u32).collect();
            let out = forward(&p, &cfg, &seq(&ids, 10), Mode::Train, &mut rng::seeded(len as u64)).unwrap();
            assert_eq!(out.hidden[0].shape(), &[len, cfg.hidden_dim]);
            assert_eq!(out.pooled.len(), cfg.hidden_dim);
        }
    }

    #[test]
    fn out_of_range_id_rejected() {
        let cfg = EncoderConfig::tiny();
        let p = params(&cfg);
        assert!(forward(&p, &cfg, &seq(&[25], 6), Mode::Infer, &mut rng::seeded(0)).is_err());
    }

    #[test]
    fn mlm_loss_extremes() {
        let cfg = EncoderConfig::tiny();
        let mut p = params(&cfg);
        let mut s = seq(&[MASK, 6], 6);
        s.mlm_targets = Some(BTreeMap::from([(1, 9)]));

        p.mlm_w.fill(0.0);
        p.mlm_b.fill(0.0);
        let (loss, _) = mlm_loss(&p, &cfg, &s, Mode::Infer, &mut rng::seeded(0)).unwrap();
        assert!((loss - (cfg.vocab_size as f64).ln()).abs() < 1e-12);

        p.mlm_b.data_mut()[9] = 1e6;
        let (loss, _) = mlm_loss(&p, &cfg, &s, Mode::Infer, &mut rng::seeded(0)).unwrap();
        assert!(loss < 1e-6);

        s.mlm_targets = Some(BTreeMap::new());
        assert!(mlm_loss(&p, &cfg, &s, Mode::Infer, &mut rng::seeded(0)).is_err());
    }

    #[test]
    fn zero_head_gives_even_odds() {
        let cfg = EncoderConfig::tiny();
        let mut p = params(&cfg);
        p.classifier_w.fill(0.0);
        p.classifier_b.fill(0.0);
        let probs = classify(&p, &cfg, &seq(&[5, 6], 6)).unwrap();
        assert_eq!(probs, [0.5, 0.5]);
        assert_eq!(predicted_label(probs), Label::Negative);
    }

    #[test]
    fn shifted_logits_same_probabilities() {
        let cfg = EncoderConfig::tiny();
        let mut p = params(&cfg);
        let s = seq(&[5, 6, 8], 6);
        let a = classify(&p, &cfg, &s).unwrap();
        p.classifier_b.data_mut()[0] += 3.25;
        p.classifier_b.data_mut()[1] += 3.25;
        let b = classify(&p, &cfg, &s).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-15 && (a[1] - b[1]).abs() < 1e-15);
        assert!((b[0] + b[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn f32_and_f64_agree() {
        let cfg = EncoderConfig::tiny();
        let p64 = params(&cfg);
        let p32: EncoderParams<f32> = p64.cast();
        let s = seq(&[5, 6, 8, 10], 6);
        let a = classify(&p64, &cfg, &s).unwrap();
        let b = classify(&p32, &cfg, &s).unwrap();
        assert!((a[1] - b[1] as f64).abs() < 1e-5);
    }
}
