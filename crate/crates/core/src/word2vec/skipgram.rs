use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;

use super::{W2VConfig, WordEmbeddings};
use crate::error::{Error, Result};
use crate::{rng, Scalar, Tensor};

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// One negative-sampling update for the pair (`center`, `context`) with the
/// given negative words; returns the pair loss before the update.
///
/// With v = input[center] and u_t = output[t], each target t with label
/// y_t ∈ {1 (context), 0 (negative)} takes g_t = lr·(y_t − σ(u_t·v)); then
/// u_t += g_t·v and v += Σ g_t·u_t (using the pre-update u_t).
pub fn sgns_update<T: Scalar>(
    input: &mut Tensor<T>,
    output: &mut Tensor<T>,
    center: usize,
    context: usize,
    negatives: &[usize],
    lr: T,
) -> T {
    let mut acc = vec![T::zero(); input.cols()];
    update(input, output, center, context, negatives, lr, &mut acc)
}

fn update<T: Scalar>(
    input: &mut Tensor<T>,
    output: &mut Tensor<T>,
    center: usize,
    context: usize,
    negatives: &[usize],
    lr: T,
    acc: &mut [T],
) -> T {
    acc.iter_mut().for_each(|a| *a = T::zero());
    let mut loss = T::zero();
    let targets = std::iter::once((context, T::one()))
        .chain(negatives.iter().filter(|&&n| n != context).map(|&n| (n, T::zero())));
    for (t, y) in targets {
        let v = input.row(center);
        let f = crate::dot(v, output.row(t));
        let s = sigmoid(f);
        loss -= if y == T::one() { s.ln() } else { (T::one() - s).ln() };
        let g = lr * (y - s);
        crate::axpy(g, output.row(t), acc);
        let v = input.row(center).to_vec();
        crate::axpy(g, &v, output.row_mut(t));
    }
    crate::axpy(T::one(), acc, input.row_mut(center));
    loss
}

/// Skip-gram with negative sampling over tokenized sentences. Each center
/// word draws its window radius uniformly from 1..=window; negatives come
/// from the unigram distribution raised to 3/4; the learning rate decays
/// linearly to 1e-4 of its initial value.
pub fn train_skipgram<T: Scalar>(sentences: &[Vec<String>], cfg: &W2VConfig) -> Result<WordEmbeddings<T>> {
    cfg.validate()?;
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for w in sentences.iter().flatten() {
        *counts.entry(w.as_str()).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(Error::data("word2vec needs at least two distinct words"));
    }
    let mut vocab: Vec<(&str, usize)> = counts.into_iter().collect();
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, (w, _))| (*w, i)).collect();
    let noise = WeightedIndex::new(vocab.iter().map(|&(_, c)| (c as f64).powf(0.75)))
        .map_err(|e| Error::data(e.to_string()))?;
    let ids: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| s.iter().map(|w| index[w.as_str()]).collect())
        .collect();

    let (n, dim) = (vocab.len(), cfg.dim);
    let mut input = Tensor::<T>::zeros(&[n, dim]);
    let mut init = rng::keyed(cfg.seed, rng::key_of("init"));
    let half = 0.5 / dim as f64;
    for v in input.data_mut() {
        *v = T::lit(init.gen_range(-half..half));
    }
    let mut output = Tensor::<T>::zeros(&[n, dim]);

    let total_tokens: usize = ids.iter().map(Vec::len).sum();
    let total = (total_tokens * cfg.epochs).max(1) as f64;
    let mut seen = 0usize;
    let mut acc = vec![T::zero(); dim];
    let mut negatives = vec![0usize; cfg.negative_samples];
    for epoch in 0..cfg.epochs {
        let mut r = rng::keyed(cfg.seed, epoch as u64);
        for sent in &ids {
            for (pos, &center) in sent.iter().enumerate() {
                let lr = T::lit(cfg.learning_rate * (1.0 - seen as f64 / total).max(1e-4));
                seen += 1;
                let b = r.gen_range(1..=cfg.window);
                let lo = pos.saturating_sub(b);
                let hi = (pos + b).min(sent.len() - 1);
                for (cpos, &context) in sent.iter().enumerate().take(hi + 1).skip(lo) {
                    if cpos == pos {
                        continue;
                    }
                    for slot in negatives.iter_mut() {
                        *slot = noise.sample(&mut r);
                    }
                    update(&mut input, &mut output, center, context, &negatives, lr, &mut acc);
                }
            }
        }
    }
    if !input.is_finite() {
        return Err(Error::numeric("word2vec embeddings became non-finite"));
    }
    WordEmbeddings::new(vocab.into_iter().map(|(w, _)| w.to_string()).collect(), input)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_matches_closed_form() {
        let mut input = Tensor::from_vec(&[3, 2], vec![0.3, -0.2, 0.1, 0.4, -0.5, 0.25]);
        let mut output = Tensor::from_vec(&[3, 2], vec![0.05, 0.1, -0.3, 0.2, 0.6, -0.1]);
        let (v, u_ctx, u_neg) = ([0.3, -0.2], [-0.3, 0.2], [0.6, -0.1]);
        let lr = 0.05;
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let s_pos = sig(v[0] * u_ctx[0] + v[1] * u_ctx[1]);
        let s_neg = sig(v[0] * u_neg[0] + v[1] * u_neg[1]);
        let (g_pos, g_neg) = (lr * (1.0 - s_pos), lr * (0.0 - s_neg));

        let loss = sgns_update(&mut input, &mut output, 0, 1, &[2], lr);
        assert!((loss - (-(s_pos.ln()) - (1.0 - s_neg).ln())).abs() < 1e-12);
        for j in 0..2 {
            assert!((output.at(1, j) - (u_ctx[j] + g_pos * v[j])).abs() < 1e-12);
            assert!((output.at(2, j) - (u_neg[j] + g_neg * v[j])).abs() < 1e-12);
            assert!((input.at(0, j) - (v[j] + g_pos * u_ctx[j] + g_neg * u_neg[j])).abs() < 1e-12);
        }
        assert_eq!(input.row(1), &[0.1, 0.4]);
    }

    #[test]
    fn negative_equal_to_context_is_skipped() {
        let mut input = Tensor::from_vec(&[2, 1], vec![0.5f64, 0.5]);
        let mut output = Tensor::from_vec(&[2, 1], vec![0.0, 0.0]);
        sgns_update(&mut input, &mut output, 0, 1, &[1, 1], 0.1);
        assert!((output.at(1, 0) - 0.1 * 0.5 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn too_small_vocabulary_rejected() {
        let s = vec![vec!["a".to_string(), "a".to_string()]];
        assert!(train_skipgram::<f64>(&s, &W2VConfig::default()).is_err());
    }
}
