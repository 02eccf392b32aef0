use std::time::Instant;

use rand::seq::{index, SliceRandom};

use super::{adam_step_masked, AdamState, Phase, TrainLog};
use crate::corpus::Label;
use crate::corpus::Report;
use crate::encoder::{accumulate_classification, accumulate_mlm, classify, mlm_predictions, predicted_label};
use crate::encoder::{EncoderConfig, EncoderParams, FineTuneScope, Mode};
use crate::error::{Error, Result};
use crate::rng;
use crate::tokenizer::{encode, mask_tokens, MaskPolicy, TokenSequence, Vocabulary};
use crate::Scalar;

/// A tokenized labeled report.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub seq: TokenSequence,
    pub label: Label,
}

/// Encodes the impression of each labeled report.
pub fn examples_from_reports(reports: &[Report], vocab: &Vocabulary, max_seq_len: usize) -> Result<Vec<Example>> {
    reports
        .iter()
        .map(|r| {
            let label = r
                .label
                .ok_or_else(|| Error::data(format!("report `{}` has no label", r.id)))?;
            let text = r
                .impression()
                .ok_or_else(|| Error::data(format!("report `{}` has no impression", r.id)))?;
            Ok(Example {
                id: r.id.clone(),
                seq: encode(text, vocab, max_seq_len),
                label,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub mask: MaskPolicy,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            steps: 2000,
            batch_size: 32,
            lr: 1e-4,
            seed: 0,
            mask: MaskPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub scope: FineTuneScope,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            batch_size: 32,
            lr: 2e-5,
            epochs: 5,
            scope: FineTuneScope::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneOutcome {
    pub log: TrainLog,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub dev_curve: Vec<f64>,
}

fn non_finite(what: &str, step: usize) -> Error {
    Error::numeric(format!("non-finite {what} loss at step {step}"))
}

/// Masked-LM pre-training. Step `s` draws its batch, masks and dropout from
/// the stream keyed by `(seed, s)`.
pub fn pretrain_mlm<T: Scalar>(
    params: &mut EncoderParams<T>,
    cfg: &EncoderConfig,
    corpus: &[TokenSequence],
    pc: &PretrainConfig,
) -> Result<TrainLog> {
    if pc.steps == 0 {
        return Err(Error::config("pre-training needs at least one step"));
    }
    if pc.batch_size == 0 || pc.batch_size > corpus.len() {
        return Err(Error::config(format!(
            "batch size {} must lie in 1..={}",
            pc.batch_size,
            corpus.len()
        )));
    }
    let started = Instant::now();
    let mut log = TrainLog::new(pc.seed);
    log.hyperparams.extend([
        ("steps".to_string(), pc.steps.to_string()),
        ("batch_size".to_string(), pc.batch_size.to_string()),
        ("lr".to_string(), pc.lr.to_string()),
    ]);
    let mut state = AdamState::new(params, pc.lr);
    let mut grads = EncoderParams::zeros(cfg);
    let weight = T::one() / T::from_usize(pc.batch_size).unwrap();
    for step in 1..=pc.steps {
        let mut r = rng::keyed(pc.seed, step as u64);
        grads.zero_grad();
        let mut loss = 0.0;
        for i in index::sample(&mut r, corpus.len(), pc.batch_size) {
            let masked = mask_tokens(&corpus[i], cfg.vocab_size, &mut r, pc.mask)?;
            loss += accumulate_mlm(params, cfg, &masked, Mode::Train, &mut r, &mut grads, weight)?.as_f64();
        }
        loss /= pc.batch_size as f64;
        if !loss.is_finite() {
            return Err(non_finite("masked-LM", step));
        }
        adam_step_masked(params, &grads, &mut state, |n| {
            !n.starts_with("pooler.") && !n.starts_with("classifier.")
        })?;
        log.push(step, Phase::Pretrain, Some(loss), None);
    }
    log.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(log)
}

/// Classification fine-tuning with per-epoch dev evaluation. `params` ends as
/// the parameters of the best dev epoch, the earliest on ties.
pub fn finetune<T: Scalar>(
    params: &mut EncoderParams<T>,
    cfg: &EncoderConfig,
    train: &[Example],
    dev: &[Example],
    fc: &FinetuneConfig,
) -> Result<FinetuneOutcome> {
    if train.is_empty() || dev.is_empty() {
        return Err(Error::data("fine-tuning needs nonempty train and dev splits"));
    }
    if fc.batch_size == 0 || fc.epochs == 0 {
        return Err(Error::config("batch size and epochs must be positive"));
    }
    let started = Instant::now();
    let mut log = TrainLog::new(fc.seed);
    log.hyperparams.extend([
        ("batch_size".to_string(), fc.batch_size.to_string()),
        ("lr".to_string(), fc.lr.to_string()),
        ("epochs".to_string(), fc.epochs.to_string()),
        ("scope".to_string(), fc.scope.to_string()),
    ]);
    let trainable = |n: &str| fc.scope.includes(n, cfg.n_layers);
    let mut state = AdamState::new(params, fc.lr);
    let mut grads = EncoderParams::zeros(cfg);
    let mut best: Option<(f64, usize, EncoderParams<T>)> = None;
    let mut curve = Vec::with_capacity(fc.epochs);
    let mut step = 0;

    for epoch in 1..=fc.epochs {
        let mut r = rng::keyed(fc.seed, epoch as u64);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut r);
        for batch in order.chunks(fc.batch_size) {
            step += 1;
            grads.zero_grad();
            let weight = T::one() / T::from_usize(batch.len()).unwrap();
            let mut loss = 0.0;
            for &i in batch {
                let ex = &train[i];
                let (l, _) = accumulate_classification(
                    params,
                    cfg,
                    &ex.seq,
                    ex.label,
                    Mode::Train,
                    &mut r,
                    fc.scope,
                    &mut grads,
                    weight,
                )?;
                loss += l.as_f64();
            }
            loss /= batch.len() as f64;
            if !loss.is_finite() {
                return Err(non_finite("classification", step));
            }
            adam_step_masked(params, &grads, &mut state, trainable)?;
            log.push(step, Phase::Train, Some(loss), None);
        }
        let acc = accuracy(params, cfg, dev)?;
        log.push(epoch, Phase::Dev, None, Some(acc));
        curve.push(acc);
        if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
            best = Some((acc, epoch, params.clone()));
        }
    }
    let (_, best_epoch, best_params) = best.expect("at least one epoch");
    *params = best_params;
    log.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(FinetuneOutcome {
        log,
        best_epoch,
        dev_curve: curve,
    })
}

/// `(p_negative, p_positive)` per example.
pub fn predict<T: Scalar>(params: &EncoderParams<T>, cfg: &EncoderConfig, examples: &[Example]) -> Result<Vec<[T; 2]>> {
    examples.iter().map(|e| classify(params, cfg, &e.seq)).collect()
}

pub fn accuracy<T: Scalar>(params: &EncoderParams<T>, cfg: &EncoderConfig, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::data("accuracy of an empty set"));
    }
    let probs = predict(params, cfg, examples)?;
    let correct = probs
        .iter()
        .zip(examples)
        .filter(|(p, e)| predicted_label(**p) == e.label)
        .count();
    Ok(correct as f64 / examples.len() as f64)
}

/// Top-1 accuracy on masked positions; sequence `i` is masked with the stream
/// keyed by `(seed, i)`.
pub fn mlm_accuracy<T: Scalar>(
    params: &EncoderParams<T>,
    cfg: &EncoderConfig,
    seqs: &[TokenSequence],
    policy: MaskPolicy,
    seed: u64,
) -> Result<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for (i, s) in seqs.iter().enumerate() {
        let masked = mask_tokens(s, cfg.vocab_size, &mut rng::keyed(seed, i as u64), policy)?;
        for (_, pred, orig) in mlm_predictions(params, cfg, &masked)? {
            total += 1;
            hit += usize::from(pred == orig);
        }
    }
    if total == 0 {
        return Err(Error::data("no masked positions"));
    }
    Ok(hit as f64 / total as f64)
}
