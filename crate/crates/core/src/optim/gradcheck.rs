use rand::seq::index;
use rand::Rng as _;

use crate::corpus::Label;
use crate::encoder::{accumulate_classification, accumulate_mlm, EncoderConfig, EncoderParams, FineTuneScope, Mode};
use crate::error::Result;
use crate::rng;
use crate::tokenizer::{TokenId, TokenSequence, CLS, MASK, NUM_SPECIALS, SEP};
use crate::ParamSet;

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub coords: usize,
    /// max |a−n| / max(|a|, |n|, 1e-8)
    pub max_rel_error: f64,
    pub max_abs_analytic: f64,
    pub max_abs_numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&TensorCheck> {
        self.tensors
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// Compares the analytic gradient from `loss_and_grad` with central finite
/// differences on `coords_per_tensor` random coordinates of every tensor (all
/// of them when the tensor is smaller).
pub fn grad_check<P, F>(
    params: &P,
    mut loss_and_grad: F,
    coords_per_tensor: usize,
    step: f64,
    seed: u64,
) -> Result<GradCheckReport>
where
    P: ParamSet<f64> + Clone,
    F: FnMut(&P) -> Result<(f64, P)>,
{
    let (_, analytic) = loss_and_grad(params)?;
    let analytic: Vec<Vec<f64>> = analytic.tensors().iter().map(|(_, t)| t.data().to_vec()).collect();
    let names: Vec<(String, usize)> = params.tensors().iter().map(|(n, t)| (n.clone(), t.len())).collect();
    let mut probe = params.clone();
    let mut report = GradCheckReport { tensors: Vec::new() };

    for (ti, (name, len)) in names.into_iter().enumerate() {
        let mut r = rng::keyed(seed, ti as u64);
        let mut picks = index::sample(&mut r, len, coords_per_tensor.min(len)).into_vec();
        picks.sort_unstable();
        let mut check = TensorCheck {
            name,
            coords: picks.len(),
            max_rel_error: 0.0,
            max_abs_analytic: 0.0,
            max_abs_numeric: 0.0,
        };
        for j in picks {
            let orig = probe.tensors()[ti].1.data()[j];
            set(&mut probe, ti, j, orig + step);
            let (up, _) = loss_and_grad(&probe)?;
            set(&mut probe, ti, j, orig - step);
            let (down, _) = loss_and_grad(&probe)?;
            set(&mut probe, ti, j, orig);

            let n = (up - down) / (2.0 * step);
            let a = analytic[ti][j];
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
            check.max_rel_error = check.max_rel_error.max(rel);
            check.max_abs_analytic = check.max_abs_analytic.max(a.abs());
            check.max_abs_numeric = check.max_abs_numeric.max(n.abs());
        }
        report.tensors.push(check);
    }
    Ok(report)
}

fn set<P: ParamSet<f64>>(p: &mut P, tensor: usize, index: usize, value: f64) {
    p.tensors_mut()[tensor].1.data_mut()[index] = value;
}

/// Masked-LM loss plus classification loss over every parameter, without
/// dropout: a probe that exercises every tensor's gradient at once.
pub fn encoder_probe(
    params: &EncoderParams<f64>,
    cfg: &EncoderConfig,
    masked: &TokenSequence,
    label: Label,
) -> Result<(f64, EncoderParams<f64>)> {
    let mut grads = EncoderParams::zeros(cfg);
    let mut r = rng::seeded(0);
    let mlm = accumulate_mlm(params, cfg, masked, Mode::Infer, &mut r, &mut grads, 1.0)?;
    let (cls, _) = accumulate_classification(
        params,
        cfg,
        masked,
        label,
        Mode::Infer,
        &mut r,
        FineTuneScope::All,
        &mut grads,
        1.0,
    )?;
    Ok((mlm + cls, grads))
}

/// Parameters at a generic point for gradient checking. The training
/// initialization (std 0.02) leaves attention almost uniform, so several
/// gradients sit near the finite-difference noise floor; here weights are
/// uniform in ±0.5, biases and shifts in ±0.1 and gains in 1 ± 0.2.
pub fn probe_params(cfg: &EncoderConfig, seed: u64) -> Result<EncoderParams<f64>> {
    cfg.validate()?;
    let mut p = EncoderParams::<f64>::zeros(cfg);
    for (i, (name, t)) in p.tensors_mut().into_iter().enumerate() {
        let mut r = rng::keyed(seed, i as u64);
        let (center, half) = if name.ends_with(".gain") {
            (1.0, 0.2)
        } else if name.ends_with(".bias") || name.ends_with(".shift") {
            (0.0, 0.1)
        } else {
            (0.0, 0.5)
        };
        for v in t.data_mut() {
            *v = center + r.gen_range(-half..=half);
        }
    }
    Ok(p)
}

/// Full-length probe sequence with random ordinary tokens and two masked-LM
/// targets (one replaced by `[MASK]`, one kept).
pub fn probe_sequence(cfg: &EncoderConfig, seed: u64) -> TokenSequence {
    let n = cfg.max_seq_len;
    let mut r = rng::keyed(seed, rng::key_of("probe-sequence"));
    let mut ids: Vec<TokenId> = (0..n)
        .map(|_| r.gen_range(NUM_SPECIALS..cfg.vocab_size.max(NUM_SPECIALS + 1)) as TokenId)
        .collect();
    ids[0] = CLS;
    ids[n - 1] = SEP;
    let mut targets = std::collections::BTreeMap::new();
    if n >= 4 {
        targets.insert(1, ids[1]);
        targets.insert(2, ids[2]);
        ids[2] = MASK;
    }
    TokenSequence {
        ids,
        attention_mask: vec![1; n],
        mlm_targets: Some(targets),
        truncated: false,
    }
}

/// Finite-difference check of every encoder tensor at a probe point, with at
/// least 20 coordinates per tensor.
pub fn check_encoder(cfg: &EncoderConfig, seed: u64) -> Result<GradCheckReport> {
    let params = probe_params(cfg, seed)?;
    let seq = probe_sequence(cfg, seed);
    grad_check(
        &params,
        |p| encoder_probe(p, cfg, &seq, Label::Positive),
        20,
        FD_STEP,
        seed,
    )
}
