//! Hyperparameter search on the development split: the two-level
//! learning-rate search, exhaustive grid search and the epoch sweep.
//!
//! Searches only see an [`Objective`], which is built from train and dev data,
//! so the evaluation split is out of reach by construction.

mod objective;

use std::time::Instant;

use crate::error::{Error, Result};

pub use objective::FinetuneObjective;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub seq_len: usize,
    pub batch: usize,
    pub lr: f64,
    pub epochs: usize,
}

impl HyperParams {
    fn key(&self) -> (usize, usize, f64, usize) {
        (self.seq_len, self.batch, self.lr, self.epochs)
    }
}

/// Something that trains with given hyperparameters from a fixed starting
/// point and reports dev accuracy after every epoch.
pub trait Objective {
    /// Per-epoch dev accuracy. A [`Error::Numeric`] marks a diverged run.
    fn dev_curve(&mut self, hp: &HyperParams, seed: u64) -> Result<Vec<f64>>;
}

impl<F: FnMut(&HyperParams, u64) -> Result<Vec<f64>>> Objective for F {
    fn dev_curve(&mut self, hp: &HyperParams, seed: u64) -> Result<Vec<f64>> {
        self(hp, seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub hp: HyperParams,
    /// Dev accuracy after the final epoch; 0 for a diverged trial.
    pub dev_accuracy: f64,
    pub seed: u64,
    pub diverged: bool,
    pub wall_clock_secs: f64,
}

fn run_trial<O: Objective + ?Sized>(obj: &mut O, hp: HyperParams, seed: u64) -> Result<(TrialResult, Vec<f64>)> {
    let started = Instant::now();
    let (acc, diverged, curve) = match obj.dev_curve(&hp, seed) {
        Ok(curve) => {
            let last = *curve
                .last()
                .ok_or_else(|| Error::data("objective returned no epochs"))?;
            if !(0.0..=1.0).contains(&last) {
                return Err(Error::data(format!("dev accuracy {last} outside [0, 1]")));
            }
            (last, false, curve)
        }
        Err(Error::Numeric(msg)) => {
            log::warn!("trial {hp:?} diverged: {msg}");
            (0.0, true, Vec::new())
        }
        Err(e) => return Err(e),
    };
    let trial = TrialResult {
        hp,
        dev_accuracy: acc,
        seed,
        diverged,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok((trial, curve))
}

/// Highest dev accuracy; ties go to the smallest (seq_len, batch, lr, epochs).
/// The result does not depend on the order of `trials`.
pub fn select_best(trials: &[TrialResult]) -> Option<&TrialResult> {
    trials.iter().max_by(|a, b| {
        a.dev_accuracy.total_cmp(&b.dev_accuracy).then_with(|| {
            let (ka, kb) = (a.hp.key(), b.hp.key());
            kb.0.cmp(&ka.0)
                .then(kb.1.cmp(&ka.1))
                .then(kb.2.total_cmp(&ka.2))
                .then(kb.3.cmp(&ka.3))
        })
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub seq_lens: Vec<usize>,
    pub batches: Vec<usize>,
    pub lrs: Vec<f64>,
    pub epochs: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            seq_lens: vec![16, 32, 64, 128],
            batches: vec![16, 32, 64],
            lrs: vec![1e-5, 2e-5, 5e-5, 1e-4],
            epochs: vec![3, 4, 5, 6, 7],
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.seq_lens.is_empty() || self.batches.is_empty() || self.lrs.is_empty() || self.epochs.is_empty() {
            return Err(Error::config("every search dimension needs at least one candidate"));
        }
        if self.lrs.iter().any(|&lr| !(lr > 0.0 && lr.is_finite())) {
            return Err(Error::config("learning rates must be positive"));
        }
        if self.seq_lens.iter().any(|&s| s < 3) || self.batches.contains(&0) || self.epochs.contains(&0) {
            return Err(Error::config("seq_len ≥ 3, batch ≥ 1 and epochs ≥ 1 are required"));
        }
        Ok(())
    }

    /// Cartesian product in (seq_len, batch, lr, epochs) order.
    pub fn points(&self) -> Vec<HyperParams> {
        let mut out = Vec::new();
        for &seq_len in &self.seq_lens {
            for &batch in &self.batches {
                for &lr in &self.lrs {
                    for &epochs in &self.epochs {
                        out.push(HyperParams {
                            seq_len,
                            batch,
                            lr,
                            epochs,
                        });
                    }
                }
            }
        }
        out
    }
}

pub fn grid_search<O: Objective + ?Sized>(
    obj: &mut O,
    space: &SearchSpace,
    seed: u64,
) -> Result<(HyperParams, Vec<TrialResult>)> {
    space.validate()?;
    let trials = space
        .points()
        .into_iter()
        .map(|hp| run_trial(obj, hp, seed).map(|(t, _)| t))
        .collect::<Result<Vec<_>>>()?;
    let best = select_best(&trials).expect("nonempty space").hp;
    Ok((best, trials))
}

pub const COARSE_DECADES: [f64; 5] = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2];

#[derive(Debug, Clone, PartialEq)]
pub struct LrSearch {
    pub coarse_best: f64,
    pub best: f64,
    pub coarse: Vec<TrialResult>,
    pub fine: Vec<TrialResult>,
}

impl LrSearch {
    pub fn trials(&self) -> impl Iterator<Item = &TrialResult> {
        self.coarse.iter().chain(&self.fine)
    }
}

/// Best rate among `trials`, ties to the smaller rate.
fn best_lr(trials: &[TrialResult]) -> f64 {
    trials
        .iter()
        .max_by(|a, b| {
            a.dev_accuracy
                .total_cmp(&b.dev_accuracy)
                .then(b.hp.lr.total_cmp(&a.hp.lr))
        })
        .expect("nonempty")
        .hp
        .lr
}

/// Level one tries each decade; level two tries 1..=9 times the winning
/// decade.
pub fn lr_two_level_search<O: Objective + ?Sized>(
    obj: &mut O,
    fixed: &HyperParams,
    decades: &[f64],
    seed: u64,
) -> Result<LrSearch> {
    if decades.is_empty() || decades.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
        return Err(Error::config("learning-rate decades must be positive"));
    }
    let with_lr = |lr: f64| HyperParams { lr, ..*fixed };
    let coarse = decades
        .iter()
        .map(|&d| run_trial(obj, with_lr(d), seed).map(|(t, _)| t))
        .collect::<Result<Vec<_>>>()?;
    let coarse_best = best_lr(&coarse);
    let fine = (1..=9)
        .map(|m| {
            let lr = if m == 1 { coarse_best } else { m as f64 * coarse_best };
            run_trial(obj, with_lr(lr), seed).map(|(t, _)| t)
        })
        .collect::<Result<Vec<_>>>()?;
    let best = best_lr(&fine);
    Ok(LrSearch {
        coarse_best,
        best,
        coarse,
        fine,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochSweep {
    pub curve: Vec<f64>,
    /// 1-based argmax of the curve, earliest on ties.
    pub chosen: usize,
}

/// Index (1-based) of the maximum, earliest on ties.
pub fn argmax_epoch(curve: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in curve.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i + 1, v));
        }
    }
    best.map(|(i, _)| i)
}

pub fn epoch_sweep<O: Objective + ?Sized>(
    obj: &mut O,
    hp: &HyperParams,
    max_epochs: usize,
    seed: u64,
) -> Result<EpochSweep> {
    if max_epochs == 0 {
        return Err(Error::config("max_epochs must be at least 1"));
    }
    let curve = obj.dev_curve(
        &HyperParams {
            epochs: max_epochs,
            ..*hp
        },
        seed,
    )?;
    let chosen = argmax_epoch(&curve).ok_or_else(|| Error::data("objective returned no epochs"))?;
    Ok(EpochSweep { curve, chosen })
}

/// `seq_len,batch,lr,epochs,dev_accuracy,seed`
pub fn trials_csv<'a>(trials: impl IntoIterator<Item = &'a TrialResult>) -> String {
    let mut out = String::from("seq_len,batch,lr,epochs,dev_accuracy,seed\n");
    for t in trials {
        out.push_str(&format!(
            "{},{},{:e},{},{:.6},{}\n",
            t.hp.seq_len, t.hp.batch, t.hp.lr, t.hp.epochs, t.dev_accuracy, t.seed
        ));
    }
    out
}

/// `epoch,dev_accuracy`
pub fn curve_csv(curve: &[f64]) -> String {
    let mut out = String::from("epoch,dev_accuracy\n");
    for (i, v) in curve.iter().enumerate() {
        out.push_str(&format!("{},{v:.6}\n", i + 1));
    }
    out
}
