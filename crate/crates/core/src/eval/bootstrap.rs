use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use super::{prf, Confusion, PredictionSet, Prf};
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::rng;

pub const METRICS: [&str; 3] = ["precision", "recall", "f_measure"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CiMethod {
    /// 2.5th and 97.5th percentiles of the bootstrap distribution.
    #[default]
    Percentile,
    /// mean ± 1.96 standard deviations, clamped to [0, 1].
    Normal,
}

impl fmt::Display for CiMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CiMethod::Percentile => "percentile",
            CiMethod::Normal => "normal",
        })
    }
}

impl FromStr for CiMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "percentile" => Ok(CiMethod::Percentile),
            "normal" => Ok(CiMethod::Normal),
            _ => Err(Error::config(format!("unknown CI method `{s}`"))),
        }
    }
}

/// How each iteration picks its sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Resampler {
    /// n draws uniformly with replacement.
    #[default]
    Uniform,
    /// The first n predictions in order; a test hook.
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapConfig {
    pub iterations: usize,
    pub fraction: f64,
    pub seed: u64,
    pub method: CiMethod,
    pub resampler: Resampler,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            iterations: 1000,
            fraction: 0.5,
            seed: 0,
            method: CiMethod::Percentile,
            resampler: Resampler::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    /// Value on the full sample.
    pub point: f64,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl MetricSummary {
    pub fn overlaps(&self, other: &MetricSummary) -> bool {
        self.ci_lo <= other.ci_hi && other.ci_lo <= self.ci_hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSummary {
    /// precision, recall, F-measure
    pub metrics: [MetricSummary; 3],
    pub iterations: usize,
    pub fraction: f64,
    pub seed: u64,
    /// Iterations in which some metric hit a zero denominator (kept, at 0).
    pub degenerate_iterations: usize,
}

impl BootstrapSummary {
    pub fn precision(&self) -> &MetricSummary {
        &self.metrics[0]
    }

    pub fn recall(&self) -> &MetricSummary {
        &self.metrics[1]
    }

    pub fn f_measure(&self) -> &MetricSummary {
        &self.metrics[2]
    }
}

fn sample_size(cfg: &BootstrapConfig, len: usize) -> Result<usize> {
    if cfg.iterations == 0 {
        return Err(Error::config("bootstrap needs at least one iteration"));
    }
    if !(cfg.fraction > 0.0 && cfg.fraction <= 1.0) {
        return Err(Error::config("resample fraction must lie in (0, 1]"));
    }
    let n = (cfg.fraction * len as f64).floor() as usize;
    if n == 0 {
        return Err(Error::data("resample size is zero"));
    }
    Ok(n)
}

fn draw(cfg: &BootstrapConfig, iteration: usize, len: usize, n: usize, out: &mut Vec<usize>) {
    out.clear();
    match cfg.resampler {
        Resampler::Uniform => {
            let mut r = rng::keyed(cfg.seed, iteration as u64);
            out.extend((0..n).map(|_| r.gen_range(0..len)));
        }
        Resampler::Identity => out.extend(0..n),
    }
}

fn score(pairs: &[(Label, Label)], idx: &[usize]) -> Prf {
    let mut c = Confusion::default();
    for &i in idx {
        c.add(pairs[i].0, pairs[i].1);
    }
    prf(c.tp, c.fp, c.fn_)
}

/// Linear interpolation between closest ranks of sorted `v`.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn summarize(point: f64, values: &mut [f64], method: CiMethod) -> MetricSummary {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let (ci_lo, ci_hi) = match method {
        CiMethod::Percentile => {
            values.sort_by(f64::total_cmp);
            (percentile(values, 0.025), percentile(values, 0.975))
        }
        CiMethod::Normal => {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0).max(1.0);
            let half = 1.96 * var.sqrt();
            ((mean - half).max(0.0), (mean + half).min(1.0))
        }
    };
    MetricSummary {
        point,
        mean,
        ci_lo,
        ci_hi,
    }
}

/// Per-iteration metric values; iteration `i` uses the stream keyed by
/// `(seed, i)`, so results do not depend on how iterations are scheduled.
fn iterate(pairs: &[(Label, Label)], cfg: &BootstrapConfig, n: usize, range: std::ops::Range<usize>) -> Vec<Prf> {
    let mut idx = Vec::with_capacity(n);
    range
        .map(|i| {
            draw(cfg, i, pairs.len(), n, &mut idx);
            score(pairs, &idx)
        })
        .collect()
}

fn finish(pairs: &[(Label, Label)], cfg: &BootstrapConfig, per_iter: &[Prf]) -> BootstrapSummary {
    let full = {
        let all: Vec<usize> = (0..pairs.len()).collect();
        score(pairs, &all)
    };
    let metrics = std::array::from_fn(|k| {
        let mut v: Vec<f64> = per_iter.iter().map(|p| p.values()[k]).collect();
        summarize(full.values()[k], &mut v, cfg.method)
    });
    BootstrapSummary {
        metrics,
        iterations: cfg.iterations,
        fraction: cfg.fraction,
        seed: cfg.seed,
        degenerate_iterations: per_iter.iter().filter(|p| p.degenerate.any()).count(),
    }
}

fn pairs_of(preds: &PredictionSet) -> Vec<(Label, Label)> {
    preds.items().iter().map(|p| (p.truth, p.predicted)).collect()
}

pub fn bootstrap(preds: &PredictionSet, cfg: &BootstrapConfig) -> Result<BootstrapSummary> {
    bootstrap_with_workers(preds, cfg, 1)
}

/// As [`bootstrap`], splitting iterations over `workers` threads.
pub fn bootstrap_with_workers(
    preds: &PredictionSet,
    cfg: &BootstrapConfig,
    workers: usize,
) -> Result<BootstrapSummary> {
    if preds.len() < 4 {
        return Err(Error::data("bootstrap needs at least 4 predictions"));
    }
    let n = sample_size(cfg, preds.len())?;
    let pairs = pairs_of(preds);
    let workers = workers.clamp(1, cfg.iterations);
    let chunk = cfg.iterations.div_ceil(workers);
    let per_iter: Vec<Prf> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let range = (w * chunk).min(cfg.iterations)..((w + 1) * chunk).min(cfg.iterations);
                let pairs = &pairs;
                s.spawn(move || iterate(pairs, cfg, n, range))
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("bootstrap worker panicked"))
            .collect()
    });
    Ok(finish(&pairs, cfg, &per_iter))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub a: BootstrapSummary,
    pub b: BootstrapSummary,
    /// Per metric: whether the two confidence intervals overlap.
    pub overlap: [bool; 3],
}

impl Comparison {
    pub fn disjoint(&self) -> [bool; 3] {
        self.overlap.map(|o| !o)
    }
}

/// Paired bootstrap: both models are scored on the same resampled reports
/// in every iteration.
pub fn compare_models(a: &PredictionSet, b: &PredictionSet, cfg: &BootstrapConfig) -> Result<Comparison> {
    if a.len() != b.len() {
        return Err(Error::data("prediction sets cover different reports"));
    }
    let by_id: HashMap<&str, usize> = b.items().iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
    let mut b_aligned = Vec::with_capacity(b.len());
    for p in a.items() {
        let &j = by_id
            .get(p.id.as_str())
            .ok_or_else(|| Error::data(format!("report `{}` missing from the second prediction set", p.id)))?;
        let q = &b.items()[j];
        if q.truth != p.truth {
            return Err(Error::data(format!("true labels disagree for `{}`", p.id)));
        }
        b_aligned.push(q.clone());
    }
    let b_aligned = PredictionSet::new(b_aligned)?;
    let sa = bootstrap(a, cfg)?;
    let sb = bootstrap(&b_aligned, cfg)?;
    let overlap = std::array::from_fn(|k| sa.metrics[k].overlaps(&sb.metrics[k]));
    Ok(Comparison { a: sa, b: sb, overlap })
}

/// Summary CSV rows `model,metric,point,mean,ci_lo,ci_hi,iterations`.
pub fn summary_csv(rows: &[(&str, &BootstrapSummary)]) -> String {
    let mut out = String::from("model,metric,point,mean,ci_lo,ci_hi,iterations\n");
    for (model, s) in rows {
        for (name, m) in METRICS.iter().zip(&s.metrics) {
            out.push_str(&format!(
                "{model},{name},{:.6},{:.6},{:.6},{:.6},{}\n",
                m.point, m.mean, m.ci_lo, m.ci_hi, s.iterations
            ));
        }
    }
    out
}

/// Table with one row per model: bootstrap mean (CI) in percent.
pub fn render_table(rows: &[(&str, &BootstrapSummary)]) -> String {
    let cell = |m: &MetricSummary| format!("{:.1} ({:.1}, {:.1})", 100.0 * m.mean, 100.0 * m.ci_lo, 100.0 * m.ci_hi);
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(5);
    let mut out = format!(
        "{:<width$}  {:<20}  {:<20}  {:<20}\n",
        "Model", "Precision", "Recall", "F-measure"
    );
    for (name, s) in rows {
        out.push_str(&format!(
            "{:<width$}  {:<20}  {:<20}  {:<20}\n",
            name,
            cell(s.precision()),
            cell(s.recall()),
            cell(s.f_measure())
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::Prediction;
    use super::*;

    fn preds(pairs: &[(u8, u8)]) -> PredictionSet {
        PredictionSet::new(
            pairs
                .iter()
                .enumerate()
                .map(|(i, &(t, p))| Prediction {
                    id: format!("r{i}"),
                    truth: Label::from_u8(t).unwrap(),
                    predicted: Label::from_u8(p).unwrap(),
                    score: f64::from(p),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn interpolated_percentiles() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.5), 2.0);
        assert!((percentile(&v, 0.1) - 0.4).abs() < 1e-12);
        assert_eq!(percentile(&[7.0], 0.975), 7.0);
    }

    #[test]
    fn identity_resample_reproduces_point() {
        let p = preds(&[(1, 1), (1, 0), (0, 1), (0, 0), (1, 1), (0, 0)]);
        let cfg = BootstrapConfig {
            iterations: 10,
            fraction: 1.0,
            resampler: Resampler::Identity,
            ..Default::default()
        };
        let s = bootstrap(&p, &cfg).unwrap();
        let full = prf(2, 1, 1);
        for (m, v) in s.metrics.iter().zip(full.values()) {
            assert!((m.mean - v).abs() < 1e-15);
            assert_eq!(m.point, v);
        }
    }

    #[test]
    fn preconditions() {
        assert!(bootstrap(&preds(&[(1, 1), (0, 0), (1, 0)]), &BootstrapConfig::default()).is_err());
        let cfg = BootstrapConfig {
            fraction: 0.1,
            ..Default::default()
        };
        assert!(bootstrap(&preds(&[(1, 1), (0, 0), (1, 0), (0, 1)]), &cfg).is_err());
    }

    #[test]
    fn normal_interval_is_clamped() {
        let p = preds(&[(1, 1); 8]);
        let cfg = BootstrapConfig {
            method: CiMethod::Normal,
            ..Default::default()
        };
        let s = bootstrap(&p, &cfg).unwrap();
        assert_eq!((s.f_measure().ci_lo, s.f_measure().ci_hi), (1.0, 1.0));
    }

    #[test]
    fn compare_rejects_mismatched_ids() {
        let a = preds(&[(1, 1), (0, 0), (1, 0), (0, 1)]);
        let mut items = a.items().to_vec();
        items[0].id = "other".into();
        let b = PredictionSet::new(items).unwrap();
        assert!(compare_models(&a, &b, &BootstrapConfig::default()).is_err());
    }

    #[test]
    fn table_layout() {
        let s = bootstrap(&preds(&[(1, 1); 6]), &BootstrapConfig::default()).unwrap();
        let t = render_table(&[("BERT", &s)]);
        assert!(t.starts_with("Model  Precision"));
        assert!(t.contains("BERT   100.0 (100.0, 100.0)"));
    }
}
