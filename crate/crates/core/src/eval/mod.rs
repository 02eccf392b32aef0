//! Confusion-matrix metrics, bootstrap confidence intervals and paired model
//! comparison on held-out predictions.

mod bootstrap;

use std::collections::HashSet;
use std::fmt;

use crate::corpus::Label;
use crate::error::{Error, Result};

pub use bootstrap::{
    bootstrap, bootstrap_with_workers, compare_models, render_table, summary_csv, BootstrapConfig, BootstrapSummary,
    CiMethod, Comparison, MetricSummary, Resampler, METRICS,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub truth: Label,
    pub predicted: Label,
    /// Positive-class score in [0, 1].
    pub score: f64,
}

/// Predictions with unique ids, in a fixed order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionSet {
    items: Vec<Prediction>,
}

impl PredictionSet {
    pub fn new(items: Vec<Prediction>) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &items {
            if !seen.insert(p.id.as_str()) {
                return Err(Error::data(format!("duplicate prediction id `{}`", p.id)));
            }
            if !(0.0..=1.0).contains(&p.score) {
                return Err(Error::data(format!("score {} of `{}` outside [0, 1]", p.score, p.id)));
            }
        }
        Ok(PredictionSet { items })
    }

    pub fn items(&self) -> &[Prediction] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn accuracy(&self) -> f64 {
        let hits = self.items.iter().filter(|p| p.truth == p.predicted).count();
        hits as f64 / self.items.len().max(1) as f64
    }

    /// `report_id<TAB>true<TAB>pred<TAB>score` with a header line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("report_id\ttrue\tpred\tscore\n");
        for p in &self.items {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", p.id, p.truth, p.predicted, p.score));
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut items = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || (i == 0 && line.starts_with("report_id\t")) {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let [id, truth, pred, score] = f[..] else {
                return Err(Error::parse(i + 1, "expected 4 tab-separated fields"));
            };
            let parse_label = |s: &str| s.parse::<Label>().map_err(|e| Error::parse(i + 1, e.to_string()));
            items.push(Prediction {
                id: id.to_string(),
                truth: parse_label(truth)?,
                predicted: parse_label(pred)?,
                score: score
                    .parse()
                    .map_err(|_| Error::parse(i + 1, format!("bad score `{score}`")))?,
            });
        }
        PredictionSet::new(items)
    }
}

/// Counts with the positive (prompt-communication) class as positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn add(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Positive, Label::Positive) => self.tp += 1,
            (Label::Negative, Label::Positive) => self.fp += 1,
            (Label::Positive, Label::Negative) => self.fn_ += 1,
            (Label::Negative, Label::Negative) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn confusion(preds: &PredictionSet) -> Confusion {
    let mut c = Confusion::default();
    for p in preds.items() {
        c.add(p.truth, p.predicted);
    }
    c
}

/// Which metrics hit a zero denominator and were set to 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Degenerate {
    pub precision: bool,
    pub recall: bool,
    pub f_measure: bool,
}

impl Degenerate {
    pub fn any(&self) -> bool {
        self.precision || self.recall || self.f_measure
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub degenerate: Degenerate,
}

impl Prf {
    pub fn values(&self) -> [f64; 3] {
        [self.precision, self.recall, self.f_measure]
    }
}

impl fmt::Display for Prf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "P={:.4} R={:.4} F={:.4}",
            self.precision, self.recall, self.f_measure
        )
    }
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

pub fn prf(tp: usize, fp: usize, fn_: usize) -> Prf {
    let (precision, dp) = ratio(tp as f64, (tp + fp) as f64);
    let (recall, dr) = ratio(tp as f64, (tp + fn_) as f64);
    let (f_measure, df) = ratio(2.0 * precision * recall, precision + recall);
    Prf {
        precision,
        recall,
        f_measure,
        degenerate: Degenerate {
            precision: dp,
            recall: dr,
            f_measure: df,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(pairs: &[(u8, u8)]) -> PredictionSet {
        PredictionSet::new(
            pairs
                .iter()
                .enumerate()
                .map(|(i, &(t, p))| Prediction {
                    id: format!("r{i}"),
                    truth: Label::from_u8(t).unwrap(),
                    predicted: Label::from_u8(p).unwrap(),
                    score: p as f64,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn hand_counted_confusion() {
        let c = confusion(&set(&[(1, 1), (1, 0), (0, 1), (0, 0)]));
        assert_eq!((c.tp, c.fn_, c.fp, c.tn), (1, 1, 1, 1));
        let all = confusion(&set(&vec![(1, 1); 210]));
        assert_eq!((all.tp, all.fp, all.fn_, all.tn), (210, 0, 0, 0));
    }

    #[test]
    fn order_does_not_matter() {
        let pairs = [(1, 1), (0, 1), (1, 0), (0, 0), (1, 1)];
        let mut rev = pairs;
        rev.reverse();
        assert_eq!(confusion(&set(&pairs)), confusion(&set(&rev)));
    }

    #[test]
    fn hand_metrics() {
        let m = prf(8, 2, 2);
        assert!((m.precision - 0.8).abs() < 1e-15 && (m.recall - 0.8).abs() < 1e-15);
        assert!((m.f_measure - 0.8).abs() < 1e-15);
        assert_eq!(prf(5, 0, 0).values(), [1.0, 1.0, 1.0]);
        let d = prf(0, 0, 5);
        assert_eq!(d.values(), [0.0, 0.0, 0.0]);
        assert!(d.degenerate.precision && !d.degenerate.recall && d.degenerate.f_measure);
    }

    #[test]
    fn tsv_round_trip_and_validation() {
        let s = set(&[(1, 0), (0, 0)]);
        assert_eq!(PredictionSet::from_tsv(&s.to_tsv()).unwrap(), s);
        assert!(PredictionSet::from_tsv("a\t1\t1\t0.5\na\t0\t0\t0.1\n").is_err());
        assert!(PredictionSet::from_tsv("a\t1\t1\t1.5\n").is_err());
        assert!(PredictionSet::from_tsv("a\t2\t1\t0.5\n").is_err());
        assert!(PredictionSet::from_tsv("a\t1\t1\n").is_err());
    }
}
