use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Pretrain,
    Train,
    Dev,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Pretrain => "pretrain",
            Phase::Train => "train",
            Phase::Dev => "dev",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub index: usize,
    pub phase: Phase,
    pub loss: Option<f64>,
    pub dev_accuracy: Option<f64>,
}

/// Loss series and per-epoch dev accuracy of one training run. Wall-clock
/// time is kept out of the CSV so reruns produce identical bytes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub entries: Vec<LogEntry>,
    pub seed: u64,
    pub hyperparams: BTreeMap<String, String>,
    pub wall_clock_secs: f64,
}

impl TrainLog {
    pub fn new(seed: u64) -> Self {
        TrainLog {
            seed,
            ..Default::default()
        }
    }

    pub fn push(&mut self, index: usize, phase: Phase, loss: Option<f64>, dev_accuracy: Option<f64>) {
        self.entries.push(LogEntry {
            index,
            phase,
            loss,
            dev_accuracy,
        });
    }

    pub fn losses(&self, phase: Phase) -> Vec<f64> {
        self.entries
            .iter()
            .filter(|e| e.phase == phase)
            .filter_map(|e| e.loss)
            .collect()
    }

    pub fn dev_curve(&self) -> Vec<f64> {
        self.entries.iter().filter_map(|e| e.dev_accuracy).collect()
    }

    /// Mean of the first and of the last `window` losses of `phase`.
    pub fn smoothed_ends(&self, phase: Phase, window: usize) -> Option<(f64, f64)> {
        let l = self.losses(phase);
        let w = window.min(l.len());
        if w == 0 {
            return None;
        }
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        Some((mean(&l[..w]), mean(&l[l.len() - w..])))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step_or_epoch,phase,loss,dev_accuracy\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.index,
                e.phase,
                opt(e.loss),
                opt(e.dev_accuracy)
            ));
        }
        out
    }
}
