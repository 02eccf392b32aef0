use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use super::{Label, Report};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Pretrain,
    Train,
    Dev,
    Eval,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Pretrain => "pretrain",
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Eval => "eval",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pretrain" => Ok(Split::Pretrain),
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "eval" => Ok(Split::Eval),
            _ => Err(Error::data(format!("unknown split `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub label: Option<Label>,
    pub split: Split,
}

/// Assignment of reports to pretrain/train/dev/eval.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitManifest {
    pub entries: Vec<ManifestEntry>,
    pub seed: u64,
    /// train / dev / eval fractions.
    pub ratios: [f64; 3],
}

impl SplitManifest {
    pub fn ids(&self, split: Split) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.id.as_str())
            .collect()
    }

    pub fn size(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }

    /// `[negative, positive]` counts per split.
    pub fn class_counts(&self) -> BTreeMap<Split, [usize; 2]> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            let c = counts.entry(e.split).or_insert([0usize; 2]);
            if let Some(l) = e.label {
                c[l.index()] += 1;
            }
        }
        counts
    }

    /// Appends unlabeled pre-training reports.
    pub fn add_pretrain<'a>(&mut self, ids: impl IntoIterator<Item = &'a str>) {
        for id in ids {
            self.entries.push(ManifestEntry {
                id: id.to_string(),
                label: None,
                split: Split::Pretrain,
            });
        }
    }

    pub fn lookup(&self) -> BTreeMap<&str, &ManifestEntry> {
        self.entries.iter().map(|e| (e.id.as_str(), e)).collect()
    }

    /// Reports of `split`, in manifest order, with labels attached.
    pub fn select<'a>(&self, reports: &'a [Report], split: Split) -> Result<Vec<Report>> {
        let by_id: BTreeMap<&str, &'a Report> = reports.iter().map(|r| (r.id.as_str(), r)).collect();
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| {
                let r = by_id
                    .get(e.id.as_str())
                    .ok_or_else(|| Error::data(format!("manifest id `{}` not in corpus", e.id)))?;
                let mut r = (*r).clone();
                r.label = e.label;
                Ok(r)
            })
            .collect()
    }
}

/// Largest-remainder allocation of `n` items over `ratios`; ties in the
/// fractional part go to the earlier split.
pub(crate) fn allocate(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut sizes = [0usize; 3];
    for (s, e) in sizes.iter_mut().zip(&exact) {
        *s = e.floor() as usize;
    }
    let mut remaining = n - sizes.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut k = 0;
    while remaining > 0 {
        sizes[order[k % 3]] += 1;
        remaining -= 1;
        k += 1;
    }
    sizes
}

/// Shuffles labeled reports by `seed` and allocates contiguous train/dev/eval
/// blocks.
pub fn split_dataset(labeled: &[Report], ratios: [f64; 3], seed: u64) -> Result<SplitManifest> {
    if labeled.len() < 3 {
        return Err(Error::data(format!(
            "need at least 3 labeled reports to split, got {}",
            labeled.len()
        )));
    }
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!(
            "split ratios must be in [0,1] and sum to 1, got {ratios:?}"
        )));
    }
    let mut seen = HashSet::new();
    for r in labeled {
        if r.label.is_none() {
            return Err(Error::data(format!("report `{}` has no label", r.id)));
        }
        if !seen.insert(r.id.as_str()) {
            return Err(Error::data(format!("duplicate report id `{}`", r.id)));
        }
    }

    let mut order: Vec<usize> = (0..labeled.len()).collect();
    order.shuffle(&mut rng::seeded(seed));
    let [n_train, n_dev, _] = allocate(labeled.len(), ratios);

    let entries = order
        .iter()
        .enumerate()
        .map(|(pos, &i)| {
            let split = if pos < n_train {
                Split::Train
            } else if pos < n_train + n_dev {
                Split::Dev
            } else {
                Split::Eval
            };
            ManifestEntry {
                id: labeled[i].id.clone(),
                label: labeled[i].label,
                split,
            }
        })
        .collect();

    Ok(SplitManifest { entries, seed, ratios })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(n: usize) -> Vec<Report> {
        (0..n)
            .map(|i| Report {
                id: format!("L{i:05}"),
                raw_text: format!("IMPRESSION: r{i}"),
                sections: BTreeMap::new(),
                label: Some(if i % 2 == 0 { Label::Positive } else { Label::Negative }),
            })
            .collect()
    }

    #[test]
    fn table_one_sizes() {
        assert_eq!(allocate(2124, [0.6, 0.2, 0.2]), [1274, 425, 425]);
        let m = split_dataset(&labeled(2124), [0.6, 0.2, 0.2], 3).unwrap();
        assert_eq!(
            (m.size(Split::Train), m.size(Split::Dev), m.size(Split::Eval)),
            (1274, 425, 425)
        );
    }

    #[test]
    fn ten_reports_split_six_two_two() {
        assert_eq!(allocate(10, [0.6, 0.2, 0.2]), [6, 2, 2]);
    }

    #[test]
    fn same_seed_same_manifest() {
        let r = labeled(50);
        assert_eq!(
            split_dataset(&r, [0.6, 0.2, 0.2], 9).unwrap(),
            split_dataset(&r, [0.6, 0.2, 0.2], 9).unwrap()
        );
        assert_ne!(
            split_dataset(&r, [0.6, 0.2, 0.2], 9).unwrap(),
            split_dataset(&r, [0.6, 0.2, 0.2], 10).unwrap()
        );
    }

    #[test]
    fn rejects_tiny_and_unlabeled_inputs() {
        assert!(split_dataset(&labeled(2), [0.6, 0.2, 0.2], 1).is_err());
        let mut r = labeled(5);
        r[2].label = None;
        assert!(split_dataset(&r, [0.6, 0.2, 0.2], 1).is_err());
        assert!(split_dataset(&labeled(5), [0.5, 0.2, 0.2], 1).is_err());
    }

    #[test]
    fn class_counts_cover_every_report() {
        let m = split_dataset(&labeled(101), [0.6, 0.2, 0.2], 5).unwrap();
        let total: usize = m.class_counts().values().map(|c| c[0] + c[1]).sum();
        assert_eq!(total, 101);
    }
}
