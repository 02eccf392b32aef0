use std::collections::BTreeMap;

use super::{Report, HEADINGS};
use crate::error::{Error, Result};

/// Whitespace-delimited token count.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Section length distribution in words.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthStats {
    pub histogram: BTreeMap<usize, usize>,
    /// Reports that lack the section.
    pub missing: usize,
    pub min: Option<usize>,
    pub median: Option<f64>,
    pub mean: Option<f64>,
    pub max: Option<usize>,
}

impl LengthStats {
    /// Most frequent length; ties go to the shorter length.
    pub fn mode(&self) -> Option<usize> {
        self.histogram
            .iter()
            .fold(None, |best: Option<(usize, usize)>, (&len, &count)| match best {
                Some((_, c)) if c >= count => best,
                _ => Some((len, count)),
            })
            .map(|(len, _)| len)
    }

    pub fn total(&self) -> usize {
        self.histogram.values().sum()
    }

    /// `words,count` lines.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("words,count\n");
        for (w, c) in &self.histogram {
            out.push_str(&format!("{w},{c}\n"));
        }
        out
    }
}

pub fn length_histogram(reports: &[Report], section: &str) -> Result<LengthStats> {
    let section = section.to_ascii_lowercase();
    if !HEADINGS.contains(&section.as_str()) {
        return Err(Error::config(format!("unknown section `{section}`")));
    }
    let mut lengths = Vec::new();
    let mut missing = 0;
    for r in reports {
        match r.section(&section) {
            Some(text) => lengths.push(word_count(text)),
            None => missing += 1,
        }
    }
    let mut histogram = BTreeMap::new();
    for &l in &lengths {
        *histogram.entry(l).or_insert(0) += 1;
    }
    lengths.sort_unstable();
    let n = lengths.len();
    let median = match n {
        0 => None,
        _ if n % 2 == 1 => Some(lengths[n / 2] as f64),
        _ => Some((lengths[n / 2 - 1] + lengths[n / 2]) as f64 / 2.0),
    };
    let mean = (n > 0).then(|| lengths.iter().sum::<usize>() as f64 / n as f64);
    Ok(LengthStats {
        histogram,
        missing,
        min: lengths.first().copied(),
        median,
        mean,
        max: lengths.last().copied(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_report;

    fn rep(id: &str, text: &str) -> Report {
        parse_report(text, id).unwrap()
    }

    #[test]
    fn single_report() {
        let s = length_histogram(&[rep("a", "IMPRESSION: a b c")], "impression").unwrap();
        assert_eq!(s.histogram, BTreeMap::from([(3, 1)]));
        assert_eq!(s.mean, Some(3.0));
    }

    #[test]
    fn mean_and_median_of_two() {
        let r = [
            rep("a", "IMPRESSION: a b"),
            rep("b", "IMPRESSION: a b c d"),
            rep("c", "FINDINGS: x"),
        ];
        let s = length_histogram(&r, "impression").unwrap();
        assert_eq!(s.mean, Some(3.0));
        assert_eq!(s.median, Some(3.0));
        assert_eq!(s.missing, 1);
    }

    #[test]
    fn empty_input_empty_histogram() {
        let s = length_histogram(&[], "impression").unwrap();
        assert!(s.histogram.is_empty());
        assert_eq!(s.mode(), None);
    }

    #[test]
    fn unknown_section_rejected() {
        assert!(length_histogram(&[], "addendum").is_err());
    }
}
