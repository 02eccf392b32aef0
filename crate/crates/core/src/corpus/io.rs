//! Corpus and manifest text formats.
//!
//! Corpus: each record starts with a line `=== REPORT <id> ===` and the raw
//! report text follows up to the next record line. Manifest: tab-separated
//! `id  label(0|1|-)  split`, with optional `# key=value` comment lines.

use std::collections::HashSet;

use super::{parse_report, Label, ManifestEntry, Report, Split, SplitManifest};
use crate::error::{Error, Result};

const RECORD_PREFIX: &str = "=== REPORT ";
const RECORD_SUFFIX: &str = " ===";

fn record_id(line: &str) -> Option<&str> {
    line.strip_prefix(RECORD_PREFIX)?.strip_suffix(RECORD_SUFFIX)
}

pub fn write_corpus(reports: &[Report]) -> String {
    let mut out = String::new();
    for r in reports {
        out.push_str(RECORD_PREFIX);
        out.push_str(&r.id);
        out.push_str(RECORD_SUFFIX);
        out.push('\n');
        out.push_str(&r.raw_text);
        out.push('\n');
    }
    out
}

/// Parses a corpus file. Labels are not part of the corpus; see the manifest.
pub fn read_corpus(text: &str) -> Result<Vec<Report>> {
    let mut reports = Vec::new();
    let mut seen = HashSet::new();
    let mut current: Option<(String, usize, usize)> = None; // id, body start, header line
    let mut offset = 0;
    let mut line_no = 0;

    let mut finish = |cur: Option<(String, usize, usize)>, end: usize, reports: &mut Vec<Report>| -> Result<()> {
        if let Some((id, start, line)) = cur {
            // The writer terminates every body with one newline.
            let body = text[start..end].strip_suffix('\n').unwrap_or(&text[start..end]);
            let report = parse_report(body, &id).map_err(|e| Error::parse(line, format!("report `{id}`: {e}")))?;
            if !seen.insert(id.clone()) {
                return Err(Error::parse(line, format!("duplicate report id `{id}`")));
            }
            reports.push(report);
        }
        Ok(())
    };

    for line in text.split_inclusive('\n') {
        line_no += 1;
        let bare = line.strip_suffix('\n').unwrap_or(line);
        if let Some(id) = record_id(bare) {
            finish(current.take(), offset, &mut reports)?;
            if id.is_empty() {
                return Err(Error::parse(line_no, "empty report id"));
            }
            current = Some((id.to_string(), offset + line.len(), line_no));
        } else if current.is_none() && !bare.trim().is_empty() {
            return Err(Error::parse(line_no, "text before the first report record"));
        }
        offset += line.len();
    }
    finish(current.take(), text.len(), &mut reports)?;
    Ok(reports)
}

pub fn write_manifest(manifest: &SplitManifest) -> String {
    let [a, b, c] = manifest.ratios;
    let mut out = format!("# seed={}\n# ratios={a},{b},{c}\n", manifest.seed);
    for e in &manifest.entries {
        let label = e.label.map_or_else(|| "-".to_string(), |l| l.to_string());
        out.push_str(&format!("{}\t{}\t{}\n", e.id, label, e.split));
    }
    out
}

pub fn read_manifest(text: &str) -> Result<SplitManifest> {
    let mut entries = Vec::new();
    let mut seed = 0;
    let mut ratios = [0.6, 0.2, 0.2];
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(v) = comment.trim().strip_prefix("seed=") {
                seed = v.parse().map_err(|_| Error::parse(n, "bad seed"))?;
            } else if let Some(v) = comment.trim().strip_prefix("ratios=") {
                let parts: Vec<f64> = v
                    .split(',')
                    .map(|p| p.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::parse(n, "bad ratios"))?;
                ratios = parts.try_into().map_err(|_| Error::parse(n, "expected three ratios"))?;
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [id, label, split] = cols[..] else {
            return Err(Error::parse(n, "expected `id<TAB>label<TAB>split`"));
        };
        let label = match label {
            "-" => None,
            l => Some(l.parse::<Label>().map_err(|e| Error::parse(n, e.to_string()))?),
        };
        let split: Split = split.parse().map_err(|e: Error| Error::parse(n, e.to_string()))?;
        if split != Split::Pretrain && label.is_none() {
            return Err(Error::parse(n, format!("`{id}` in split {split} must be labeled")));
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::parse(n, format!("duplicate id `{id}`")));
        }
        entries.push(ManifestEntry {
            id: id.to_string(),
            label,
            split,
        });
    }
    Ok(SplitManifest { entries, seed, ratios })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_round_trip_keeps_trailing_newlines() {
        let reports = vec![
            parse_report("HISTORY: a\nIMPRESSION: b.\n", "x1").unwrap(),
            parse_report("FINDINGS: none", "x2").unwrap(),
            parse_report("\n\nIMPRESSION: c\n\n", "x3").unwrap(),
        ];
        let text = write_corpus(&reports);
        assert_eq!(read_corpus(&text).unwrap(), reports);
    }

    #[test]
    fn corpus_rejects_duplicates_and_empty_bodies() {
        let dup = "=== REPORT a ===\nIMPRESSION: x\n=== REPORT a ===\nIMPRESSION: y\n";
        assert!(read_corpus(dup).is_err());
        let empty = "=== REPORT a ===\n";
        assert!(read_corpus(empty).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let m = SplitManifest {
            entries: vec![
                ManifestEntry {
                    id: "a".into(),
                    label: Some(Label::Positive),
                    split: Split::Train,
                },
                ManifestEntry {
                    id: "b".into(),
                    label: None,
                    split: Split::Pretrain,
                },
                ManifestEntry {
                    id: "c".into(),
                    label: Some(Label::Negative),
                    split: Split::Eval,
                },
            ],
            seed: 42,
            ratios: [0.6, 0.2, 0.2],
        };
        assert_eq!(read_manifest(&write_manifest(&m)).unwrap(), m);
    }

    #[test]
    fn manifest_rejects_unlabeled_train_rows() {
        assert!(read_manifest("a\t-\ttrain\n").is_err());
        assert!(read_manifest("a\t2\ttrain\n").is_err());
        assert!(read_manifest("a\t1\n").is_err());
    }
}
