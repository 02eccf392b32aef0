//! Report ingestion: section parsing, corpus and manifest files, synthetic
//! generation, dataset splits and length statistics.

mod generate;
mod io;
mod split;
mod stats;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use generate::{generate_corpus, GeneratedCorpus, GeneratorConfig, LengthDistribution, Lexicon};
pub use io::{read_corpus, read_manifest, write_corpus, write_manifest};
pub use split::{split_dataset, ManifestEntry, Split, SplitManifest};
pub use stats::{length_histogram, word_count, LengthStats};

/// Section headings recognized at the start of a line, followed by `:`.
pub const HEADINGS: [&str; 5] = ["impression", "findings", "history", "technique", "comparison"];

pub const IMPRESSION: &str = "impression";

/// Binary urgency label. `Positive` means prompt communication is required.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Negative = 0,
    Positive = 1,
}

impl Label {
    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::Negative),
            1 => Some(Label::Positive),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "0" => Ok(Label::Negative),
            "1" => Ok(Label::Positive),
            _ => Err(Error::data(format!("label must be 0 or 1, got `{s}`"))),
        }
    }
}

/// A parsed radiology report.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub id: String,
    pub raw_text: String,
    /// Normalized (lowercase) heading → trimmed section text. Only nonempty
    /// sections are kept; the first occurrence of a heading wins.
    pub sections: BTreeMap<String, String>,
    pub label: Option<Label>,
}

impl Report {
    pub fn impression(&self) -> Option<&str> {
        self.section(IMPRESSION)
    }

    pub fn section(&self, name: &str) -> Option<&str> {
        self.sections.get(name).map(String::as_str)
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }
}

/// Matches `HEADING:` at the very start of `line`, case-insensitively.
fn heading_at(line: &str) -> Option<&'static str> {
    HEADINGS.iter().copied().find(|h| {
        line.len() > h.len()
            && line.as_bytes()[h.len()] == b':'
            && line.as_bytes()[..h.len()].eq_ignore_ascii_case(h.as_bytes())
    })
}

/// Splits `raw_text` into its headed sections.
pub fn parse_report(raw_text: &str, id: &str) -> Result<Report> {
    if raw_text.is_empty() {
        return Err(Error::EmptyReport);
    }
    if id.is_empty() {
        return Err(Error::data("report id must be nonempty"));
    }

    // (heading, content start, heading line start)
    let mut marks: Vec<(&'static str, usize, usize)> = Vec::new();
    let mut offset = 0;
    for line in raw_text.split_inclusive('\n') {
        if let Some(h) = heading_at(line) {
            marks.push((h, offset + h.len() + 1, offset));
        }
        offset += line.len();
    }

    let mut sections = BTreeMap::new();
    for (i, &(heading, start, _)) in marks.iter().enumerate() {
        let end = marks.get(i + 1).map_or(raw_text.len(), |m| m.2);
        let text = raw_text[start..end].trim();
        if !text.is_empty() && !sections.contains_key(heading) {
            sections.insert(heading.to_string(), text.to_string());
        }
    }

    Ok(Report {
        id: id.to_string(),
        raw_text: raw_text.to_string(),
        sections,
        label: None,
    })
}
