//! Synthetic report corpora.
//!
//! Each impression mixes finding sentences built from phrase and template
//! lexicons. A labeled positive report has at least one urgent finding that is
//! stated affirmatively; a negative report mentions urgent findings only under
//! a negation template. The count of negated mentions is drawn from the same
//! range for both classes, so the bag of words alone does not reveal the label:
//! whether an urgent phrase is negated depends on word order.

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{parse_report, Label, Report};
use crate::error::{Error, Result};
use crate::kv::KvFile;
use crate::rng::{self, Rng};

const SLOT: &str = "{}";

/// Phrase and template inventories. Templates contain one `{}` slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    pub urgent: Vec<String>,
    pub benign: Vec<String>,
    /// Negation templates; the text before `{}` is the negation trigger.
    pub negations: Vec<String>,
    pub affirmations: Vec<String>,
    pub fillers: Vec<String>,
    /// Optional communication statements, mostly attached to positives.
    pub cues: Vec<String>,
    pub histories: Vec<String>,
    pub techniques: Vec<String>,
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon {
            urgent: strings(&[
                "pneumothorax",
                "pulmonary embolism",
                "free intraperitoneal air",
                "aortic dissection",
                "intracranial hemorrhage",
                "acute appendicitis",
                "small bowel obstruction",
                "cord compression",
                "ectopic pregnancy",
                "acute infarct",
                "testicular torsion",
                "displaced fracture",
            ]),
            benign: strings(&[
                "atelectasis",
                "degenerative changes",
                "hiatal hernia",
                "calcified granuloma",
                "mild cardiomegaly",
                "renal cyst",
                "diverticulosis",
                "osteopenia",
                "pleural thickening",
                "scarring",
                "thyroid nodule",
                "gallstones",
            ]),
            negations: strings(&[
                "no {}",
                "no evidence of {}",
                "negative for {}",
                "without {}",
                "no definite {}",
            ]),
            affirmations: strings(&[
                "{}",
                "there is {}",
                "findings consistent with {}",
                "new {}",
                "{} is seen",
                "likely {}",
            ]),
            fillers: strings(&[
                "stable",
                "unchanged",
                "otherwise unremarkable",
                "lines and tubes unchanged",
                "heart size is normal",
                "the lungs are otherwise clear",
                "osseous structures are intact",
                "correlate with clinical history",
                "no change from the prior examination",
                "soft tissues demonstrate expected postoperative changes",
                "follow up imaging is recommended in three months",
            ]),
            cues: strings(&[
                "findings were discussed with the referring physician",
                "critical result called to the ordering provider",
                "results communicated by telephone",
            ]),
            histories: strings(&[
                "cough",
                "chest pain",
                "abdominal pain",
                "trauma",
                "headache",
                "shortness of breath",
                "fever",
                "follow up",
            ]),
            techniques: strings(&[
                "frontal and lateral views of the chest",
                "axial images with intravenous contrast",
                "noncontrast axial images",
                "multiplanar images without contrast",
            ]),
        }
    }
}

impl Lexicon {
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let d = Lexicon::default();
        let pick = |key: &str, fallback: Vec<String>| kv.list(key).unwrap_or(fallback);
        let lex = Lexicon {
            urgent: pick("urgent", d.urgent),
            benign: pick("benign", d.benign),
            negations: pick("negations", d.negations),
            affirmations: pick("affirmations", d.affirmations),
            fillers: pick("fillers", d.fillers),
            cues: pick("cues", d.cues),
            histories: pick("histories", d.histories),
            techniques: pick("techniques", d.techniques),
        };
        lex.validate()?;
        Ok(lex)
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::default();
        kv.set("urgent", self.urgent.join(", "));
        kv.set("benign", self.benign.join(", "));
        kv.set("negations", self.negations.join(", "));
        kv.set("affirmations", self.affirmations.join(", "));
        kv.set("fillers", self.fillers.join(", "));
        kv.set("cues", self.cues.join(", "));
        kv.set("histories", self.histories.join(", "));
        kv.set("techniques", self.techniques.join(", "));
        kv
    }

    /// Negation triggers: the normalized text preceding `{}` in each template.
    pub fn negation_triggers(&self) -> Vec<String> {
        self.negations
            .iter()
            .map(|t| normalize(t.split(SLOT).next().unwrap_or("")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, list) in [
            ("urgent", &self.urgent),
            ("benign", &self.benign),
            ("negations", &self.negations),
            ("affirmations", &self.affirmations),
            ("fillers", &self.fillers),
            ("histories", &self.histories),
            ("techniques", &self.techniques),
        ] {
            if list.is_empty() {
                return Err(Error::config(format!("lexicon category `{name}` is empty")));
            }
        }
        for t in self.negations.iter().chain(&self.affirmations) {
            if t.matches(SLOT).count() != 1 {
                return Err(Error::config(format!("template `{t}` needs exactly one `{{}}`")));
            }
        }
        let triggers = self.negation_triggers();
        if triggers.iter().any(|t| t.is_empty()) {
            return Err(Error::config("negation templates must put the trigger before `{}`"));
        }
        for a in &self.affirmations {
            let words = normalize(a.split(SLOT).next().unwrap_or(""));
            if triggers.iter().any(|t| contains_words(&words, t)) {
                return Err(Error::config(format!("affirmation `{a}` contains a negation trigger")));
            }
        }
        for u in &self.urgent {
            let u = normalize(u);
            if self.benign.iter().any(|b| {
                let b = normalize(b);
                contains_words(&b, &u) || contains_words(&u, &b)
            }) {
                return Err(Error::config(format!("urgent phrase `{u}` overlaps a benign phrase")));
            }
            for text in self
                .fillers
                .iter()
                .chain(&self.cues)
                .chain(&self.affirmations)
                .chain(&self.negations)
            {
                if contains_words(&normalize(text), &u) {
                    return Err(Error::config(format!("`{text}` contains urgent phrase `{u}`")));
                }
            }
        }
        Ok(())
    }
}

/// Lowercase, punctuation-free, single-spaced.
pub(crate) fn normalize(text: &str) -> String {
    text.split(|c: char| c.is_whitespace() || (c.is_ascii_punctuation() && c != '{' && c != '}'))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Word-boundary containment on normalized strings.
pub(crate) fn contains_words(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let h = format!(" {haystack} ");
    h.contains(&format!(" {needle} "))
}

/// Triangular distribution over impression length, in words.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthDistribution {
    pub min: usize,
    pub mode: usize,
    pub max: usize,
}

impl LengthDistribution {
    fn sample(&self, rng: &mut Rng) -> usize {
        let (a, c, b) = (self.min as f64, self.mode as f64, self.max as f64);
        if b <= a {
            return self.min;
        }
        let u: f64 = rng.gen();
        let fc = (c - a) / (b - a);
        let x = if u < fc {
            a + (u * (b - a) * (c - a)).sqrt()
        } else {
            b - ((1.0 - u) * (b - a) * (b - c)).sqrt()
        };
        (x.round() as usize).clamp(self.min, self.max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub n_labeled: usize,
    pub n_pretrain: usize,
    pub positive_fraction: f64,
    pub lexicon: Lexicon,
    pub length: LengthDistribution,
    pub seed: u64,
    /// Upper bounds on finding mentions per impression.
    pub max_urgent: usize,
    pub max_benign: usize,
    pub cue_rate_positive: f64,
    pub cue_rate_negative: f64,
    /// Fraction of pre-training reports written without an impression heading.
    pub missing_impression_rate: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_labeled: 2124,
            n_pretrain: 2000,
            positive_fraction: 0.5,
            lexicon: Lexicon::default(),
            length: LengthDistribution {
                min: 4,
                mode: 10,
                max: 20,
            },
            seed: 7,
            max_urgent: 1,
            max_benign: 1,
            cue_rate_positive: 0.3,
            cue_rate_negative: 0.05,
            missing_impression_rate: 0.1,
        }
    }
}

impl GeneratorConfig {
    pub fn positive_count(&self) -> usize {
        (self.n_labeled as f64 * self.positive_fraction).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.lexicon.validate()?;
        if self.n_labeled < 2 {
            return Err(Error::config(format!(
                "n_labeled must be at least 2, got {}",
                self.n_labeled
            )));
        }
        if !(0.0..=1.0).contains(&self.positive_fraction) {
            return Err(Error::config("positive_fraction must lie in [0, 1]"));
        }
        if self.positive_fraction > 0.0 && self.positive_count() == 0 {
            return Err(Error::config("positive_fraction > 0 rounds to zero positive reports"));
        }
        let l = self.length;
        if !(l.min <= l.mode && l.mode <= l.max) || l.max == 0 {
            return Err(Error::config(format!(
                "length distribution must satisfy min <= mode <= max, got {l:?}"
            )));
        }
        if self.max_urgent == 0 || self.max_benign == 0 {
            return Err(Error::config("max_urgent and max_benign must be positive"));
        }
        for r in [
            self.cue_rate_positive,
            self.cue_rate_negative,
            self.missing_impression_rate,
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::config("rates must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCorpus {
    pub pretrain: Vec<Report>,
    pub labeled: Vec<Report>,
}

fn sentence(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(first) => format!("{}{}.", first.to_uppercase(), chars.as_str()),
        None => String::new(),
    }
}

fn fill(template: &str, phrase: &str) -> String {
    template.replacen(SLOT, phrase, 1)
}

fn choose<'a>(rng: &mut Rng, items: &'a [String]) -> &'a str {
    items.choose(rng).expect("validated nonempty")
}

struct Impression {
    /// Finding sentences (also restated in the findings section).
    findings: Vec<String>,
    text: String,
}

fn impression(cfg: &GeneratorConfig, label: Label, rng: &mut Rng) -> Impression {
    let lex = &cfg.lexicon;
    let n_urgent = rng.gen_range(1..=cfg.max_urgent);
    let n_benign = rng.gen_range(1..=cfg.max_benign);
    // Same range for both classes.
    let n_negated = rng.gen_range(n_urgent..n_urgent + n_benign);

    let urgent: Vec<&String> = lex
        .urgent
        .choose_multiple(rng, n_urgent.min(lex.urgent.len()))
        .collect();
    let benign: Vec<&String> = lex
        .benign
        .choose_multiple(rng, n_benign.min(lex.benign.len()))
        .collect();

    // (phrase, is_urgent)
    let mut mentions: Vec<(&str, bool)> = urgent.iter().map(|p| (p.as_str(), true)).collect();
    mentions.extend(benign.iter().map(|p| (p.as_str(), false)));
    let urgent_idx: Vec<usize> = (0..urgent.len()).collect();
    let benign_idx: Vec<usize> = (urgent.len()..mentions.len()).collect();

    let mut negated = vec![false; mentions.len()];
    match label {
        Label::Negative => {
            for &i in &urgent_idx {
                negated[i] = true;
            }
            let extra = n_negated.saturating_sub(urgent_idx.len()).min(benign_idx.len());
            for &i in benign_idx.choose_multiple(rng, extra) {
                negated[i] = true;
            }
        }
        Label::Positive => {
            // Keep at least one urgent mention affirmative.
            let keep = *urgent_idx.choose(rng).expect("at least one urgent mention");
            let pool: Vec<usize> = (0..mentions.len()).filter(|&i| i != keep).collect();
            for &i in pool.choose_multiple(rng, n_negated.min(pool.len())) {
                negated[i] = true;
            }
        }
    }

    let mut findings: Vec<String> = mentions
        .iter()
        .zip(&negated)
        .map(|(&(phrase, _), &neg)| {
            let templates = if neg { &lex.negations } else { &lex.affirmations };
            sentence(&fill(choose(rng, templates), phrase))
        })
        .collect();
    findings.shuffle(rng);

    let mut sentences = findings.clone();
    let cue_rate = match label {
        Label::Positive => cfg.cue_rate_positive,
        Label::Negative => cfg.cue_rate_negative,
    };
    if !lex.cues.is_empty() && rng.gen_bool(cue_rate) {
        sentences.push(sentence(choose(rng, &lex.cues)));
    }

    let target = cfg.length.sample(rng);
    let mut words: usize = sentences.iter().map(|s| super::word_count(s)).sum();
    while words < target {
        let remaining = target - words;
        let fitting: Vec<&String> = lex
            .fillers
            .iter()
            .filter(|f| super::word_count(f) <= remaining)
            .collect();
        let Some(f) = fitting.choose(rng) else { break };
        let at = rng.gen_range(0..=sentences.len());
        sentences.insert(at, sentence(f));
        words += super::word_count(f);
    }

    Impression {
        findings,
        text: sentences.join(" "),
    }
}

fn report_text(cfg: &GeneratorConfig, imp: &Impression, with_impression: bool, rng: &mut Rng) -> String {
    let lex = &cfg.lexicon;
    let mut findings = imp.findings.clone();
    findings.shuffle(rng);
    for _ in 0..rng.gen_range(1..=2) {
        findings.push(sentence(choose(rng, &lex.fillers)));
    }
    let mut text = format!(
        "EXAM: radiology study\nHISTORY: {}.\nTECHNIQUE: {}.\nCOMPARISON: None.\nFINDINGS: {}\n",
        choose(rng, &lex.histories),
        choose(rng, &lex.techniques),
        findings.join(" "),
    );
    if with_impression {
        text.push_str("IMPRESSION: ");
        text.push_str(&imp.text);
        text.push('\n');
    }
    text
}

/// Deterministic synthetic corpus; every report draws from its own keyed
/// random stream.
pub fn generate_corpus(cfg: &GeneratorConfig) -> Result<GeneratedCorpus> {
    cfg.validate()?;

    let n_pos = cfg.positive_count();
    let mut labels: Vec<Label> = (0..cfg.n_labeled)
        .map(|i| if i < n_pos { Label::Positive } else { Label::Negative })
        .collect();
    labels.shuffle(&mut rng::keyed(cfg.seed, 0));

    let labeled_seed = rng::derive_seed(cfg.seed, "labeled");
    let labeled = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let mut r = rng::keyed(labeled_seed, i as u64);
            let imp = impression(cfg, label, &mut r);
            let text = report_text(cfg, &imp, true, &mut r);
            parse_report(&text, &format!("L{:05}", i + 1)).map(|rep| rep.with_label(label))
        })
        .collect::<Result<Vec<_>>>()?;

    let pretrain_seed = rng::derive_seed(cfg.seed, "pretrain");
    let pretrain = (0..cfg.n_pretrain)
        .map(|i| {
            let mut r = rng::keyed(pretrain_seed, i as u64);
            let label = if r.gen_bool(cfg.positive_fraction) {
                Label::Positive
            } else {
                Label::Negative
            };
            let imp = impression(cfg, label, &mut r);
            let with_impression = !r.gen_bool(cfg.missing_impression_rate);
            let text = report_text(cfg, &imp, with_impression, &mut r);
            parse_report(&text, &format!("P{:05}", i + 1))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(GeneratedCorpus { pretrain, labeled })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize) -> GeneratorConfig {
        GeneratorConfig {
            n_labeled: n,
            n_pretrain: 20,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn exact_positive_count() {
        let c = generate_corpus(&GeneratorConfig {
            positive_fraction: 0.5,
            ..small(10)
        })
        .unwrap();
        let pos = c.labeled.iter().filter(|r| r.label == Some(Label::Positive)).count();
        assert_eq!((pos, c.labeled.len() - pos), (5, 5));
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = small(30);
        assert_eq!(generate_corpus(&cfg).unwrap(), generate_corpus(&cfg).unwrap());
        let other = GeneratorConfig { seed: 8, ..cfg.clone() };
        assert_ne!(generate_corpus(&cfg).unwrap(), generate_corpus(&other).unwrap());
    }

    #[test]
    fn config_errors() {
        assert!(generate_corpus(&small(1)).is_err());
        assert!(generate_corpus(&GeneratorConfig {
            positive_fraction: 0.1,
            ..small(4)
        })
        .is_err());
        let mut lex = Lexicon::default();
        lex.benign.push("pneumothorax".into());
        assert!(generate_corpus(&GeneratorConfig {
            lexicon: lex,
            ..small(4)
        })
        .is_err());
        let mut lex = Lexicon::default();
        lex.fillers.clear();
        assert!(generate_corpus(&GeneratorConfig {
            lexicon: lex,
            ..small(4)
        })
        .is_err());
    }

    #[test]
    fn every_report_has_an_impression_when_labeled() {
        let c = generate_corpus(&small(40)).unwrap();
        assert!(c.labeled.iter().all(|r| r.impression().is_some()));
        assert!(c.pretrain.iter().all(|r| r.section("findings").is_some()));
    }

    #[test]
    fn lexicon_kv_round_trip() {
        let lex = Lexicon::default();
        assert_eq!(Lexicon::from_kv(&lex.to_kv()).unwrap(), lex);
    }

    #[test]
    fn normalize_strips_punctuation() {
        assert_eq!(
            normalize("No  evidence of Pneumothorax."),
            "no evidence of pneumothorax"
        );
        assert!(contains_words("no evidence of free air", "free air"));
        assert!(!contains_words("no airway", "air"));
    }
}
