//! Subword vocabulary, fixed-length encoding and masked-LM corruption.

mod bpe;
mod mask;

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

pub use bpe::{build_vocab, learn_merges};
pub use mask::{mask_tokens, MaskPolicy};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const UNK: TokenId = 1;
pub const CLS: TokenId = 2;
pub const SEP: TokenId = 3;
pub const MASK: TokenId = 4;
pub const NUM_SPECIALS: usize = 5;
pub const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];

/// Marker on subwords that continue a word.
pub const CONTINUATION: &str = "##";

const MAX_WORD_CHARS: usize = 100;

pub fn is_special(id: TokenId) -> bool {
    (id as usize) < NUM_SPECIALS
}

/// Subword inventory with dense ids; ids 0-4 are the special tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    id_of: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Builds a vocabulary from learned tokens, prepending the specials.
    pub fn from_learned(learned: impl IntoIterator<Item = String>) -> Result<Self> {
        let tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).chain(learned).collect();
        Self::from_tokens(tokens)
    }

    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut id_of = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if i < NUM_SPECIALS && t != SPECIAL_TOKENS[i] {
                return Err(Error::data(format!("line {} must be {}", i + 1, SPECIAL_TOKENS[i])));
            }
            if t.is_empty() || t == CONTINUATION {
                return Err(Error::data(format!("invalid vocabulary token at id {i}")));
            }
            if id_of.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::data(format!("duplicate vocabulary token `{t}`")));
            }
        }
        if tokens.len() < NUM_SPECIALS {
            return Err(Error::data("vocabulary is missing special tokens"));
        }
        Ok(Vocabulary { tokens, id_of })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.id_of.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line; line number is the id.
    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }

    /// Greedy longest-match segmentation of one pretoken. `None` when some
    /// suffix cannot be matched.
    pub fn segment(&self, word: &str) -> Option<Vec<TokenId>> {
        let chars: Vec<char> = word.chars().collect();
        if chars.is_empty() || chars.len() > MAX_WORD_CHARS {
            return None;
        }
        let mut out = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut found = None;
            for end in (start + 1..=chars.len()).rev() {
                let piece: String = chars[start..end].iter().collect();
                let key = if start == 0 {
                    piece
                } else {
                    format!("{CONTINUATION}{piece}")
                };
                if let Some(id) = self.id(&key) {
                    found = Some((id, end));
                    break;
                }
            }
            let (id, end) = found?;
            out.push(id);
            start = end;
        }
        Some(out)
    }

    /// Joins tokens back into text: continuation pieces attach to the
    /// previous token, everything else is space-separated. Specials are skipped.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for &id in ids {
            if is_special(id) && id != UNK {
                continue;
            }
            let Some(tok) = self.token(id) else { continue };
            match tok.strip_prefix(CONTINUATION) {
                Some(rest) if !out.is_empty() => out.push_str(rest),
                _ => {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(tok);
                }
            }
        }
        out
    }
}

/// Lowercases, splits on whitespace, and splits punctuation into separate
/// pretokens.
pub fn pretokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut cur = String::new();
        for c in word.chars() {
            if c.is_ascii_punctuation() {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(c.to_string());
            } else {
                cur.extend(c.to_lowercase());
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

/// Fixed-length model input.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub ids: Vec<TokenId>,
    pub attention_mask: Vec<u8>,
    /// Position → original id, for masked-LM positions.
    pub mlm_targets: Option<BTreeMap<usize, TokenId>>,
    /// Set when content tokens were dropped to fit.
    pub truncated: bool,
}

impl TokenSequence {
    pub fn max_len(&self) -> usize {
        self.ids.len()
    }

    /// Number of unpadded positions, `[CLS]` and `[SEP]` included.
    pub fn active_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }

    pub fn active_ids(&self) -> &[TokenId] {
        &self.ids[..self.active_len()]
    }

    /// Positions eligible for masking: unpadded, non-special.
    pub fn maskable_positions(&self) -> Vec<usize> {
        (0..self.ids.len())
            .filter(|&i| self.attention_mask[i] == 1 && !is_special(self.ids[i]))
            .collect()
    }

    /// Checks the layout invariants against a vocabulary size.
    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        let n = self.active_len();
        if self.ids.len() != self.attention_mask.len() {
            return Err(Error::data("ids and attention mask differ in length"));
        }
        if n < 2 || self.ids[0] != CLS || self.ids[n - 1] != SEP {
            return Err(Error::data("sequence must start with [CLS] and end with [SEP]"));
        }
        if self.attention_mask[..n].iter().any(|&m| m != 1) || self.ids[n..].iter().any(|&t| t != PAD) {
            return Err(Error::data("padding must follow [SEP]"));
        }
        if self.ids[1..n - 1].iter().any(|&t| t == SEP || t == CLS) {
            return Err(Error::data("[CLS]/[SEP] inside the sequence"));
        }
        if let Some(&bad) = self.ids.iter().find(|&&t| t as usize >= vocab_size) {
            return Err(Error::data(format!(
                "token id {bad} out of range for vocabulary of {vocab_size}"
            )));
        }
        if let Some(t) = &self.mlm_targets {
            if t.keys().any(|&p| p == 0 || p >= n - 1) {
                return Err(Error::data("masked-LM target outside the content positions"));
            }
        }
        Ok(())
    }
}

/// Encodes `text` as `[CLS] tokens… [SEP] [PAD]…` of length `max_seq_len`,
/// keeping the earliest tokens when it does not fit.
pub fn encode(text: &str, vocab: &Vocabulary, max_seq_len: usize) -> TokenSequence {
    assert!(max_seq_len >= 3, "max_seq_len must be at least 3");
    let mut content = Vec::new();
    for word in pretokenize(text) {
        match vocab.segment(&word) {
            Some(ids) => content.extend(ids),
            None => content.push(UNK),
        }
    }
    let room = max_seq_len - 2;
    let truncated = content.len() > room;
    content.truncate(room);

    let mut ids = Vec::with_capacity(max_seq_len);
    ids.push(CLS);
    ids.extend(content);
    ids.push(SEP);
    let active = ids.len();
    ids.resize(max_seq_len, PAD);
    let mut attention_mask = vec![1u8; active];
    attention_mask.resize(max_seq_len, 0);
    TokenSequence {
        ids,
        attention_mask,
        mlm_targets: None,
        truncated,
    }
}
