//! Pair-merge subword learning.
//!
//! Words start as characters, with every non-initial character carrying the
//! `##` continuation marker. The most frequent adjacent pair is merged
//! repeatedly; frequency ties go to the lexicographically smallest pair.

use std::collections::{BTreeMap, BTreeSet};

use super::{pretokenize, Vocabulary, CONTINUATION, NUM_SPECIALS};
use crate::error::{Error, Result};

fn initial_symbols(word: &str) -> Vec<String> {
    word.chars()
        .enumerate()
        .map(|(i, c)| {
            if i == 0 {
                c.to_string()
            } else {
                format!("{CONTINUATION}{c}")
            }
        })
        .collect()
}

fn join(a: &str, b: &str) -> String {
    format!("{a}{}", b.strip_prefix(CONTINUATION).unwrap_or(b))
}

/// Learns up to `max_tokens` subword tokens (alphabet first, then merged
/// tokens in merge order) and the merge sequence.
pub fn learn_merges<'a>(
    texts: impl IntoIterator<Item = &'a str>,
    max_tokens: usize,
) -> Result<(Vec<String>, Vec<(String, String)>)> {
    let mut word_freq: BTreeMap<String, usize> = BTreeMap::new();
    for t in texts {
        for w in pretokenize(t) {
            *word_freq.entry(w).or_insert(0) += 1;
        }
    }
    if word_freq.is_empty() {
        return Err(Error::data("cannot build a vocabulary from an empty corpus"));
    }

    let mut symbol_freq: BTreeMap<String, usize> = BTreeMap::new();
    let mut words: Vec<(Vec<String>, usize)> = Vec::with_capacity(word_freq.len());
    for (w, &f) in &word_freq {
        let syms = initial_symbols(w);
        for s in &syms {
            *symbol_freq.entry(s.clone()).or_insert(0) += f;
        }
        words.push((syms, f));
    }

    let mut alphabet: Vec<(String, usize)> = symbol_freq.into_iter().collect();
    if alphabet.len() > max_tokens {
        alphabet.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        alphabet.truncate(max_tokens);
    }
    let mut tokens: Vec<String> = alphabet.into_iter().map(|(s, _)| s).collect();
    tokens.sort();
    let mut known: BTreeSet<String> = tokens.iter().cloned().collect();
    // Words with characters outside the kept alphabet cannot be segmented.
    words.retain(|(syms, _)| syms.iter().all(|s| known.contains(s)));

    let mut merges = Vec::new();
    while tokens.len() < max_tokens {
        let mut pair_freq: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for (syms, f) in &words {
            for p in syms.windows(2) {
                *pair_freq.entry((p[0].as_str(), p[1].as_str())).or_insert(0) += f;
            }
        }
        // BTreeMap iterates pairs in lexicographic order; keep the first maximum.
        let best = pair_freq
            .iter()
            .fold(None, |best: Option<((&str, &str), usize)>, (&pair, &f)| match best {
                Some((_, bf)) if bf >= f => best,
                _ => Some((pair, f)),
            });
        let Some(((a, b), _)) = best else { break };
        let (a, b) = (a.to_string(), b.to_string());
        let merged = join(&a, &b);

        for (syms, _) in words.iter_mut() {
            let mut i = 0;
            while i + 1 < syms.len() {
                if syms[i] == a && syms[i + 1] == b {
                    syms[i] = merged.clone();
                    syms.remove(i + 1);
                }
                i += 1;
            }
        }
        if known.insert(merged.clone()) {
            tokens.push(merged);
        }
        merges.push((a, b));
    }
    Ok((tokens, merges))
}

/// Vocabulary of at most `target_size` entries, specials included.
pub fn build_vocab<'a>(texts: impl IntoIterator<Item = &'a str>, target_size: usize) -> Result<Vocabulary> {
    if target_size < NUM_SPECIALS + 1 {
        return Err(Error::config(format!(
            "vocabulary size must be at least {}, got {target_size}",
            NUM_SPECIALS + 1
        )));
    }
    let (tokens, _) = learn_merges(texts, target_size - NUM_SPECIALS)?;
    Vocabulary::from_learned(tokens)
}
