use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{TokenSequence, MASK, NUM_SPECIALS};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Selection rate and the replace-with-[MASK] / random / keep split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskPolicy {
    pub p_select: f64,
    pub p_mask: f64,
    pub p_random: f64,
    pub p_keep: f64,
}

impl Default for MaskPolicy {
    fn default() -> Self {
        MaskPolicy {
            p_select: 0.15,
            p_mask: 0.8,
            p_random: 0.1,
            p_keep: 0.1,
        }
    }
}

/// Corrupts maskable positions and records their original ids. At least one
/// position is always selected.
pub fn mask_tokens(seq: &TokenSequence, vocab_size: usize, rng: &mut Rng, policy: MaskPolicy) -> Result<TokenSequence> {
    if (policy.p_mask + policy.p_random + policy.p_keep - 1.0).abs() > 1e-9 {
        return Err(Error::config("mask/random/keep probabilities must sum to 1"));
    }
    let candidates = seq.maskable_positions();
    if candidates.is_empty() {
        return Err(Error::data("sequence has no maskable positions"));
    }
    let mut selected: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|_| rng.gen_bool(policy.p_select))
        .collect();
    if selected.is_empty() {
        selected.push(*candidates.choose(rng).expect("nonempty"));
    }

    let mut out = seq.clone();
    let mut targets = BTreeMap::new();
    for pos in selected {
        targets.insert(pos, seq.ids[pos]);
        let r: f64 = rng.gen();
        if r < policy.p_mask {
            out.ids[pos] = MASK;
        } else if r < policy.p_mask + policy.p_random && vocab_size > NUM_SPECIALS {
            out.ids[pos] = rng.gen_range(NUM_SPECIALS as u32..vocab_size as u32);
        }
    }
    out.mlm_targets = Some(targets);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::tokenizer::{encode, is_special, Vocabulary};

    fn vocab() -> Vocabulary {
        Vocabulary::from_learned(["a", "b", "c", "d"].iter().map(|s| s.to_string())).unwrap()
    }

    #[test]
    fn specials_never_selected() {
        let v = vocab();
        let s = encode("a b c d a b", &v, 12);
        let mut r = rng::seeded(1);
        for _ in 0..10_000 {
            let m = mask_tokens(&s, v.len(), &mut r, MaskPolicy::default()).unwrap();
            let t = m.mlm_targets.as_ref().unwrap();
            assert!(!t.is_empty());
            for (&p, &orig) in t {
                assert!(!is_special(orig));
                assert_eq!(s.attention_mask[p], 1);
            }
            for i in 0..s.ids.len() {
                if !t.contains_key(&i) {
                    assert_eq!(m.ids[i], s.ids[i]);
                }
            }
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let v = vocab();
        let s = encode("a b c d a b c", &v, 12);
        let a = mask_tokens(&s, v.len(), &mut rng::seeded(5), MaskPolicy::default()).unwrap();
        let b = mask_tokens(&s, v.len(), &mut rng::seeded(5), MaskPolicy::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_maskable_positions_is_an_error() {
        let v = vocab();
        let s = encode("", &v, 5);
        assert!(mask_tokens(&s, v.len(), &mut rng::seeded(1), MaskPolicy::default()).is_err());
    }

    #[test]
    fn selection_rate_monte_carlo() {
        let v = vocab();
        // 100 maskable positions per sequence, 1,000 sequences.
        let text = vec!["a b c d"; 25].join(" ");
        let s = encode(&text, &v, 102);
        assert_eq!(s.maskable_positions().len(), 100);
        let mut r = rng::seeded(11);
        let mut selected = 0usize;
        let mut replaced = [0usize; 3];
        for _ in 0..1000 {
            let m = mask_tokens(&s, v.len(), &mut r, MaskPolicy::default()).unwrap();
            for (&p, &orig) in m.mlm_targets.as_ref().unwrap() {
                selected += 1;
                match m.ids[p] {
                    MASK => replaced[0] += 1,
                    x if x == orig => replaced[2] += 1,
                    _ => replaced[1] += 1,
                }
            }
        }
        let rate = selected as f64 / 100_000.0;
        assert!((rate - 0.15).abs() < 0.005, "selection rate {rate}");
        let mask_frac = replaced[0] as f64 / selected as f64;
        assert!((mask_frac - 0.8).abs() < 0.02, "mask fraction {mask_frac}");
    }
}
