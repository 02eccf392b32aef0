//! Skip-gram baseline: context-free word embeddings, mean-pooled document
//! vectors and a log-softmax linear classifier.

mod classifier;
mod skipgram;

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::{Scalar, Tensor};

pub use classifier::{
    classifier_loss, predict_label, train_w2v_classifier, w2v_classify, W2VClassifier, W2VClassifierConfig,
};
pub use skipgram::{sgns_update, train_skipgram};

#[derive(Debug, Clone, PartialEq)]
pub struct W2VConfig {
    pub dim: usize,
    pub window: usize,
    pub negative_samples: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for W2VConfig {
    fn default() -> Self {
        W2VConfig {
            dim: 300,
            window: 8,
            negative_samples: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed: 0,
        }
    }
}

impl W2VConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.epochs == 0 {
            return Err(Error::config("word2vec dim, window and epochs must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("word2vec learning rate must be positive"));
        }
        Ok(())
    }
}

/// Lowercased whitespace tokens with surrounding punctuation trimmed.
pub fn words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| c.is_ascii_punctuation()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// A word-level embedding table.
#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddings<T> {
    words: Vec<String>,
    index: HashMap<String, usize>,
    pub vectors: Tensor<T>,
}

impl<T: Scalar> WordEmbeddings<T> {
    pub fn new(words: Vec<String>, vectors: Tensor<T>) -> Result<Self> {
        if vectors.rank() != 2 || vectors.rows() != words.len() {
            return Err(Error::data("embedding rows must match the word list"));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::data(format!("duplicate word `{w}`")));
            }
        }
        Ok(WordEmbeddings { words, index, vectors })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn get(&self, word: &str) -> Option<&[T]> {
        self.index.get(word).map(|&i| self.vectors.row(i))
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        let (x, y) = (self.get(a)?, self.get(b)?);
        let d = crate::dot(x, y).as_f64();
        let n = crate::dot(x, x).as_f64().sqrt() * crate::dot(y, y).as_f64().sqrt();
        Some(if n == 0.0 { 0.0 } else { d / n })
    }

    /// `<|V|> <dim>` header, then `word v1 … v_dim` per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.len(), self.dim());
        for (i, w) in self.words.iter().enumerate() {
            out.push_str(w);
            for v in self.vectors.row(i) {
                out.push_str(&format!(" {v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "missing header"))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| Error::parse(1, "header must be `<|V|> <dim>`")))
            .collect::<Result<_>>()?;
        let [n, dim] = dims[..] else {
            return Err(Error::parse(1, "header must be `<|V|> <dim>`"));
        };
        let mut words = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * dim);
        for (i, line) in lines {
            let mut parts = line.split(' ');
            let word = parts
                .next()
                .filter(|w| !w.is_empty())
                .ok_or_else(|| Error::parse(i + 1, "missing word"))?;
            let before = data.len();
            for p in parts {
                let v: f64 = p
                    .parse()
                    .map_err(|_| Error::parse(i + 1, format!("bad number `{p}`")))?;
                data.push(T::lit(v));
            }
            if data.len() - before != dim {
                return Err(Error::parse(i + 1, format!("expected {dim} values")));
            }
            words.push(word.to_string());
        }
        if words.len() != n {
            return Err(Error::data(format!("header promises {n} words, found {}", words.len())));
        }
        WordEmbeddings::new(words, Tensor::from_vec(&[n, dim], data))
    }
}

/// Mean of the in-vocabulary word vectors. The flag is set, and the zero
/// vector returned, when no word is in the vocabulary.
pub fn doc_vector<T: Scalar>(text: &str, emb: &WordEmbeddings<T>) -> (Vec<T>, bool) {
    let mut c = vec![T::zero(); emb.dim()];
    let mut n = 0usize;
    for w in words(text) {
        if let Some(v) = emb.get(&w) {
            crate::axpy(T::one(), v, &mut c);
            n += 1;
        }
    }
    if n == 0 {
        return (c, true);
    }
    let inv = T::one() / T::from_usize(n).unwrap();
    for v in &mut c {
        *v *= inv;
    }
    (c, false)
}
