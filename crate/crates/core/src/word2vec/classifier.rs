use rand::seq::SliceRandom;

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::optim::{adam_step_masked, AdamState, Phase, TrainLog};
use crate::{log_sum_exp, rng, ParamSet, Scalar, Tensor};

/// Linear layer over document vectors: logits = W·C + bias.
#[derive(Debug, Clone, PartialEq)]
pub struct W2VClassifier<T> {
    pub w: Tensor<T>,
    pub bias: Tensor<T>,
    /// When false the bias stays zero, matching P = log(softmax(CWᵀ)) exactly.
    pub use_bias: bool,
}

impl<T: Scalar> W2VClassifier<T> {
    pub fn zeros(dim: usize, use_bias: bool) -> Self {
        W2VClassifier {
            w: Tensor::zeros(&[2, dim]),
            bias: Tensor::zeros(&[2]),
            use_bias,
        }
    }

    pub fn dim(&self) -> usize {
        self.w.cols()
    }

    /// `use_bias`, dim, then one row per class (W row followed by the bias).
    pub fn to_text(&self) -> String {
        let mut out = format!("use_bias {}\ndim {}\n", self.use_bias, self.dim());
        for c in 0..2 {
            let row: Vec<String> = self.w.row(c).iter().map(|v| v.to_string()).collect();
            out.push_str(&format!("{} {}\n", row.join(" "), self.bias.data()[c]));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() != 4 {
            return Err(Error::parse(lines.len(), "classifier file has 4 lines"));
        }
        let use_bias = match lines[0] {
            "use_bias true" => true,
            "use_bias false" => false,
            _ => return Err(Error::parse(1, "expected `use_bias true|false`")),
        };
        let dim: usize = lines[1]
            .strip_prefix("dim ")
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| Error::parse(2, "expected `dim <n>`"))?;
        let mut clf = W2VClassifier::zeros(dim, use_bias);
        for c in 0..2 {
            let vals: Vec<f64> = lines[2 + c]
                .split(' ')
                .map(|v| v.parse().map_err(|_| Error::parse(3 + c, format!("bad number `{v}`"))))
                .collect::<Result<_>>()?;
            if vals.len() != dim + 1 {
                return Err(Error::parse(3 + c, format!("expected {} values", dim + 1)));
            }
            for (dst, &v) in clf.w.row_mut(c).iter_mut().zip(&vals) {
                *dst = T::lit(v);
            }
            clf.bias.data_mut()[c] = T::lit(vals[dim]);
        }
        Ok(clf)
    }
}

impl<T: Scalar> ParamSet<T> for W2VClassifier<T> {
    fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        vec![("weight".into(), &self.w), ("bias".into(), &self.bias)]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        vec![("weight".into(), &mut self.w), ("bias".into(), &mut self.bias)]
    }
}

fn logits<T: Scalar>(c: &[T], clf: &W2VClassifier<T>) -> [T; 2] {
    let b = |k: usize| if clf.use_bias { clf.bias.data()[k] } else { T::zero() };
    [crate::dot(c, clf.w.row(0)) + b(0), crate::dot(c, clf.w.row(1)) + b(1)]
}

/// Log-probabilities `(ln p_negative, ln p_positive)`.
pub fn w2v_classify<T: Scalar>(c: &[T], clf: &W2VClassifier<T>) -> [T; 2] {
    let z = logits(c, clf);
    let lse = log_sum_exp(&z);
    [z[0] - lse, z[1] - lse]
}

/// Argmax, ties to the negative class.
pub fn predict_label<T: Scalar>(log_probs: [T; 2]) -> Label {
    if log_probs[1] > log_probs[0] {
        Label::Positive
    } else {
        Label::Negative
    }
}

/// Mean cross-entropy over `data` and its gradient.
pub fn classifier_loss<T: Scalar>(clf: &W2VClassifier<T>, data: &[(Vec<T>, Label)]) -> (T, W2VClassifier<T>) {
    let mut grads = W2VClassifier::zeros(clf.dim(), clf.use_bias);
    let mut loss = T::zero();
    let inv = T::one() / T::from_usize(data.len().max(1)).unwrap();
    for (c, label) in data {
        let lp = w2v_classify(c, clf);
        loss -= lp[label.index()];
        for k in 0..2 {
            let mut g = lp[k].exp();
            if k == label.index() {
                g -= T::one();
            }
            crate::axpy(g * inv, c, grads.w.row_mut(k));
            if clf.use_bias {
                grads.bias.data_mut()[k] += g * inv;
            }
        }
    }
    (loss * inv, grads)
}

#[derive(Debug, Clone, PartialEq)]
pub struct W2VClassifierConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub use_bias: bool,
}

impl Default for W2VClassifierConfig {
    fn default() -> Self {
        W2VClassifierConfig {
            batch_size: 32,
            lr: 1e-4,
            epochs: 200,
            seed: 0,
            use_bias: true,
        }
    }
}

fn accuracy<T: Scalar>(clf: &W2VClassifier<T>, data: &[(Vec<T>, Label)]) -> f64 {
    let hits = data
        .iter()
        .filter(|(c, l)| predict_label(w2v_classify(c, clf)) == *l)
        .count();
    hits as f64 / data.len() as f64
}

/// Mini-batch Adam on frozen document vectors, keeping the weights of the
/// best dev epoch (earliest on ties). Returns the classifier, its log and the
/// chosen 1-based epoch.
pub fn train_w2v_classifier<T: Scalar>(
    train: &[(Vec<T>, Label)],
    dev: &[(Vec<T>, Label)],
    cfg: &W2VClassifierConfig,
) -> Result<(W2VClassifier<T>, TrainLog, usize)> {
    if train.is_empty() || dev.is_empty() {
        return Err(Error::data("classifier training needs nonempty train and dev sets"));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::config("batch size and epochs must be positive"));
    }
    let dim = train[0].0.len();
    if train.iter().chain(dev).any(|(c, _)| c.len() != dim) {
        return Err(Error::data("document vectors differ in length"));
    }
    let mut clf = W2VClassifier::zeros(dim, cfg.use_bias);
    let mut state = AdamState::new(&clf, cfg.lr);
    let mut log = TrainLog::new(cfg.seed);
    let mut best = (f64::NEG_INFINITY, 0, clf.clone());
    let mut batch: Vec<(Vec<T>, Label)> = Vec::with_capacity(cfg.batch_size);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng::keyed(cfg.seed, epoch as u64));
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train[i].clone()));
            let (loss, grads) = classifier_loss(&clf, &batch);
            epoch_loss += loss.as_f64() * chunk.len() as f64;
            let use_bias = cfg.use_bias;
            adam_step_masked(&mut clf, &grads, &mut state, |n| use_bias || n != "bias")?;
        }
        log.push(epoch, Phase::Train, Some(epoch_loss / train.len() as f64), None);
        let acc = accuracy(&clf, dev);
        log.push(epoch, Phase::Dev, None, Some(acc));
        if acc > best.0 {
            best = (acc, epoch, clf.clone());
        }
    }
    Ok((best.2, log, best.1))
}
