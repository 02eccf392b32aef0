use rand::seq::SliceRandom;
use rand::Rng;
use urglm_core::corpus::Label;
use urglm_core::optim::grad_check;
use urglm_core::rng;
use urglm_core::word2vec::*;
use urglm_core::{ParamSet, Tensor};

/// Half the sentences carry "alpha beta", the other half "gamma delta", each
/// padded with random filler words.
fn corpus() -> Vec<Vec<String>> {
    let fillers: Vec<String> = (0..30).map(|i| format!("w{i}")).collect();
    let mut r = rng::seeded(5);
    (0..500)
        .map(|i| {
            let mut s: Vec<String> = (0..6).map(|_| fillers.choose(&mut r).unwrap().clone()).collect();
            let pair = if i % 2 == 0 {
                ["alpha", "beta"]
            } else {
                ["gamma", "delta"]
            };
            for w in pair {
                let at = r.gen_range(0..=s.len());
                s.insert(at, w.to_string());
            }
            s
        })
        .collect()
}

fn small_cfg() -> W2VConfig {
    W2VConfig {
        dim: 16,
        window: 3,
        epochs: 5,
        seed: 9,
        ..Default::default()
    }
}

#[test]
fn co_occurring_words_end_up_closer() {
    let emb = train_skipgram::<f64>(&corpus(), &small_cfg()).unwrap();
    let together = emb.cosine("alpha", "beta").unwrap();
    let apart = emb.cosine("alpha", "gamma").unwrap();
    assert!(together > apart, "{together} vs {apart}");
    assert!(emb.vectors.is_finite());
    assert_ne!(emb.vectors.row(0), emb.vectors.row(1));
}

#[test]
fn training_is_deterministic() {
    let a = train_skipgram::<f64>(&corpus(), &small_cfg()).unwrap();
    let b = train_skipgram::<f64>(&corpus(), &small_cfg()).unwrap();
    assert_eq!(a, b);
    let c = train_skipgram::<f64>(
        &corpus(),
        &W2VConfig {
            seed: 10,
            ..small_cfg()
        },
    )
    .unwrap();
    assert_ne!(a, c);
}

#[test]
fn mean_vector_is_blind_to_word_order() {
    let emb = train_skipgram::<f64>(&corpus(), &small_cfg()).unwrap();
    let (a, ea) = doc_vector("alpha w1 beta", &emb);
    let (b, eb) = doc_vector("beta alpha w1", &emb);
    assert_eq!(ea, eb);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
}

fn clusters(n: usize, seed: u64) -> Vec<(Vec<f64>, Label)> {
    let mut r = rng::seeded(seed);
    (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { Label::Positive } else { Label::Negative };
            let center = if label == Label::Positive { 1.0 } else { -1.0 };
            let c = (0..5).map(|_| center + r.gen_range(-0.3..0.3)).collect();
            (c, label)
        })
        .collect()
}

#[test]
fn separable_clusters_are_learned() {
    let (train, dev) = (clusters(200, 1), clusters(50, 2));
    let (clf, log, best) = train_w2v_classifier(&train, &dev, &W2VClassifierConfig::default()).unwrap();
    let acc = train
        .iter()
        .filter(|(c, l)| predict_label(w2v_classify(c, &clf)) == *l)
        .count() as f64
        / train.len() as f64;
    assert_eq!(acc, 1.0);
    assert!((1..=200).contains(&best));
    assert_eq!(log.dev_curve().len(), 200);

    let again = train_w2v_classifier(&train, &dev, &W2VClassifierConfig::default()).unwrap();
    assert_eq!(again.0, clf);
}

#[test]
fn classifier_gradient_matches_finite_differences() {
    let data = clusters(20, 3);
    let mut clf = W2VClassifier::<f64>::zeros(5, true);
    let mut r = rng::seeded(4);
    for t in clf.tensors_mut() {
        for v in t.1.data_mut() {
            *v = r.gen_range(-1.0..1.0);
        }
    }
    let report = grad_check(&clf, |c| Ok(classifier_loss(c, &data)), 20, 1e-5, 0).unwrap();
    assert!(report.max_rel_error() < 1e-6, "{:?}", report.worst());
}

#[test]
fn empty_training_set_rejected() {
    let dev = clusters(4, 0);
    assert!(train_w2v_classifier::<f64>(&[], &dev, &W2VClassifierConfig::default()).is_err());
}

#[test]
fn log_probabilities_are_normalized() {
    let mut r = rng::seeded(8);
    let mut clf = W2VClassifier::<f64>::zeros(4, true);
    clf.w = Tensor::from_vec(&[2, 4], (0..8).map(|_| r.gen_range(-3.0..3.0)).collect());
    for _ in 0..100 {
        let c: Vec<f64> = (0..4).map(|_| r.gen_range(-5.0..5.0)).collect();
        let lp = w2v_classify(&c, &clf);
        assert!((lp[0].exp() + lp[1].exp() - 1.0).abs() < 1e-12);
    }
}
