use proptest::prelude::*;
use rand::Rng;
use urglm_core::corpus::Label;
use urglm_core::eval::*;
use urglm_core::rng;

fn label(b: bool) -> Label {
    if b {
        Label::Positive
    } else {
        Label::Negative
    }
}

/// Predictions whose true labels are balanced and whose predictions agree
/// with the truth with probability `skill`.
fn synthetic(n: usize, skill: f64, seed: u64) -> PredictionSet {
    let mut r = rng::seeded(seed);
    PredictionSet::new(
        (0..n)
            .map(|i| {
                let truth = r.gen_bool(0.5);
                let pred = if r.gen_bool(skill) { truth } else { !truth };
                Prediction {
                    id: format!("E{i:04}"),
                    truth: label(truth),
                    predicted: label(pred),
                    score: if pred { 0.9 } else { 0.1 },
                }
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn all_correct_is_certain() {
    let p = synthetic(40, 1.0, 1);
    let s = bootstrap(&p, &BootstrapConfig::default()).unwrap();
    for m in &s.metrics {
        assert_eq!((m.mean, m.ci_lo, m.ci_hi), (1.0, 1.0, 1.0));
    }
}

#[test]
fn means_track_point_estimates() {
    for seed in 0..5 {
        let p = synthetic(425, 0.85, seed);
        let s = bootstrap(
            &p,
            &BootstrapConfig {
                seed,
                ..Default::default()
            },
        )
        .unwrap();
        for m in &s.metrics {
            assert!((m.mean - m.point).abs() <= 0.02, "{m:?}");
            assert!(m.ci_lo <= m.mean && m.mean <= m.ci_hi);
        }
    }
}

#[test]
fn workers_do_not_change_results() {
    let p = synthetic(101, 0.7, 3);
    let cfg = BootstrapConfig {
        seed: 11,
        ..Default::default()
    };
    let one = bootstrap(&p, &cfg).unwrap();
    for w in [2, 3, 8] {
        assert_eq!(bootstrap_with_workers(&p, &cfg, w).unwrap(), one);
    }
}

#[test]
fn identical_models_overlap() {
    let p = synthetic(200, 0.8, 4);
    let c = compare_models(&p, &p, &BootstrapConfig::default()).unwrap();
    assert_eq!(c.a, c.b);
    assert_eq!(c.overlap, [true; 3]);
}

#[test]
fn clearly_better_model_is_disjoint() {
    let truth = synthetic(425, 1.0, 5);
    let mut r = rng::seeded(6);
    let worse: Vec<Prediction> = truth
        .items()
        .iter()
        .map(|p| {
            let wrong = r.gen_bool(0.3);
            let predicted = if wrong {
                label(p.truth == Label::Negative)
            } else {
                p.truth
            };
            Prediction { predicted, ..p.clone() }
        })
        .collect();
    let mut worse = worse;
    worse.reverse();
    let worse = PredictionSet::new(worse).unwrap();
    let c = compare_models(&truth, &worse, &BootstrapConfig::default()).unwrap();
    assert_eq!(c.disjoint(), [true; 3]);
}

#[test]
fn summary_csv_has_three_rows_per_model() {
    let s = bootstrap(&synthetic(50, 0.9, 7), &BootstrapConfig::default()).unwrap();
    let csv = summary_csv(&[("bert", &s), ("word2vec", &s)]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "model,metric,point,mean,ci_lo,ci_hi,iterations");
    assert_eq!(lines.len(), 7);
    assert!(lines[1].starts_with("bert,precision,"));
    assert!(lines[1].ends_with(",1000"));
}

proptest! {
    #[test]
    fn metrics_stay_in_unit_interval(tp in 0usize..500, fp in 0usize..500, fn_ in 0usize..500) {
        let m = prf(tp, fp, fn_);
        for v in m.values() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(m.f_measure <= m.precision.max(m.recall) + 1e-12);
    }

    #[test]
    fn confusion_ignores_order(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60), seed in any::<u64>()) {
        let make = |v: &[(bool, bool)]| PredictionSet::new(v.iter().enumerate().map(|(i, &(t, p))| Prediction {
            id: format!("r{i}"), truth: label(t), predicted: label(p), score: 0.5,
        }).collect()).unwrap();
        let mut shuffled = pairs.clone();
        rand::seq::SliceRandom::shuffle(&mut shuffled[..], &mut rng::seeded(seed));
        prop_assert_eq!(confusion(&make(&pairs)), confusion(&make(&shuffled)));
    }
}
