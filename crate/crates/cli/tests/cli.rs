use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = "\
gen.n_labeled = 40
gen.n_pretrain = 30
pretrain.steps = 6
pretrain.batch = 4
finetune.epochs = 2
finetune.batch = 8
w2v.dim = 8
w2v.epochs = 1
w2v_clf.epochs = 3
search.seq_lens = 32
search.batches = 8,16
search.lrs = 1e-4,2e-4
search.epochs = 1
eval.iterations = 50
";

fn urglm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_urglm"))
        .args(args)
        .env_remove("URGLM_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("small.conf"), SMALL).unwrap();
        Work { dir }
    }

    fn p(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn conf(&self) -> String {
        s(&self.p("small.conf")).to_string()
    }

    /// Runs `gen` into `data/` and returns (corpus, manifest) paths.
    fn data(&self) -> (String, String) {
        let out = self.p("data");
        let o = urglm(&["gen", "--config", &self.conf(), "--out", s(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (
            s(&out.join("corpus.txt")).to_string(),
            s(&out.join("manifest.tsv")).to_string(),
        )
    }
}

#[test]
fn gen_reference_split_counts() {
    let w = Work::new();
    let out = w.p("gen");
    let o = urglm(&[
        "gen",
        "--n-labeled",
        "2124",
        "--positive-fraction",
        "0.5",
        "--seed",
        "7",
        "--set",
        "gen.n_pretrain=5",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0);
    let manifest = fs::read_to_string(out.join("manifest.tsv")).unwrap();
    let count = |split: &str| manifest.lines().filter(|l| l.ends_with(&format!("\t{split}"))).count();
    assert_eq!((count("train"), count("dev"), count("eval")), (1274, 425, 425));
    let record = fs::read_to_string(out.join("gen.record")).unwrap();
    assert!(record.contains("seed = 7\n"));
    assert!(record.contains("output.corpus.txt = "));
    assert!(!out.join(".urglm.lock").exists());
}

#[test]
fn usage_errors_exit_2() {
    let w = Work::new();
    assert_eq!(code(&urglm(&["gen", "--no-such-flag"])), 2);
    assert_eq!(code(&urglm(&["frobnicate"])), 2);
    fs::write(w.p("bad.conf"), "colour = blue\n").unwrap();
    let o = urglm(&["gen", "--config", s(&w.p("bad.conf")), "--out", s(&w.p("x"))]);
    assert_eq!(code(&o), 2);
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert_eq!(stderr.trim().lines().count(), 1, "{stderr}");
    fs::write(w.p("bad2.conf"), "seed 4\n").unwrap();
    assert_eq!(
        code(&urglm(&[
            "gen",
            "--config",
            s(&w.p("bad2.conf")),
            "--out",
            s(&w.p("x"))
        ])),
        2
    );
}

#[test]
fn missing_input_exits_3_with_marker() {
    let w = Work::new();
    let out = w.p("v");
    let o = urglm(&[
        "vocab",
        "--corpus",
        s(&w.p("absent.txt")),
        "--manifest",
        s(&w.p("absent.tsv")),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 3);
    assert!(out.join("vocab.failed").exists());
    assert!(!out.join("vocab.txt").exists());
    assert!(!out.join(".urglm.lock").exists());
}

#[test]
fn locked_output_is_rejected() {
    let w = Work::new();
    let out = w.p("locked");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join(".urglm.lock"), "1\n").unwrap();
    let o = urglm(&["gen", "--config", &w.conf(), "--out", s(&out)]);
    assert_ne!(code(&o), 0);
    assert!(!out.join("corpus.txt").exists());
    // the other run's lock is left alone
    assert!(out.join(".urglm.lock").exists());
}

#[test]
fn env_seed_overrides_config_and_flag_overrides_env() {
    let w = Work::new();
    let run = |env: Option<&str>, flag: Option<&str>, out: &str| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_urglm"));
        c.args(["gen", "--config", &w.conf(), "--out", s(&w.p(out))]);
        if let Some(f) = flag {
            c.args(["--seed", f]);
        }
        match env {
            Some(e) => c.env("URGLM_SEED", e),
            None => c.env_remove("URGLM_SEED"),
        };
        assert!(c.status().unwrap().success());
        fs::read_to_string(w.p(out).join("gen.record")).unwrap()
    };
    assert!(run(None, None, "a").contains("seed = 7\n"));
    assert!(run(Some("19"), None, "b").contains("seed = 19\n"));
    assert!(run(Some("19"), Some("23"), "c").contains("seed = 23\n"));
    assert_ne!(
        fs::read(w.p("a/corpus.txt")).unwrap(),
        fs::read(w.p("b/corpus.txt")).unwrap()
    );
}

#[test]
fn gradcheck_exit_status_follows_tolerance() {
    let w = Work::new();
    let o = urglm(&["gradcheck", "--out", s(&w.p("gc"))]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("max relative error"));
    let csv = fs::read_to_string(w.p("gc/gradcheck.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 24);
    // This probe point puts the identically-zero key-bias gradient at the
    // rounding floor, which the relative measure cannot accept.
    assert_eq!(
        code(&urglm(&["gradcheck", "--probe-seed", "2", "--out", s(&w.p("gc2"))])),
        4
    );
}

#[test]
fn eval_writes_three_metrics() {
    let w = Work::new();
    let mut tsv = String::from("report_id\ttrue\tpred\tscore\n");
    for i in 0..40 {
        let t = i % 2;
        let p = if i % 7 == 0 { 1 - t } else { t };
        tsv.push_str(&format!("R{i}\t{t}\t{p}\t{}\n", p as f64 * 0.8 + 0.1));
    }
    fs::write(w.p("p.tsv"), tsv).unwrap();
    let out = w.p("eval");
    let o = urglm(&[
        "eval",
        "--predictions",
        s(&w.p("p.tsv")),
        "--iterations",
        "1000",
        "--fraction",
        "0.5",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "model,metric,point,mean,ci_lo,ci_hi,iterations");
    assert_eq!(lines.len(), 4);
    for (line, metric) in lines[1..].iter().zip(["precision", "recall", "f_measure"]) {
        assert!(line.starts_with(&format!("model,{metric},")));
        assert!(line.ends_with(",1000"));
    }
}

#[test]
fn malformed_predictions_exit_3() {
    let w = Work::new();
    fs::write(w.p("p.tsv"), "report_id\ttrue\tpred\tscore\nR1\t1\t1\t7.5\n").unwrap();
    let o = urglm(&["eval", "--predictions", s(&w.p("p.tsv")), "--out", s(&w.p("e"))]);
    assert_eq!(code(&o), 3);
    assert!(w.p("e/eval.failed").exists());
}

/// The documented sequence, start to finish.
fn pipeline(w: &Work, root: &str) -> Vec<(String, Vec<u8>)> {
    let (corpus, manifest) = w.data();
    let conf = w.conf();
    let d = |rel: &str| s(&w.p(&format!("{root}/{rel}"))).to_string();
    let step = |args: &[&str]| {
        let mut full: Vec<&str> = args.to_vec();
        full.extend(["--config", &conf]);
        let o = urglm(&full);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    };
    let data = ["--corpus", corpus.as_str(), "--manifest", manifest.as_str()];
    let with = |cmd: &str, rest: &[&str]| {
        let mut v = vec![cmd];
        v.extend(data);
        v.extend(rest);
        v.into_iter().map(String::from).collect::<Vec<_>>()
    };
    let run = |v: Vec<String>| step(&v.iter().map(String::as_str).collect::<Vec<_>>());

    run(with("vocab", &["--out", &d("vocab")]));
    let vocab = d("vocab/vocab.txt");
    run(with("pretrain", &["--vocab", &vocab, "--out", &d("pt")]));
    run(with(
        "finetune",
        &[
            "--vocab",
            &vocab,
            "--checkpoint",
            &d("pt/pretrained.ckpt"),
            "--out",
            &d("ft"),
        ],
    ));
    run(with("w2v-train", &["--out", &d("w2v")]));
    run(with(
        "w2v-fit",
        &["--embeddings", &d("w2v/embeddings.txt"), "--out", &d("w2v")],
    ));
    run(with(
        "tune",
        &[
            "--vocab",
            &vocab,
            "--checkpoint",
            &d("pt/pretrained.ckpt"),
            "--out",
            &d("tune"),
        ],
    ));
    run(with(
        "predict",
        &[
            "--vocab",
            &vocab,
            "--checkpoint",
            &d("ft/finetuned.ckpt"),
            "--out",
            &d("pe"),
        ],
    ));
    run(with(
        "predict",
        &[
            "--embeddings",
            &d("w2v/embeddings.txt"),
            "--classifier",
            &d("w2v/w2v_classifier.txt"),
            "--out",
            &d("pw"),
        ],
    ));
    run(vec![
        "eval".into(),
        "--predictions".into(),
        d("pe/predictions.tsv"),
        "--out".into(),
        d("eval"),
    ]);
    run(vec![
        "compare".into(),
        "--a".into(),
        d("pe/predictions.tsv"),
        "--b".into(),
        d("pw/predictions.tsv"),
        "--out".into(),
        d("cmp"),
    ]);
    [
        "pt/pretrained.ckpt",
        "ft/finetuned.ckpt",
        "w2v/embeddings.txt",
        "w2v/w2v_classifier.txt",
        "tune/trials.csv",
        "pe/predictions.tsv",
        "pw/predictions.tsv",
        "eval/summary.csv",
        "cmp/summary.csv",
        "cmp/overlap.csv",
    ]
    .iter()
    .map(|f| (f.to_string(), fs::read(w.p(&format!("{root}/{f}"))).unwrap()))
    .collect()
}

#[test]
fn pipeline_replay_is_byte_identical() {
    let w = Work::new();
    let first = pipeline(&w, "run1");
    let second = pipeline(&w, "run2");
    for ((name, a), (_, b)) in first.iter().zip(&second) {
        assert!(a == b, "{name} differs between replays");
    }
    let trials = String::from_utf8(first[4].1.clone()).unwrap();
    assert_eq!(trials.lines().count(), 1 + 4);
}
