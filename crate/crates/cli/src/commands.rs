use std::path::Path;

use urglm_core::config::PipelineConfig;
use urglm_core::corpus::{length_histogram, read_corpus, read_manifest, write_corpus, write_manifest, Lexicon, Split};
use urglm_core::encoder::{init_params, read_checkpoint, write_checkpoint, EncoderConfig};
use urglm_core::eval::{bootstrap, compare_models, render_table, summary_csv, PredictionSet, METRICS};
use urglm_core::kv::KvFile;
use urglm_core::optim::check_encoder;
use urglm_core::pipeline::{self, stage_seed, Dataset};
use urglm_core::tokenizer::Vocabulary;
use urglm_core::tune::{
    curve_csv, epoch_sweep, grid_search, lr_two_level_search, trials_csv, FinetuneObjective, HyperParams,
};
use urglm_core::{Classifier, Embeddings, Encoder};

use crate::output::OutDir;
use crate::{load_config, Command, Common, Data, Failure, TuneMode, EXIT_NUMERIC};

/// Gradient-check pass threshold on the maximum relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gen { .. } => "gen",
            Command::Stats { .. } => "stats",
            Command::Vocab { .. } => "vocab",
            Command::Pretrain { .. } => "pretrain",
            Command::Finetune { .. } => "finetune",
            Command::W2vTrain { .. } => "w2v-train",
            Command::W2vFit { .. } => "w2v-fit",
            Command::Tune { .. } => "tune",
            Command::Predict { .. } => "predict",
            Command::Eval { .. } => "eval",
            Command::Compare { .. } => "compare",
            Command::Gradcheck { .. } => "gradcheck",
        }
    }
}

/// Runs one subcommand against its output directory. Artifacts are written
/// only on success; a failure leaves `<command>.failed` instead.
pub(crate) fn run(cmd: Command, common: &Common, args: &[String]) -> Result<(), Failure> {
    let mut cfg = load_config(common)?;
    let mut out = OutDir::open(&common.out, cmd.name()).map_err(|e| Failure::usage(e.to_string()))?;
    match execute(cmd, &mut cfg, &mut out) {
        Ok(verdict) => {
            out.commit(&cfg, args)?;
            verdict
        }
        Err(f) => {
            out.fail(&f.message);
            Err(f)
        }
    }
}

/// The outer error aborts without artifacts; the inner one is reported after
/// the artifacts are written.
fn execute(cmd: Command, cfg: &mut PipelineConfig, out: &mut OutDir) -> Result<Result<(), Failure>, Failure> {
    match cmd {
        Command::Gen {
            n_labeled,
            n_pretrain,
            positive_fraction,
        } => gen(cfg, out, n_labeled, n_pretrain, positive_fraction)?,
        Command::Stats {
            corpus,
            manifest,
            section,
        } => stats(out, &corpus, manifest.as_deref(), &section)?,
        Command::Vocab { data } => {
            let ds = load_data(out, &data)?;
            let vocab = pipeline::build_vocabulary(cfg, &ds.select(Split::Pretrain)?)?;
            println!("vocabulary: {} tokens", vocab.len());
            out.stage("vocab.txt", vocab.to_text());
        }
        Command::Pretrain { data, vocab } => {
            let ds = load_data(out, &data)?;
            let vocab = load_vocab(out, &vocab)?;
            let (params, log) = pipeline::pretrain_encoder(cfg, &vocab, &ds.select(Split::Pretrain)?)?;
            if let Some((first, last)) = log.smoothed_ends(urglm_core::optim::Phase::Pretrain, 50) {
                println!("masked-LM loss: {first:.4} -> {last:.4}");
            }
            out.stage("pretrained.ckpt", write_checkpoint(&params));
            out.stage("pretrain_log.csv", log.to_csv());
        }
        Command::Finetune {
            data,
            vocab,
            checkpoint,
        } => {
            let ds = load_data(out, &data)?;
            let vocab = load_vocab(out, &vocab)?;
            let ec = pipeline::encoder_config(cfg, &vocab);
            let mut params = match checkpoint {
                Some(p) => load_encoder(out, &p, &ec)?,
                None => init_params(&ec, stage_seed(cfg.seed, "init"))?,
            };
            let outcome = pipeline::finetune_encoder(
                cfg,
                &vocab,
                &mut params,
                &ds.select(Split::Train)?,
                &ds.select(Split::Dev)?,
            )?;
            println!(
                "best epoch {} (dev accuracy {:.4})",
                outcome.best_epoch,
                outcome.dev_curve[outcome.best_epoch - 1]
            );
            out.stage("finetuned.ckpt", write_checkpoint(&params));
            out.stage("finetune_log.csv", outcome.log.to_csv());
            out.stage("dev_curve.csv", curve_csv(&outcome.dev_curve));
        }
        Command::W2vTrain { data } => {
            let ds = load_data(out, &data)?;
            let mut reports = ds.select(Split::Pretrain)?;
            reports.extend(ds.select(Split::Train)?);
            let emb = pipeline::train_embeddings(cfg, &reports)?;
            println!("embeddings: {} words x {} dims", emb.len(), emb.dim());
            out.stage("embeddings.txt", emb.to_text());
        }
        Command::W2vFit { data, embeddings } => {
            let ds = load_data(out, &data)?;
            let emb = load_embeddings(out, &embeddings)?;
            let (train, dev) = (ds.select(Split::Train)?, ds.select(Split::Dev)?);
            let (_, empty) = pipeline::doc_vectors(&emb, &train)?;
            if empty > 0 {
                eprintln!("warning: {empty} training impressions have no in-vocabulary word");
            }
            let (clf, log, best) = pipeline::fit_w2v_classifier(cfg, &emb, &train, &dev)?;
            println!("best epoch {best}");
            out.stage("w2v_classifier.txt", clf.to_text());
            out.stage("w2v_log.csv", log.to_csv());
        }
        Command::Tune {
            data,
            vocab,
            checkpoint,
            mode,
            max_epochs,
        } => tune(cfg, out, &data, &vocab, &checkpoint, mode, max_epochs)?,
        Command::Predict {
            data,
            split,
            checkpoint,
            vocab,
            embeddings,
            classifier,
        } => {
            let ds = load_data(out, &data)?;
            let reports = ds.select(split)?;
            let preds = match (checkpoint, vocab, embeddings, classifier) {
                (Some(ckpt), Some(vocab), None, None) => {
                    let vocab = load_vocab(out, &vocab)?;
                    let ec = pipeline::encoder_config(cfg, &vocab);
                    let params = load_encoder(out, &ckpt, &ec)?;
                    pipeline::encoder_predictions(&params, &ec, &vocab, &reports)?
                }
                (None, _, Some(emb), Some(clf)) => {
                    let emb = load_embeddings(out, &emb)?;
                    let clf = Classifier::from_text(&out.read_input_text(&clf)?)?;
                    pipeline::w2v_predictions(&emb, &clf, &reports)?
                }
                _ => {
                    return Err(Failure::usage(
                        "predict needs either --checkpoint with --vocab or --embeddings with --classifier",
                    ))
                }
            };
            println!("{} predictions, accuracy {:.4}", preds.len(), preds.accuracy());
            out.stage("predictions.tsv", preds.to_tsv());
        }
        Command::Eval {
            predictions,
            iterations,
            fraction,
            ci_method,
            name,
        } => {
            if let Some(n) = iterations {
                cfg.bootstrap.iterations = n;
            }
            if let Some(f) = fraction {
                cfg.bootstrap.fraction = f;
            }
            if let Some(m) = ci_method {
                cfg.set("eval.ci_method", &m)?;
            }
            let preds = PredictionSet::from_tsv(&out.read_input_text(&predictions)?)?;
            let summary = bootstrap(&preds, &pipeline::bootstrap_config(cfg))?;
            let rows = [(name.as_str(), &summary)];
            print!("{}", render_table(&rows));
            if summary.degenerate_iterations > 0 {
                eprintln!(
                    "warning: {} resamples had a zero denominator and scored 0",
                    summary.degenerate_iterations
                );
            }
            out.stage("summary.csv", summary_csv(&rows));
        }
        Command::Compare { a, b, name_a, name_b } => {
            let pa = PredictionSet::from_tsv(&out.read_input_text(&a)?)?;
            let pb = PredictionSet::from_tsv(&out.read_input_text(&b)?)?;
            let cmp = compare_models(&pa, &pb, &pipeline::bootstrap_config(cfg))?;
            let rows = [(name_a.as_str(), &cmp.a), (name_b.as_str(), &cmp.b)];
            print!("{}", render_table(&rows));
            let mut overlap = String::from("metric,ci_overlap\n");
            for (m, o) in METRICS.iter().zip(cmp.overlap) {
                overlap.push_str(&format!("{m},{o}\n"));
                if !o {
                    println!("{m}: confidence intervals are disjoint");
                }
            }
            out.stage("summary.csv", summary_csv(&rows));
            out.stage("overlap.csv", overlap);
        }
        Command::Gradcheck { probe_seed } => {
            let report = check_encoder(&EncoderConfig::tiny(), probe_seed)?;
            let mut csv = String::from("tensor,coords,max_rel_error,max_abs_analytic,max_abs_numeric\n");
            for t in &report.tensors {
                csv.push_str(&format!(
                    "{},{},{:e},{:e},{:e}\n",
                    t.name, t.coords, t.max_rel_error, t.max_abs_analytic, t.max_abs_numeric
                ));
            }
            out.stage("gradcheck.csv", csv);
            let max = report.max_rel_error();
            let worst = report.worst().map_or("", |t| t.name.as_str());
            println!("max relative error {max:e} ({worst})");
            if !(max < GRADCHECK_TOLERANCE) {
                return Ok(Err(Failure {
                    code: EXIT_NUMERIC,
                    message: format!("gradient check failed: {max:e} >= {GRADCHECK_TOLERANCE:e} in {worst}"),
                }));
            }
        }
    }
    Ok(Ok(()))
}

fn gen(
    cfg: &mut PipelineConfig,
    out: &mut OutDir,
    n_labeled: Option<usize>,
    n_pretrain: Option<usize>,
    positive_fraction: Option<f64>,
) -> Result<(), Failure> {
    if let Some(n) = n_labeled {
        cfg.generator.n_labeled = n;
    }
    if let Some(n) = n_pretrain {
        cfg.generator.n_pretrain = n;
    }
    if let Some(f) = positive_fraction {
        cfg.generator.positive_fraction = f;
    }
    if let Some(path) = cfg.lexicon_path.clone() {
        let kv = KvFile::parse(&out.read_input_text(Path::new(&path))?)?;
        cfg.generator.lexicon = Lexicon::from_kv(&kv)?;
    }
    cfg.validate()?;
    let ds = Dataset::generate(cfg)?;
    for split in [Split::Pretrain, Split::Train, Split::Dev, Split::Eval] {
        println!("{split}: {}", ds.manifest.size(split));
    }
    out.stage("corpus.txt", write_corpus(&ds.reports));
    out.stage("manifest.tsv", write_manifest(&ds.manifest));
    Ok(())
}

fn stats(out: &mut OutDir, corpus: &Path, manifest: Option<&Path>, section: &str) -> Result<(), Failure> {
    let reports = read_corpus(&out.read_input_text(corpus)?)?;
    let s = length_histogram(&reports, section)?;
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
    let mut text = format!(
        "reports = {}\nsection = {section}\nmissing = {}\nmin = {}\nmedian = {}\nmean = {}\nmax = {}\nmode = {}\n",
        reports.len(),
        s.missing,
        opt(s.min.map(|v| v as f64)),
        opt(s.median),
        opt(s.mean),
        opt(s.max.map(|v| v as f64)),
        opt(s.mode().map(|v| v as f64)),
    );
    if let Some(path) = manifest {
        let m = read_manifest(&out.read_input_text(path)?)?;
        let counts = m.class_counts();
        for split in [Split::Pretrain, Split::Train, Split::Dev, Split::Eval] {
            text.push_str(&format!("{split}.reports = {}\n", m.size(split)));
            if let Some([neg, pos]) = counts.get(&split).filter(|c| c[0] + c[1] > 0) {
                text.push_str(&format!("{split}.negative = {neg}\n{split}.positive = {pos}\n"));
            }
        }
    }
    print!("{text}");
    out.stage("stats.txt", text);
    out.stage("lengths.csv", s.histogram_csv());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn tune(
    cfg: &PipelineConfig,
    out: &mut OutDir,
    data: &Data,
    vocab: &Path,
    checkpoint: &Path,
    mode: TuneMode,
    max_epochs: usize,
) -> Result<(), Failure> {
    let ds = load_data(out, data)?;
    let vocab = load_vocab(out, vocab)?;
    let ec = pipeline::encoder_config(cfg, &vocab);
    let start = load_encoder(out, checkpoint, &ec)?;
    // The eval split is never loaded here.
    let (train, dev) = (ds.select(Split::Train)?, ds.select(Split::Dev)?);
    let mut obj = FinetuneObjective {
        start: &start,
        cfg: &ec,
        vocab: &vocab,
        train: &train,
        dev: &dev,
        scope: cfg.finetune.scope,
    };
    let seed = stage_seed(cfg.seed, "finetune");
    let fixed = HyperParams {
        seq_len: ec.max_seq_len,
        batch: cfg.finetune.batch_size,
        lr: cfg.finetune.lr,
        epochs: cfg.finetune.epochs,
    };
    match mode {
        TuneMode::Grid => {
            let (best, trials) = grid_search(&mut obj, &cfg.search, seed)?;
            println!("best: {best:?}");
            out.stage("trials.csv", trials_csv(&trials));
            out.stage("best.txt", best_text(&best));
        }
        TuneMode::Lr => {
            let s = lr_two_level_search(&mut obj, &fixed, &cfg.lr_decades, seed)?;
            println!("coarse {:e}, fine {:e}", s.coarse_best, s.best);
            out.stage("lr_trials.csv", trials_csv(s.trials()));
            out.stage("best.txt", best_text(&HyperParams { lr: s.best, ..fixed }));
        }
        TuneMode::Epochs => {
            let sweep = epoch_sweep(&mut obj, &fixed, max_epochs, seed)?;
            println!("chosen epoch {}", sweep.chosen);
            out.stage("epoch_curve.csv", curve_csv(&sweep.curve));
            out.stage(
                "best.txt",
                best_text(&HyperParams {
                    epochs: sweep.chosen,
                    ..fixed
                }),
            );
        }
    }
    Ok(())
}

fn best_text(hp: &HyperParams) -> String {
    format!(
        "finetune.batch = {}\nfinetune.lr = {:e}\nfinetune.epochs = {}\nseq_len = {}\n",
        hp.batch, hp.lr, hp.epochs, hp.seq_len
    )
}

fn load_data(out: &mut OutDir, data: &Data) -> Result<Dataset, Failure> {
    let reports = read_corpus(&out.read_input_text(&data.corpus)?)?;
    let manifest = read_manifest(&out.read_input_text(&data.manifest)?)?;
    Ok(Dataset { reports, manifest })
}

fn load_vocab(out: &mut OutDir, path: &Path) -> Result<Vocabulary, Failure> {
    Ok(Vocabulary::from_text(&out.read_input_text(path)?)?)
}

fn load_encoder(out: &mut OutDir, path: &Path, ec: &EncoderConfig) -> Result<Encoder, Failure> {
    Ok(read_checkpoint(&out.read_input(path)?, ec)?)
}

fn load_embeddings(out: &mut OutDir, path: &Path) -> Result<Embeddings, Failure> {
    Ok(Embeddings::from_text(&out.read_input_text(path)?)?)
}
