//! End-to-end runs assembled from the module operations.
//!
//! Every stage takes its seed from the global seed through
//! [`stage_seed`], so a stage can be rerun alone and reproduce the same bytes
//! as inside a full run.

use std::time::Instant;

use crate::config::PipelineConfig;
use crate::corpus::{generate_corpus, split_dataset, Label, Report, Split, SplitManifest};
use crate::encoder::{classify, init_params, predicted_label, write_checkpoint, EncoderConfig};
use crate::error::{Error, Result};
use crate::eval::{compare_models, summary_csv, BootstrapConfig, Comparison, Prediction, PredictionSet};
use crate::optim::{
    examples_from_reports, finetune, pretrain_mlm, FinetuneConfig, FinetuneOutcome, PretrainConfig, TrainLog,
};
use crate::tokenizer::{build_vocab, encode, Vocabulary};
use crate::word2vec::{
    doc_vector, predict_label, train_skipgram, train_w2v_classifier, w2v_classify, words, W2VConfig,
};
use crate::{rng, Classifier, Embeddings, Encoder, Real};

/// Seed of one pipeline stage.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    rng::derive_seed(seed, stage)
}

/// All reports plus the manifest assigning each to a split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub reports: Vec<Report>,
    pub manifest: SplitManifest,
}

impl Dataset {
    pub fn generate(cfg: &PipelineConfig) -> Result<Self> {
        let gen = crate::corpus::GeneratorConfig {
            seed: cfg.seed,
            ..cfg.generator.clone()
        };
        let corpus = generate_corpus(&gen)?;
        let mut manifest = split_dataset(&corpus.labeled, cfg.split_ratios, stage_seed(cfg.seed, "split"))?;
        manifest.add_pretrain(corpus.pretrain.iter().map(|r| r.id.as_str()));
        let mut reports = corpus.pretrain;
        reports.extend(corpus.labeled);
        Ok(Dataset { reports, manifest })
    }

    pub fn select(&self, split: Split) -> Result<Vec<Report>> {
        self.manifest.select(&self.reports, split)
    }
}

/// Impressions of the reports that have one.
pub fn impressions(reports: &[Report]) -> Vec<&str> {
    reports.iter().filter_map(|r| r.impression()).collect()
}

pub fn build_vocabulary(cfg: &PipelineConfig, pretrain: &[Report]) -> Result<Vocabulary> {
    build_vocab(impressions(pretrain), cfg.vocab_size)
}

/// The configured encoder sized to `vocab`.
pub fn encoder_config(cfg: &PipelineConfig, vocab: &Vocabulary) -> EncoderConfig {
    EncoderConfig {
        vocab_size: vocab.len(),
        ..cfg.encoder.clone()
    }
}

/// Fresh parameters followed by masked-LM pre-training on the impressions of
/// `pretrain`.
pub fn pretrain_encoder(cfg: &PipelineConfig, vocab: &Vocabulary, pretrain: &[Report]) -> Result<(Encoder, TrainLog)> {
    let ec = encoder_config(cfg, vocab);
    let mut params: Encoder = init_params(&ec, stage_seed(cfg.seed, "init"))?;
    let seqs: Vec<_> = impressions(pretrain)
        .into_iter()
        .map(|t| encode(t, vocab, ec.max_seq_len))
        .collect();
    if seqs.is_empty() {
        return Err(Error::data("no pre-training impressions"));
    }
    let pc = PretrainConfig {
        seed: stage_seed(cfg.seed, "pretrain"),
        ..cfg.pretrain.clone()
    };
    let log = pretrain_mlm(&mut params, &ec, &seqs, &pc)?;
    Ok((params, log))
}

pub fn finetune_config(cfg: &PipelineConfig) -> FinetuneConfig {
    FinetuneConfig {
        seed: stage_seed(cfg.seed, "finetune"),
        ..cfg.finetune.clone()
    }
}

/// Fine-tunes `params` in place and returns the outcome.
pub fn finetune_encoder(
    cfg: &PipelineConfig,
    vocab: &Vocabulary,
    params: &mut Encoder,
    train: &[Report],
    dev: &[Report],
) -> Result<FinetuneOutcome> {
    let ec = encoder_config(cfg, vocab);
    let tr = examples_from_reports(train, vocab, ec.max_seq_len)?;
    let dv = examples_from_reports(dev, vocab, ec.max_seq_len)?;
    finetune(params, &ec, &tr, &dv, &finetune_config(cfg))
}

fn truth(r: &Report) -> Result<Label> {
    r.label
        .ok_or_else(|| Error::data(format!("report `{}` has no label", r.id)))
}

fn impression_of(r: &Report) -> Result<&str> {
    r.impression()
        .ok_or_else(|| Error::data(format!("report `{}` has no impression", r.id)))
}

pub fn encoder_predictions(
    params: &Encoder,
    ec: &EncoderConfig,
    vocab: &Vocabulary,
    reports: &[Report],
) -> Result<PredictionSet> {
    let items = reports
        .iter()
        .map(|r| {
            let probs = classify(params, ec, &encode(impression_of(r)?, vocab, ec.max_seq_len))?;
            Ok(Prediction {
                id: r.id.clone(),
                truth: truth(r)?,
                predicted: predicted_label(probs),
                score: f64::from(probs[1]),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PredictionSet::new(items)
}

/// One word sequence per report, over the full report text.
pub fn w2v_sentences(reports: &[Report]) -> Vec<Vec<String>> {
    reports
        .iter()
        .map(|r| words(&r.raw_text))
        .filter(|w| !w.is_empty())
        .collect()
}

pub fn train_embeddings(cfg: &PipelineConfig, reports: &[Report]) -> Result<Embeddings> {
    let wc = W2VConfig {
        seed: stage_seed(cfg.seed, "w2v"),
        ..cfg.w2v.clone()
    };
    train_skipgram(&w2v_sentences(reports), &wc)
}

/// Impression document vectors with their labels; the second value counts
/// reports without any in-vocabulary word.
pub fn doc_vectors(emb: &Embeddings, reports: &[Report]) -> Result<(Vec<(Vec<Real>, Label)>, usize)> {
    let mut empty = 0;
    let data = reports
        .iter()
        .map(|r| {
            let (c, warn) = doc_vector(impression_of(r)?, emb);
            empty += usize::from(warn);
            Ok((c, truth(r)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((data, empty))
}

pub fn fit_w2v_classifier(
    cfg: &PipelineConfig,
    emb: &Embeddings,
    train: &[Report],
    dev: &[Report],
) -> Result<(Classifier, TrainLog, usize)> {
    let (tr, _) = doc_vectors(emb, train)?;
    let (dv, _) = doc_vectors(emb, dev)?;
    let cc = crate::word2vec::W2VClassifierConfig {
        seed: stage_seed(cfg.seed, "w2v_classifier"),
        ..cfg.w2v_classifier.clone()
    };
    train_w2v_classifier(&tr, &dv, &cc)
}

pub fn w2v_predictions(emb: &Embeddings, clf: &Classifier, reports: &[Report]) -> Result<PredictionSet> {
    let items = reports
        .iter()
        .map(|r| {
            let (c, _) = doc_vector(impression_of(r)?, emb);
            let p = w2v_classify(&c, clf);
            Ok(Prediction {
                id: r.id.clone(),
                truth: truth(r)?,
                predicted: predict_label(p),
                score: f64::from(p[1].exp()).clamp(0.0, 1.0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PredictionSet::new(items)
}

pub fn bootstrap_config(cfg: &PipelineConfig) -> BootstrapConfig {
    BootstrapConfig {
        seed: stage_seed(cfg.seed, "bootstrap"),
        ..cfg.bootstrap.clone()
    }
}

/// Names used for the two models in summaries.
pub const ENCODER_MODEL: &str = "encoder";
pub const W2V_MODEL: &str = "word2vec";

/// Everything one end-to-end run produces.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub dataset: Dataset,
    pub vocab: Vocabulary,
    pub encoder_config: EncoderConfig,
    pub pretrain_log: TrainLog,
    pub pretrained: Encoder,
    pub finetuned: Encoder,
    pub finetune: FinetuneOutcome,
    pub embeddings: Embeddings,
    pub w2v_classifier: Classifier,
    pub w2v_log: TrainLog,
    pub encoder_predictions: PredictionSet,
    pub w2v_predictions: PredictionSet,
    pub comparison: Comparison,
    /// Seconds per stage, in execution order.
    pub timings: Vec<(&'static str, f64)>,
}

impl PipelineRun {
    /// `model,metric,point,mean,ci_lo,ci_hi,iterations` for both models.
    pub fn metrics_csv(&self) -> String {
        summary_csv(&[(ENCODER_MODEL, &self.comparison.a), (W2V_MODEL, &self.comparison.b)])
    }

    pub fn checkpoint(&self) -> Vec<u8> {
        write_checkpoint(&self.finetuned)
    }

    /// Point F-measure of the encoder and of the baseline on the eval split.
    pub fn f_measures(&self) -> (f64, f64) {
        (self.comparison.a.metrics[2].point, self.comparison.b.metrics[2].point)
    }
}

/// Generate, split, build the vocabulary, pre-train, fine-tune, train the
/// baseline and bootstrap both models on the eval split.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineRun> {
    cfg.validate()?;
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &'static str, timings: &mut Vec<(&'static str, f64)>| {
        timings.push((name, clock.elapsed().as_secs_f64()));
        clock = Instant::now();
    };

    let dataset = Dataset::generate(cfg)?;
    let pretrain = dataset.select(Split::Pretrain)?;
    let train = dataset.select(Split::Train)?;
    let dev = dataset.select(Split::Dev)?;
    let eval = dataset.select(Split::Eval)?;
    let vocab = build_vocabulary(cfg, &pretrain)?;
    lap("data", &mut timings);

    let (pretrained, pretrain_log) = pretrain_encoder(cfg, &vocab, &pretrain)?;
    lap("pretrain", &mut timings);
    let mut finetuned = pretrained.clone();
    let finetune = finetune_encoder(cfg, &vocab, &mut finetuned, &train, &dev)?;
    lap("finetune", &mut timings);

    let mut w2v_text = pretrain.clone();
    w2v_text.extend(train.iter().cloned());
    let embeddings = train_embeddings(cfg, &w2v_text)?;
    let (w2v_classifier, w2v_log, _) = fit_w2v_classifier(cfg, &embeddings, &train, &dev)?;
    lap("word2vec", &mut timings);

    let ec = encoder_config(cfg, &vocab);
    let encoder_predictions = encoder_predictions(&finetuned, &ec, &vocab, &eval)?;
    let w2v_predictions = w2v_predictions(&embeddings, &w2v_classifier, &eval)?;
    let comparison = compare_models(&encoder_predictions, &w2v_predictions, &bootstrap_config(cfg))?;
    lap("eval", &mut timings);

    Ok(PipelineRun {
        dataset,
        vocab,
        encoder_config: ec,
        pretrain_log,
        pretrained,
        finetuned,
        finetune,
        embeddings,
        w2v_classifier,
        w2v_log,
        encoder_predictions,
        w2v_predictions,
        comparison,
        timings,
    })
}
