//! Flat `key = value` pipeline configuration.

use std::fmt::Display;
use std::str::FromStr;

use crate::corpus::GeneratorConfig;
use crate::encoder::{EncoderConfig, FineTuneScope};
use crate::error::{Error, Result};
use crate::eval::{BootstrapConfig, CiMethod};
use crate::kv::KvFile;
use crate::optim::{FinetuneConfig, PretrainConfig};
use crate::tune::{SearchSpace, COARSE_DECADES};
use crate::word2vec::{W2VClassifierConfig, W2VConfig};

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "URGLM_SEED";

/// Every setting of an end-to-end run. Per-stage seeds are derived from
/// `seed`; the seeds inside the stage configs are ignored.
///
/// Training defaults are sized for the synthetic corpus on one CPU core; the
/// stage configs' own defaults keep the published hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub generator: GeneratorConfig,
    /// Optional lexicon file replacing the built-in lexicon.
    pub lexicon_path: Option<String>,
    pub split_ratios: [f64; 3],
    pub vocab_size: usize,
    /// `vocab_size` is filled in from the learned vocabulary.
    pub encoder: EncoderConfig,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    pub w2v: W2VConfig,
    pub w2v_classifier: W2VClassifierConfig,
    pub search: SearchSpace,
    pub lr_decades: Vec<f64>,
    pub bootstrap: BootstrapConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 7,
            generator: GeneratorConfig::default(),
            lexicon_path: None,
            split_ratios: [0.6, 0.2, 0.2],
            vocab_size: 2000,
            encoder: EncoderConfig::default(),
            pretrain: PretrainConfig {
                steps: 4000,
                batch_size: 16,
                lr: 1e-3,
                ..PretrainConfig::default()
            },
            finetune: FinetuneConfig {
                batch_size: 16,
                lr: 3e-4,
                epochs: 15,
                scope: FineTuneScope::All,
                ..FinetuneConfig::default()
            },
            w2v: W2VConfig::default(),
            w2v_classifier: W2VClassifierConfig::default(),
            search: SearchSpace::default(),
            lr_decades: COARSE_DECADES.to_vec(),
            bootstrap: BootstrapConfig::default(),
        }
    }
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("bad value `{value}` for `{key}`")))
}

fn parse_list<V: FromStr>(key: &str, value: &str) -> Result<Vec<V>> {
    let items: Vec<V> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::config(format!("`{key}` needs at least one value")));
    }
    Ok(items)
}

fn join<V: Display>(items: &[V]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    /// Defaults overridden by every key present in `kv`; unknown keys are an
    /// error.
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let mut c = PipelineConfig::default();
        for key in kv.keys() {
            let v = kv.get(key).expect("listed key");
            c.set(key, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn parse(text: &str) -> Result<Self> {
        PipelineConfig::from_kv(&KvFile::parse(text)?)
    }

    /// Applies one setting.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let g = &mut self.generator;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "gen.n_labeled" => g.n_labeled = parse(key, v)?,
            "gen.n_pretrain" => g.n_pretrain = parse(key, v)?,
            "gen.positive_fraction" => g.positive_fraction = parse(key, v)?,
            "gen.length_min" => g.length.min = parse(key, v)?,
            "gen.length_mode" => g.length.mode = parse(key, v)?,
            "gen.length_max" => g.length.max = parse(key, v)?,
            "gen.max_urgent" => g.max_urgent = parse(key, v)?,
            "gen.max_benign" => g.max_benign = parse(key, v)?,
            "gen.cue_rate_positive" => g.cue_rate_positive = parse(key, v)?,
            "gen.cue_rate_negative" => g.cue_rate_negative = parse(key, v)?,
            "gen.missing_impression_rate" => g.missing_impression_rate = parse(key, v)?,
            "gen.lexicon" => self.lexicon_path = Some(v.trim().to_string()).filter(|s| !s.is_empty()),
            "split.ratios" => {
                let r: Vec<f64> = parse_list(key, v)?;
                self.split_ratios = r
                    .try_into()
                    .map_err(|_| Error::config("`split.ratios` needs three values"))?;
            }
            "vocab.size" => self.vocab_size = parse(key, v)?,
            "model.n_layers" => self.encoder.n_layers = parse(key, v)?,
            "model.hidden_dim" => self.encoder.hidden_dim = parse(key, v)?,
            "model.n_heads" => self.encoder.n_heads = parse(key, v)?,
            "model.ffn_dim" => self.encoder.ffn_dim = parse(key, v)?,
            "model.max_seq_len" => self.encoder.max_seq_len = parse(key, v)?,
            "model.dropout" => self.encoder.dropout_rate = parse(key, v)?,
            "pretrain.steps" => self.pretrain.steps = parse(key, v)?,
            "pretrain.batch" => self.pretrain.batch_size = parse(key, v)?,
            "pretrain.lr" => self.pretrain.lr = parse(key, v)?,
            "finetune.batch" => self.finetune.batch_size = parse(key, v)?,
            "finetune.lr" => self.finetune.lr = parse(key, v)?,
            "finetune.epochs" => self.finetune.epochs = parse(key, v)?,
            "finetune.scope" => self.finetune.scope = v.trim().parse::<FineTuneScope>()?,
            "w2v.dim" => self.w2v.dim = parse(key, v)?,
            "w2v.window" => self.w2v.window = parse(key, v)?,
            "w2v.negative" => self.w2v.negative_samples = parse(key, v)?,
            "w2v.epochs" => self.w2v.epochs = parse(key, v)?,
            "w2v.lr" => self.w2v.learning_rate = parse(key, v)?,
            "w2v_clf.batch" => self.w2v_classifier.batch_size = parse(key, v)?,
            "w2v_clf.lr" => self.w2v_classifier.lr = parse(key, v)?,
            "w2v_clf.epochs" => self.w2v_classifier.epochs = parse(key, v)?,
            "w2v_clf.bias" => self.w2v_classifier.use_bias = parse(key, v)?,
            "search.seq_lens" => self.search.seq_lens = parse_list(key, v)?,
            "search.batches" => self.search.batches = parse_list(key, v)?,
            "search.lrs" => self.search.lrs = parse_list(key, v)?,
            "search.epochs" => self.search.epochs = parse_list(key, v)?,
            "search.lr_decades" => self.lr_decades = parse_list(key, v)?,
            "eval.iterations" => self.bootstrap.iterations = parse(key, v)?,
            "eval.fraction" => self.bootstrap.fraction = parse(key, v)?,
            "eval.ci_method" => self.bootstrap.method = v.trim().parse::<CiMethod>()?,
            _ => return Err(Error::config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Replaces the seed with `URGLM_SEED` when that variable is set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = parse(SEED_ENV, &v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        let probe = EncoderConfig {
            vocab_size: self.vocab_size,
            ..self.encoder.clone()
        };
        probe.validate()?;
        self.w2v.validate()?;
        self.search.validate()?;
        if self.lr_decades.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::config("learning-rate decades must be positive"));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::default();
        let g = &self.generator;
        let mut put = |k: &str, v: String| kv.set(k, v);
        put("seed", self.seed.to_string());
        put("gen.n_labeled", g.n_labeled.to_string());
        put("gen.n_pretrain", g.n_pretrain.to_string());
        put("gen.positive_fraction", g.positive_fraction.to_string());
        put("gen.length_min", g.length.min.to_string());
        put("gen.length_mode", g.length.mode.to_string());
        put("gen.length_max", g.length.max.to_string());
        put("gen.max_urgent", g.max_urgent.to_string());
        put("gen.max_benign", g.max_benign.to_string());
        put("gen.cue_rate_positive", g.cue_rate_positive.to_string());
        put("gen.cue_rate_negative", g.cue_rate_negative.to_string());
        put("gen.missing_impression_rate", g.missing_impression_rate.to_string());
        if let Some(p) = &self.lexicon_path {
            put("gen.lexicon", p.clone());
        }
        put("split.ratios", join(&self.split_ratios));
        put("vocab.size", self.vocab_size.to_string());
        put("model.n_layers", self.encoder.n_layers.to_string());
        put("model.hidden_dim", self.encoder.hidden_dim.to_string());
        put("model.n_heads", self.encoder.n_heads.to_string());
        put("model.ffn_dim", self.encoder.ffn_dim.to_string());
        put("model.max_seq_len", self.encoder.max_seq_len.to_string());
        put("model.dropout", self.encoder.dropout_rate.to_string());
        put("pretrain.steps", self.pretrain.steps.to_string());
        put("pretrain.batch", self.pretrain.batch_size.to_string());
        put("pretrain.lr", self.pretrain.lr.to_string());
        put("finetune.batch", self.finetune.batch_size.to_string());
        put("finetune.lr", self.finetune.lr.to_string());
        put("finetune.epochs", self.finetune.epochs.to_string());
        put("finetune.scope", self.finetune.scope.to_string());
        put("w2v.dim", self.w2v.dim.to_string());
        put("w2v.window", self.w2v.window.to_string());
        put("w2v.negative", self.w2v.negative_samples.to_string());
        put("w2v.epochs", self.w2v.epochs.to_string());
        put("w2v.lr", self.w2v.learning_rate.to_string());
        put("w2v_clf.batch", self.w2v_classifier.batch_size.to_string());
        put("w2v_clf.lr", self.w2v_classifier.lr.to_string());
        put("w2v_clf.epochs", self.w2v_classifier.epochs.to_string());
        put("w2v_clf.bias", self.w2v_classifier.use_bias.to_string());
        put("search.seq_lens", join(&self.search.seq_lens));
        put("search.batches", join(&self.search.batches));
        put("search.lrs", join(&self.search.lrs));
        put("search.epochs", join(&self.search.epochs));
        put("search.lr_decades", join(&self.lr_decades));
        put("eval.iterations", self.bootstrap.iterations.to_string());
        put("eval.fraction", self.bootstrap.fraction.to_string());
        put("eval.ci_method", self.bootstrap.method.to_string());
        kv
    }

    pub fn render(&self) -> String {
        self.to_kv().render()
    }
}
