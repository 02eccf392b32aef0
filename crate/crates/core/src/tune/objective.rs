use super::{HyperParams, Objective};
use crate::corpus::Report;
use crate::encoder::{EncoderConfig, EncoderParams, FineTuneScope};
use crate::error::{Error, Result};
use crate::optim::{examples_from_reports, finetune, FinetuneConfig};
use crate::tokenizer::Vocabulary;
use crate::Scalar;

/// Fine-tunes a copy of the same starting checkpoint for every trial.
pub struct FinetuneObjective<'a, T> {
    pub start: &'a EncoderParams<T>,
    pub cfg: &'a EncoderConfig,
    pub vocab: &'a Vocabulary,
    pub train: &'a [Report],
    pub dev: &'a [Report],
    pub scope: FineTuneScope,
}

impl<T: Scalar> Objective for FinetuneObjective<'_, T> {
    fn dev_curve(&mut self, hp: &HyperParams, seed: u64) -> Result<Vec<f64>> {
        if hp.seq_len > self.cfg.max_seq_len {
            return Err(Error::config(format!(
                "seq_len {} exceeds the model's max_seq_len {}",
                hp.seq_len, self.cfg.max_seq_len
            )));
        }
        let train = examples_from_reports(self.train, self.vocab, hp.seq_len)?;
        let dev = examples_from_reports(self.dev, self.vocab, hp.seq_len)?;
        let mut params = self.start.clone();
        let fc = FinetuneConfig {
            batch_size: hp.batch,
            lr: hp.lr,
            epochs: hp.epochs,
            scope: self.scope,
            seed,
        };
        Ok(finetune(&mut params, self.cfg, &train, &dev, &fc)?.dev_curve)
    }
}
