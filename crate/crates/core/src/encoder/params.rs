use rand::Rng as _;

use super::EncoderConfig;
use crate::error::Result;
use crate::rng;
use crate::{ParamSet, Scalar, Tensor};

/// One transformer block. Linear weights are stored `[out × in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub query_w: Tensor<T>,
    pub query_b: Tensor<T>,
    pub key_w: Tensor<T>,
    pub key_b: Tensor<T>,
    pub value_w: Tensor<T>,
    pub value_b: Tensor<T>,
    pub output_w: Tensor<T>,
    pub output_b: Tensor<T>,
    pub ln1_gain: Tensor<T>,
    pub ln1_shift: Tensor<T>,
    pub ffn_in_w: Tensor<T>,
    pub ffn_in_b: Tensor<T>,
    pub ffn_out_w: Tensor<T>,
    pub ffn_out_b: Tensor<T>,
    pub ln2_gain: Tensor<T>,
    pub ln2_shift: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T> {
    pub token_embeddings: Tensor<T>,
    pub position_embeddings: Tensor<T>,
    pub layers: Vec<LayerParams<T>>,
    pub mlm_w: Tensor<T>,
    pub mlm_b: Tensor<T>,
    pub pooler_w: Tensor<T>,
    pub pooler_b: Tensor<T>,
    pub classifier_w: Tensor<T>,
    pub classifier_b: Tensor<T>,
}

impl<T: Scalar> LayerParams<T> {
    fn zeros(h: usize, f: usize) -> Self {
        let z = |s: &[usize]| Tensor::zeros(s);
        LayerParams {
            query_w: z(&[h, h]),
            query_b: z(&[h]),
            key_w: z(&[h, h]),
            key_b: z(&[h]),
            value_w: z(&[h, h]),
            value_b: z(&[h]),
            output_w: z(&[h, h]),
            output_b: z(&[h]),
            ln1_gain: z(&[h]),
            ln1_shift: z(&[h]),
            ffn_in_w: z(&[f, h]),
            ffn_in_b: z(&[f]),
            ffn_out_w: z(&[h, f]),
            ffn_out_b: z(&[h]),
            ln2_gain: z(&[h]),
            ln2_shift: z(&[h]),
        }
    }

    fn named(&self) -> [(&'static str, &Tensor<T>); 16] {
        [
            ("attention.query.weight", &self.query_w),
            ("attention.query.bias", &self.query_b),
            ("attention.key.weight", &self.key_w),
            ("attention.key.bias", &self.key_b),
            ("attention.value.weight", &self.value_w),
            ("attention.value.bias", &self.value_b),
            ("attention.output.weight", &self.output_w),
            ("attention.output.bias", &self.output_b),
            ("ln1.gain", &self.ln1_gain),
            ("ln1.shift", &self.ln1_shift),
            ("ffn.in.weight", &self.ffn_in_w),
            ("ffn.in.bias", &self.ffn_in_b),
            ("ffn.out.weight", &self.ffn_out_w),
            ("ffn.out.bias", &self.ffn_out_b),
            ("ln2.gain", &self.ln2_gain),
            ("ln2.shift", &self.ln2_shift),
        ]
    }

    fn named_mut(&mut self) -> [(&'static str, &mut Tensor<T>); 16] {
        [
            ("attention.query.weight", &mut self.query_w),
            ("attention.query.bias", &mut self.query_b),
            ("attention.key.weight", &mut self.key_w),
            ("attention.key.bias", &mut self.key_b),
            ("attention.value.weight", &mut self.value_w),
            ("attention.value.bias", &mut self.value_b),
            ("attention.output.weight", &mut self.output_w),
            ("attention.output.bias", &mut self.output_b),
            ("ln1.gain", &mut self.ln1_gain),
            ("ln1.shift", &mut self.ln1_shift),
            ("ffn.in.weight", &mut self.ffn_in_w),
            ("ffn.in.bias", &mut self.ffn_in_b),
            ("ffn.out.weight", &mut self.ffn_out_w),
            ("ffn.out.bias", &mut self.ffn_out_b),
            ("ln2.gain", &mut self.ln2_gain),
            ("ln2.shift", &mut self.ln2_shift),
        ]
    }
}

impl<T: Scalar> EncoderParams<T> {
    /// All-zero parameters shaped by `cfg`; also the gradient accumulator.
    pub fn zeros(cfg: &EncoderConfig) -> Self {
        let (h, v) = (cfg.hidden_dim, cfg.vocab_size);
        EncoderParams {
            token_embeddings: Tensor::zeros(&[v, h]),
            position_embeddings: Tensor::zeros(&[cfg.max_seq_len, h]),
            layers: (0..cfg.n_layers).map(|_| LayerParams::zeros(h, cfg.ffn_dim)).collect(),
            mlm_w: Tensor::zeros(&[v, h]),
            mlm_b: Tensor::zeros(&[v]),
            pooler_w: Tensor::zeros(&[h, h]),
            pooler_b: Tensor::zeros(&[h]),
            classifier_w: Tensor::zeros(&[2, h]),
            classifier_b: Tensor::zeros(&[2]),
        }
    }

    pub fn zero_grad(&mut self) {
        for (_, t) in self.tensors_mut() {
            t.fill(T::zero());
        }
    }

    pub fn cast<U: Scalar>(&self) -> EncoderParams<U> {
        let c = |t: &Tensor<T>| t.cast::<U>();
        EncoderParams {
            token_embeddings: c(&self.token_embeddings),
            position_embeddings: c(&self.position_embeddings),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    query_w: c(&l.query_w),
                    query_b: c(&l.query_b),
                    key_w: c(&l.key_w),
                    key_b: c(&l.key_b),
                    value_w: c(&l.value_w),
                    value_b: c(&l.value_b),
                    output_w: c(&l.output_w),
                    output_b: c(&l.output_b),
                    ln1_gain: c(&l.ln1_gain),
                    ln1_shift: c(&l.ln1_shift),
                    ffn_in_w: c(&l.ffn_in_w),
                    ffn_in_b: c(&l.ffn_in_b),
                    ffn_out_w: c(&l.ffn_out_w),
                    ffn_out_b: c(&l.ffn_out_b),
                    ln2_gain: c(&l.ln2_gain),
                    ln2_shift: c(&l.ln2_shift),
                })
                .collect(),
            mlm_w: c(&self.mlm_w),
            mlm_b: c(&self.mlm_b),
            pooler_w: c(&self.pooler_w),
            pooler_b: c(&self.pooler_b),
            classifier_w: c(&self.classifier_w),
            classifier_b: c(&self.classifier_b),
        }
    }

    /// Shapes implied by the tensors themselves.
    pub fn matches(&self, cfg: &EncoderConfig) -> bool {
        let reference = EncoderParams::<T>::zeros(cfg);
        let a = self.tensors();
        let b = reference.tensors();
        a.len() == b.len()
            && a.iter()
                .zip(&b)
                .all(|((na, ta), (nb, tb))| na == nb && ta.shape() == tb.shape())
    }
}

impl<T: Scalar> ParamSet<T> for EncoderParams<T> {
    fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = vec![
            ("embeddings.token".to_string(), &self.token_embeddings),
            ("embeddings.position".to_string(), &self.position_embeddings),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            out.extend(l.named().into_iter().map(|(n, t)| (format!("layer{i}.{n}"), t)));
        }
        out.extend([
            ("mlm.weight".to_string(), &self.mlm_w),
            ("mlm.bias".to_string(), &self.mlm_b),
            ("pooler.weight".to_string(), &self.pooler_w),
            ("pooler.bias".to_string(), &self.pooler_b),
            ("classifier.weight".to_string(), &self.classifier_w),
            ("classifier.bias".to_string(), &self.classifier_b),
        ]);
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = vec![
            ("embeddings.token".to_string(), &mut self.token_embeddings),
            ("embeddings.position".to_string(), &mut self.position_embeddings),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.extend(l.named_mut().into_iter().map(|(n, t)| (format!("layer{i}.{n}"), t)));
        }
        out.extend([
            ("mlm.weight".to_string(), &mut self.mlm_w),
            ("mlm.bias".to_string(), &mut self.mlm_b),
            ("pooler.weight".to_string(), &mut self.pooler_w),
            ("pooler.bias".to_string(), &mut self.pooler_b),
            ("classifier.weight".to_string(), &mut self.classifier_w),
            ("classifier.bias".to_string(), &mut self.classifier_b),
        ]);
        out
    }
}

const INIT_STD: f64 = 0.02;

/// Normal(0, std²) truncated at ±2 std by rejection.
fn truncated_normal(rng: &mut rng::Rng, std: f64) -> f64 {
    loop {
        // Box-Muller
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen();
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}

/// Weights ~ truncated normal(0, 0.02²); biases and shifts zero; gains one.
/// Each tensor draws from its own stream keyed by its position.
pub fn init_params<T: Scalar>(cfg: &EncoderConfig, seed: u64) -> Result<EncoderParams<T>> {
    cfg.validate()?;
    let mut p = EncoderParams::<T>::zeros(cfg);
    for (i, (name, t)) in p.tensors_mut().into_iter().enumerate() {
        if name.ends_with(".gain") {
            t.fill(T::one());
        } else if name.ends_with(".bias") || name.ends_with(".shift") {
            t.fill(T::zero());
        } else {
            let mut r = rng::keyed(seed, i as u64);
            for x in t.data_mut() {
                *x = T::lit(truncated_normal(&mut r, INIT_STD));
            }
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let cfg = EncoderConfig::tiny();
        let a: EncoderParams<f64> = init_params(&cfg, 9).unwrap();
        assert_eq!(a, init_params(&cfg, 9).unwrap());
        assert_ne!(a, init_params(&cfg, 10).unwrap());
    }

    #[test]
    fn init_statistics() {
        let cfg = EncoderConfig::default();
        let p: EncoderParams<f64> = init_params(&cfg, 1).unwrap();
        let w = p.token_embeddings.data();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        assert!(mean.abs() < 0.005, "mean {mean}");
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w.len() as f64;
        // Variance of a ±2σ truncated normal is about 0.774 σ².
        assert!((var.sqrt() - 0.02 * 0.774f64.sqrt()).abs() < 0.001);
        assert!(w.iter().all(|x| x.abs() <= 0.04));
        for l in &p.layers {
            assert!(l.ln1_gain.data().iter().all(|&g| g == 1.0));
            assert!(l.ln2_gain.data().iter().all(|&g| g == 1.0));
            assert!(l.ffn_in_b.data().iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn tensor_names_are_unique_and_ordered() {
        let p = EncoderParams::<f32>::zeros(&EncoderConfig::default());
        let names: Vec<String> = p.tensors().into_iter().map(|(n, _)| n).collect();
        let mut dedup = names.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), names.len());
        assert_eq!(names.len(), 2 + 16 * 2 + 6);
        let mut_names: Vec<String> = {
            let mut q = p.clone();
            q.tensors_mut().into_iter().map(|(n, _)| n).collect()
        };
        assert_eq!(names, mut_names);
    }
}
