//! Urgency classification of radiology reports with a small masked-language-model
//! encoder, a skip-gram baseline, and bootstrap evaluation.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). Training runs in
//! `f32`; gradient verification runs in `f64`.

pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod kv;
pub mod optim;
pub mod pipeline;
pub mod rng;
mod scalar;
mod tensor;
pub mod tokenizer;
pub mod tune;
pub mod word2vec;

pub use error::{Error, Result};
pub use scalar::{axpy, dot, log_sum_exp, softmax_in_place, Scalar};
pub use tensor::{ParamSet, Tensor};

/// Scalar used for training and inference.
pub type Real = f32;
/// Encoder parameters at training precision.
pub type Encoder = encoder::EncoderParams<Real>;
/// Skip-gram embedding table at training precision.
pub type Embeddings = word2vec::WordEmbeddings<Real>;
/// Baseline classifier head at training precision.
pub type Classifier = word2vec::W2VClassifier<Real>;
