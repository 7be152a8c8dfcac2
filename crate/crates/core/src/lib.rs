//! Few-shot classification over frozen audio-language embeddings.
//!
//! The crate is `no_std` and only needs `alloc`. It provides:
//!
//! * embedding containers and label encodings ([`embedding`]),
//! * similarity kernels ([`metric`]),
//! * the cross-attention linear model ([`calm`]) and the zero-shot head
//!   ([`zero_shot`]), fused and fine-tuned in [`treff`],
//! * cache-model, prototype and matching heads for comparison
//!   ([`baselines`]),
//! * n-way k-shot episode sampling and evaluation ([`episodes`]),
//! * a seeded clustered-sphere data generator ([`synthgen`]).
#![no_std]

extern crate alloc;

pub mod baselines;
pub mod calm;
pub mod embedding;
pub mod episodes;
pub mod error;
pub mod matrix;
pub mod metric;
mod objective;
pub mod optim;
pub mod synthgen;
pub mod treff;
pub mod zero_shot;

pub use calm::{calm_affinity, calm_forward, identity_init, transform, AdapterParams, FslScores};
pub use embedding::{one_hot, ClassVocabulary, EmbeddingSet, SupportSet};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use metric::{
    cosine_matrix, cross_entropy, l2_normalize, phi_scale, softmax_rows, PhiSign, ScoreMatrix,
    ScoreRole, Sharpness,
};
pub use objective::FitObjective;
pub use treff::{
    grad_check, treff_finetune, treff_predict, treff_training_free, FitReport, TrainConfig,
};
pub use zero_shot::{zsl_logits, zsl_predict, ZeroShotHead};
