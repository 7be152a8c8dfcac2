//! Comparison heads over the same frozen embeddings: a cache model with
//! trainable keys, prototype distances and matching-style attention.

use alloc::vec::Vec;

use crate::calm::FslScores;
use crate::embedding::{ClassVocabulary, EmbeddingSet, SupportSet};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metric::{self, ScoreMatrix, ScoreRole, Sharpness};
use crate::objective::{self, FitObjective, RetrievalInputs};
use crate::optim::Adam;
use crate::treff::{FitReport, TrainConfig};
use crate::zero_shot::ZeroShotHead;

/// Key/value cache: keys start as the normalised support embeddings and
/// are trainable, values are the frozen one-hot support labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TipCache {
    keys: Matrix,
    labels: Vec<usize>,
    vocab: ClassVocabulary,
    pub phi: Sharpness,
    pub alpha: f64,
}

impl TipCache {
    /// Untrained cache over `support` with sharpness `beta` and `alpha = 1`.
    pub fn from_support(support: &SupportSet, beta: Sharpness) -> Result<Self> {
        Ok(Self {
            keys: metric::normalize_rows(support.embeddings().matrix())?,
            labels: support.labels().to_vec(),
            vocab: support.vocab().clone(),
            phi: beta,
            alpha: 1.0,
        })
    }

    pub fn keys(&self) -> &Matrix {
        &self.keys
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn values(&self) -> ScoreMatrix {
        crate::embedding::one_hot(&self.labels, self.vocab.len())
            .expect("labels checked at construction")
    }

    pub fn vocab(&self) -> &ClassVocabulary {
        &self.vocab
    }

    pub(crate) fn keys_mut(&mut self) -> &mut Matrix {
        &mut self.keys
    }
}

/// `zsl_logits + alpha · φ(q̂ Kᵀ) · values`.
pub fn tip_predict(
    cache: &TipCache,
    head: &ZeroShotHead,
    queries: &EmbeddingSet,
) -> Result<ScoreMatrix> {
    if head.vocab() != &cache.vocab {
        return Err(Error::VocabMismatch);
    }
    queries.check_dim(cache.keys.cols())?;
    let unit = metric::normalize_rows(queries.matrix())?;
    let mut out = head.logits_unit(&unit)?;
    let affinity = unit.matmul_transposed(&cache.keys)?;
    for i in 0..out.rows() {
        let dst = out.row_mut(i);
        for (&s, &label) in affinity.row(i).iter().zip(&cache.labels) {
            dst[label] += cache.alpha * cache.phi.apply(s);
        }
    }
    ScoreMatrix::new(out, ScoreRole::Logits)
}

/// Support loss of the cache and its gradients with respect to keys and
/// `alpha`.
pub fn tip_loss_gradients(
    cache: &TipCache,
    head: &ZeroShotHead,
    support: &SupportSet,
    cfg: &TrainConfig,
) -> Result<(f64, Matrix, f64)> {
    if head.vocab() != &cache.vocab || support.vocab() != &cache.vocab {
        return Err(Error::VocabMismatch);
    }
    support.embeddings().check_dim(cache.keys.cols())?;
    if support.len() != cache.labels.len() {
        return Err(Error::LabelCount {
            labels: cache.labels.len(),
            rows: support.len(),
        });
    }
    let unit = metric::normalize_rows(support.embeddings().matrix())?;
    let affinity = unit.matmul_transposed(&cache.keys)?;
    let zsl = head.logits_unit(&unit)?;
    let g = objective::retrieval_loss(&RetrievalInputs {
        affinity: &affinity,
        support_labels: &cache.labels,
        n_classes: cache.vocab.len(),
        zsl: &zsl,
        alpha: cache.alpha,
        phi: cache.phi,
        fsl: FslScores::Logits,
        objective: cfg.objective,
        exclude_self: !cfg.include_self,
        targets: support.labels(),
    })?;
    // s_ij = q̂_i · k_j  ⇒  ∂L/∂K = Dᵀ Q̂
    let keys = g.affinity.transpose().matmul(&unit)?;
    Ok((g.loss, keys, g.alpha))
}

/// Full-batch Adam on the cache keys and `alpha`; values stay frozen.
pub fn tip_finetune(
    cache: &TipCache,
    head: &ZeroShotHead,
    support: &SupportSet,
    cfg: &TrainConfig,
) -> Result<FitReport<TipCache>> {
    cfg.validate()?;
    let degenerate_support = support.class_counts().iter().filter(|&&c| c > 0).count() < 2;
    let mut cache = cache.clone();
    let n_keys = cache.keys.as_slice().len();
    let mut flat: Vec<f64> = cache.keys.as_slice().to_vec();
    flat.push(cache.alpha);
    let mut grads = alloc::vec![0.0; flat.len()];
    let mut adam = Adam::new(
        flat.len(),
        cfg.learning_rate,
        cfg.adam_beta1,
        cfg.adam_beta2,
        cfg.adam_eps,
    );
    let mut loss_per_epoch = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let (loss, g_keys, g_alpha) = tip_loss_gradients(&cache, head, support, cfg)?;
        if !loss.is_finite() || !g_keys.is_finite() || !g_alpha.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        loss_per_epoch.push(loss);
        grads[..n_keys].copy_from_slice(g_keys.as_slice());
        grads[n_keys] = if cfg.objective == FitObjective::Fused {
            g_alpha
        } else {
            0.0
        };
        adam.step(&mut flat, &grads);
        cache
            .keys_mut()
            .as_mut_slice()
            .copy_from_slice(&flat[..n_keys]);
        cache.alpha = flat[n_keys];
    }
    let final_loss = tip_loss_gradients(&cache, head, support, cfg)?.0;
    if !final_loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: cfg.epochs });
    }
    Ok(FitReport {
        loss_per_epoch,
        final_loss,
        final_params: cache,
        degenerate_support,
    })
}

/// Per-class mean of the support embeddings, optionally normalising rows
/// first.
pub fn prototypes(support: &SupportSet, normalize: bool) -> Result<Matrix> {
    let rows = if normalize {
        metric::normalize_rows(support.embeddings().matrix())?
    } else {
        support.embeddings().matrix().clone()
    };
    let mut protos = Matrix::zeros(support.n_classes(), support.dim());
    let counts = support.class_counts();
    if let Some(class) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass { class });
    }
    for (r, &label) in rows.iter_rows().zip(support.labels()) {
        for (p, &x) in protos.row_mut(label).iter_mut().zip(r) {
            *p += x;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        protos
            .row_mut(c)
            .iter_mut()
            .for_each(|p| *p /= count as f64);
    }
    Ok(protos)
}

/// Negative squared Euclidean distance to each class prototype, computed on
/// the raw embeddings.
pub fn proto_predict(support: &SupportSet, queries: &EmbeddingSet) -> Result<ScoreMatrix> {
    proto_predict_with(support, queries, false)
}

/// [`proto_predict`] with optional row normalisation of queries and supports.
pub fn proto_predict_with(
    support: &SupportSet,
    queries: &EmbeddingSet,
    normalize: bool,
) -> Result<ScoreMatrix> {
    queries.check_dim(support.dim())?;
    let protos = prototypes(support, normalize)?;
    let queries = if normalize {
        metric::normalize_rows(queries.matrix())?
    } else {
        queries.matrix().clone()
    };
    let mut out = Matrix::zeros(queries.rows(), protos.rows());
    for (i, q) in queries.iter_rows().enumerate() {
        for (c, p) in protos.iter_rows().enumerate() {
            let d2: f64 = q.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
            out.set(i, c, -d2);
        }
    }
    ScoreMatrix::new(out, ScoreRole::Logits)
}

/// Softmax attention over query-support cosines, pooled over the one-hot
/// support labels. Each output row is a probability distribution.
pub fn match_predict(support: &SupportSet, queries: &EmbeddingSet) -> Result<ScoreMatrix> {
    let cos = metric::cosine_matrix(queries, support.embeddings())?;
    let attention = metric::softmax_rows(&cos);
    let mut out = Matrix::zeros(queries.rows(), support.n_classes());
    for i in 0..out.rows() {
        let dst = out.row_mut(i);
        for (&a, &label) in attention.row(i).iter().zip(support.labels()) {
            dst[label] += a;
        }
    }
    ScoreMatrix::new(out, ScoreRole::Probabilities)
}
