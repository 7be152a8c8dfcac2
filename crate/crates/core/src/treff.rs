//! The full adapter: zero-shot and few-shot logit fusion, the training-free
//! variant, and fine-tuning of `W` and `alpha` on the support set.

use alloc::vec::Vec;

use crate::calm::{self, AdapterParams};
use crate::embedding::{EmbeddingSet, SupportSet};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metric::{self, ScoreMatrix, ScoreRole};
use crate::objective::{self, FitObjective, RetrievalInputs};
use crate::optim::Adam;
use crate::zero_shot::{self, ZeroShotHead};

/// Optimiser settings for support-set fine-tuning.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Score every support example against the full cache, itself included.
    pub include_self: bool,
    pub objective: FitObjective,
    /// Full-batch training draws no random numbers; kept so runs are
    /// recorded with the seed they were launched under.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            include_self: true,
            objective: FitObjective::Fused,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::InvalidParameter("Adam betas must lie in [0, 1)"));
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return Err(Error::InvalidParameter("Adam epsilon must be positive"));
        }
        Ok(())
    }
}

/// Outcome of a fine-tuning run.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport<P> {
    /// Support loss at the start of each epoch, before its update.
    pub loss_per_epoch: Vec<f64>,
    /// Support loss at `final_params`.
    pub final_loss: f64,
    pub final_params: P,
    /// The support covered fewer than two classes, so the loss carries no
    /// training signal.
    pub degenerate_support: bool,
}

fn check_vocab(head: &ZeroShotHead, support: &SupportSet) -> Result<()> {
    if head.vocab() != support.vocab() {
        return Err(Error::VocabMismatch);
    }
    Ok(())
}

/// `zsl_logits + alpha · fsl`, one row of class logits per query.
pub fn treff_predict(
    params: &AdapterParams,
    head: &ZeroShotHead,
    support: &SupportSet,
    queries: &EmbeddingSet,
) -> Result<ScoreMatrix> {
    check_vocab(head, support)?;
    let zsl = zero_shot::zsl_logits(head, queries)?;
    let fsl = calm::fsl_scores(calm::calm_forward(params, queries, support)?, params.fsl);
    let mut out = zsl.into_matrix();
    for (o, &f) in out.as_mut_slice().iter_mut().zip(fsl.matrix().as_slice()) {
        *o += params.alpha * f;
    }
    ScoreMatrix::new(out, ScoreRole::Logits)
}

/// [`treff_predict`] with identity-initialised parameters: cosine retrieval
/// over the supports fused with the zero-shot logits.
pub fn treff_training_free(
    head: &ZeroShotHead,
    support: &SupportSet,
    queries: &EmbeddingSet,
) -> Result<ScoreMatrix> {
    treff_predict(&calm::identity_init(queries.dim()), head, support, queries)
}

/// Support loss and its gradients with respect to `W` and `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGradients {
    pub loss: f64,
    pub weight: Matrix,
    pub alpha: f64,
}

/// Cross-entropy of the support set scored against itself, with analytic
/// gradients.
pub fn support_loss_gradients(
    params: &AdapterParams,
    head: &ZeroShotHead,
    support: &SupportSet,
    cfg: &TrainConfig,
) -> Result<AdapterGradients> {
    check_vocab(head, support)?;
    support.embeddings().check_dim(params.dim())?;
    let (unit, mapped) = calm::transform_matrix(params.weight(), support.embeddings().matrix())?;
    let affinity = mapped.matmul_transposed(&mapped)?;
    let zsl = head.logits_unit(&unit)?;
    let g = objective::retrieval_loss(&RetrievalInputs {
        affinity: &affinity,
        support_labels: support.labels(),
        n_classes: support.n_classes(),
        zsl: &zsl,
        alpha: params.alpha,
        phi: params.phi,
        fsl: params.fsl,
        objective: cfg.objective,
        exclude_self: !cfg.include_self,
        targets: support.labels(),
    })?;

    // s = E Fᵀ with E = Q̂ Wᵀ, F = Â Wᵀ:
    // ∂L/∂W = Fᵀ Dᵀ Q̂ + Eᵀ D Â; here queries and supports coincide.
    let d = &g.affinity;
    let from_queries = mapped.transpose().matmul(&d.transpose().matmul(&unit)?)?;
    let from_supports = mapped.transpose().matmul(&d.matmul(&unit)?)?;
    let mut weight = from_queries;
    for (w, &x) in weight
        .as_mut_slice()
        .iter_mut()
        .zip(from_supports.as_slice())
    {
        *w += x;
    }
    Ok(AdapterGradients {
        loss: g.loss,
        weight,
        alpha: g.alpha,
    })
}

/// The same support loss assembled from the public prediction path, with
/// leave-one-out realised by physically removing each query from the cache.
pub fn support_loss(
    params: &AdapterParams,
    head: &ZeroShotHead,
    support: &SupportSet,
    cfg: &TrainConfig,
) -> Result<f64> {
    let score = |cache: &SupportSet, queries: &EmbeddingSet| -> Result<ScoreMatrix> {
        match cfg.objective {
            FitObjective::Fused => treff_predict(params, head, cache, queries),
            FitObjective::FewShotOnly => {
                check_vocab(head, cache)?;
                Ok(calm::fsl_scores(
                    calm::calm_forward(params, queries, cache)?,
                    params.fsl,
                ))
            }
        }
    };
    if cfg.include_self {
        let logits = score(support, support.embeddings())?;
        return metric::cross_entropy(&logits, support.labels());
    }
    if support.len() < 2 {
        return Err(Error::InvalidParameter(
            "leave-one-out needs at least two supports",
        ));
    }
    let mut total = 0.0;
    for i in 0..support.len() {
        let keep = objective::without(support.len(), i);
        let cache = SupportSet::new(
            support.embeddings().select(&keep),
            keep.iter().map(|&j| support.labels()[j]).collect(),
            support.vocab().clone(),
        )?;
        let logits = score(&cache, &support.embeddings().select(&[i]))?;
        total += metric::cross_entropy(&logits, &[support.labels()[i]])?;
    }
    Ok(total / support.len() as f64)
}

/// Fine-tunes from identity initialisation.
pub fn treff_finetune(
    head: &ZeroShotHead,
    support: &SupportSet,
    cfg: &TrainConfig,
) -> Result<FitReport<AdapterParams>> {
    finetune_adapter(calm::identity_init(support.dim()), head, support, cfg)
}

/// Full-batch Adam on `W` and `alpha` starting from `init`.
pub fn finetune_adapter(
    init: AdapterParams,
    head: &ZeroShotHead,
    support: &SupportSet,
    cfg: &TrainConfig,
) -> Result<FitReport<AdapterParams>> {
    cfg.validate()?;
    check_vocab(head, support)?;
    let degenerate_support = support.class_counts().iter().filter(|&&c| c > 0).count() < 2;

    let mut params = init;
    let n_weights = params.dim() * params.dim();
    let mut flat: Vec<f64> = params.weight().as_slice().to_vec();
    flat.push(params.alpha);
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
        let g = support_loss_gradients(&params, head, support, cfg)?;
        if !g.loss.is_finite() || !g.weight.is_finite() || !g.alpha.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        loss_per_epoch.push(g.loss);
        grads[..n_weights].copy_from_slice(g.weight.as_slice());
        grads[n_weights] = g.alpha;
        adam.step(&mut flat, &grads);
        params
            .weight_mut()
            .as_mut_slice()
            .copy_from_slice(&flat[..n_weights]);
        params.alpha = flat[n_weights];
    }

    let final_loss = support_loss_gradients(&params, head, support, cfg)?.loss;
    if !final_loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: cfg.epochs });
    }
    Ok(FitReport {
        loss_per_epoch,
        final_loss,
        final_params: params,
        degenerate_support,
    })
}

/// Largest relative disagreement between analytic and central-difference
/// gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub weight: f64,
    pub alpha: f64,
}

impl GradCheck {
    pub fn max_rel_error(&self) -> f64 {
        self.weight.max(self.alpha)
    }
}

/// Compares [`support_loss_gradients`] with central differences of
/// [`support_loss`] at step `epsilon`.
pub fn grad_check(
    params: &AdapterParams,
    head: &ZeroShotHead,
    support: &SupportSet,
    cfg: &TrainConfig,
    epsilon: f64,
) -> Result<GradCheck> {
    let analytic = support_loss_gradients(params, head, support, cfg)?;
    let mut probe = params.clone();
    let mut weight_err: f64 = 0.0;
    for k in 0..analytic.weight.as_slice().len() {
        let orig = params.weight().as_slice()[k];
        probe.weight_mut().as_mut_slice()[k] = orig + epsilon;
        let up = support_loss(&probe, head, support, cfg)?;
        probe.weight_mut().as_mut_slice()[k] = orig - epsilon;
        let down = support_loss(&probe, head, support, cfg)?;
        probe.weight_mut().as_mut_slice()[k] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        weight_err = weight_err.max(objective::relative_error(
            analytic.weight.as_slice()[k],
            numeric,
        ));
    }
    probe.alpha = params.alpha + epsilon;
    let up = support_loss(&probe, head, support, cfg)?;
    probe.alpha = params.alpha - epsilon;
    let down = support_loss(&probe, head, support, cfg)?;
    let numeric = (up - down) / (2.0 * epsilon);
    Ok(GradCheck {
        weight: weight_err,
        alpha: objective::relative_error(analytic.alpha, numeric),
    })
}
