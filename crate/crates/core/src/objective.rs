//! Support-set cross-entropy shared by the Treff adapter and the cache
//! model, with its gradient with respect to the affinity matrix and `alpha`.
//!
//! Both heads score queries as
//! `z = zsl + alpha · g(Σ_j φ(s_ij) y_j)`, differing only in how the
//! affinity `s` is produced, so the backward pass stops at `∂L/∂s` and each
//! caller chains it into its own parameters.

use alloc::vec;
use alloc::vec::Vec;

use crate::calm::FslScores;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metric::{self, Sharpness};

/// Which logits the support loss is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum FitObjective {
    /// `zsl + alpha · fsl`; both the retrieval parameters and `alpha` train.
    #[default]
    Fused,
    /// Few-shot scores alone; `alpha` receives no gradient.
    FewShotOnly,
}

pub(crate) struct RetrievalInputs<'a> {
    pub affinity: &'a Matrix,
    pub support_labels: &'a [usize],
    pub n_classes: usize,
    pub zsl: &'a Matrix,
    pub alpha: f64,
    pub phi: Sharpness,
    pub fsl: FslScores,
    pub objective: FitObjective,
    /// Drop the `j == i` terms (queries are the supports themselves).
    pub exclude_self: bool,
    pub targets: &'a [usize],
}

pub(crate) struct RetrievalGrad {
    pub loss: f64,
    pub alpha: f64,
    /// `∂L/∂s`, same shape as the affinity.
    pub affinity: Matrix,
}

pub(crate) fn retrieval_loss(x: &RetrievalInputs<'_>) -> Result<RetrievalGrad> {
    let (q, m) = (x.affinity.rows(), x.affinity.cols());
    let n = x.n_classes;
    debug_assert_eq!(x.support_labels.len(), m);
    debug_assert_eq!(x.targets.len(), q);

    let mut loss = 0.0;
    let mut grad_alpha = 0.0;
    let mut grad_s = Matrix::zeros(q, m);
    let mut scores = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut g_scores = vec![0.0; n];

    for i in 0..q {
        let srow = x.affinity.row(i);
        scores.iter_mut().for_each(|v| *v = 0.0);
        for (j, (&s, &label)) in srow.iter().zip(x.support_labels).enumerate() {
            if x.exclude_self && i == j {
                continue;
            }
            scores[label] += x.phi.apply(s);
        }
        let total: f64 = scores.iter().sum();
        let normalised = x.fsl == FslScores::Probabilities && total > 0.0;
        if normalised {
            scores.iter_mut().for_each(|v| *v /= total);
        }

        match x.objective {
            FitObjective::Fused => {
                for ((zc, &zs), &o) in z.iter_mut().zip(x.zsl.row(i)).zip(&scores) {
                    *zc = zs + x.alpha * o;
                }
            }
            FitObjective::FewShotOnly => z.copy_from_slice(&scores),
        }

        let target = x.targets[i];
        if target >= n {
            return Err(Error::LabelOutOfRange {
                id: target,
                classes: n,
            });
        }
        loss += metric::log_sum_exp(&z) - z[target];

        // ∂L/∂z = (softmax(z) - onehot(target)) / q
        metric::softmax_in_place(&mut z);
        z[target] -= 1.0;
        z.iter_mut().for_each(|v| *v /= q as f64);

        let fsl_weight = match x.objective {
            FitObjective::Fused => {
                grad_alpha += z.iter().zip(&scores).map(|(g, o)| g * o).sum::<f64>();
                x.alpha
            }
            FitObjective::FewShotOnly => 1.0,
        };
        for (gs, &gz) in g_scores.iter_mut().zip(&z) {
            *gs = fsl_weight * gz;
        }
        if normalised {
            // d(o_c / Σo)/d o_c' = (δ_cc' - õ_c) / Σo
            let mean: f64 = g_scores.iter().zip(&scores).map(|(g, o)| g * o).sum();
            g_scores.iter_mut().for_each(|g| *g = (*g - mean) / total);
        }

        let dst = grad_s.row_mut(i);
        for (j, (&s, &label)) in srow.iter().zip(x.support_labels).enumerate() {
            if x.exclude_self && i == j {
                continue;
            }
            dst[j] = g_scores[label] * x.phi.derivative(s);
        }
    }

    let loss = loss / q.max(1) as f64;
    Ok(RetrievalGrad {
        loss: loss.max(0.0),
        alpha: grad_alpha,
        affinity: grad_s,
    })
}

/// Relative error used by the finite-difference checks.
pub(crate) fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Gradients smaller than this are compared in absolute terms.
pub(crate) const REL_ERROR_FLOOR: f64 = 1e-8;

/// Labels of the rows kept when row `skip` is left out.
pub(crate) fn without(indices: usize, skip: usize) -> Vec<usize> {
    (0..indices).filter(|&j| j != skip).collect()
}
