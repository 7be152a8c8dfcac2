//! Cross-attention linear model.
//!
//! Queries and supports are normalised, passed through one shared square
//! linear map `W`, compared by dot product, sharpened by `φ` and aggregated
//! against the supports' one-hot labels into per-class scores.

use crate::embedding::{EmbeddingSet, SupportSet};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metric::{self, ScoreMatrix, ScoreRole, Sharpness};

/// How few-shot class scores enter the fused logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum FslScores {
    /// Raw `Σ φ(s)·y` sums.
    #[default]
    Logits,
    /// Sums rescaled to add up to one per query.
    Probabilities,
}

/// Trainable state of the adapter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterParams {
    weight: Matrix,
    pub phi: Sharpness,
    pub alpha: f64,
    pub fsl: FslScores,
}

impl AdapterParams {
    pub const DEFAULT_ALPHA: f64 = 1.0;

    pub fn new(weight: Matrix, phi: Sharpness, alpha: f64) -> Result<Self> {
        if weight.rows() == 0 || weight.rows() != weight.cols() {
            return Err(Error::InvalidParameter(
                "adapter weight must be a non-empty square matrix",
            ));
        }
        if !weight.is_finite() || !alpha.is_finite() {
            return Err(Error::InvalidParameter("adapter parameters must be finite"));
        }
        Ok(Self {
            weight,
            phi,
            alpha,
            fsl: FslScores::default(),
        })
    }

    /// `W = I`, `b = 5.5`, `alpha = 1`.
    pub fn identity(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        Self {
            weight: Matrix::identity(dim),
            phi: Sharpness::default(),
            alpha: Self::DEFAULT_ALPHA,
            fsl: FslScores::default(),
        }
    }

    pub fn with_sharpness(mut self, phi: Sharpness) -> Self {
        self.phi = phi;
        self
    }

    pub fn with_fsl_scores(mut self, fsl: FslScores) -> Self {
        self.fsl = fsl;
        self
    }

    pub fn dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn b(&self) -> f64 {
        self.phi.b()
    }

    pub(crate) fn weight_mut(&mut self) -> &mut Matrix {
        &mut self.weight
    }
}

/// Identity-initialised parameters for embeddings of width `dim`.
pub fn identity_init(dim: usize) -> AdapterParams {
    AdapterParams::identity(dim)
}

pub(crate) fn transform_matrix(weight: &Matrix, set: &Matrix) -> Result<(Matrix, Matrix)> {
    let unit = metric::normalize_rows(set)?;
    let mapped = unit.matmul_transposed(weight)?;
    Ok((unit, mapped))
}

/// Normalises each row, then maps it through the shared `W` (`x̂ Wᵀ`).
///
/// The output is not re-normalised.
pub fn transform(params: &AdapterParams, set: &EmbeddingSet) -> Result<EmbeddingSet> {
    set.check_dim(params.dim())?;
    let (_, mapped) = transform_matrix(&params.weight, set.matrix())?;
    EmbeddingSet::from_matrix(mapped)
}

/// Affinities `s_ij` between transformed queries and transformed supports.
pub fn calm_affinity(
    params: &AdapterParams,
    queries: &EmbeddingSet,
    supports: &EmbeddingSet,
) -> Result<ScoreMatrix> {
    queries.check_dim(params.dim())?;
    supports.check_dim(params.dim())?;
    let (_, e) = transform_matrix(&params.weight, queries.matrix())?;
    let (_, f) = transform_matrix(&params.weight, supports.matrix())?;
    ScoreMatrix::new(e.matmul_transposed(&f)?, ScoreRole::Affinity)
}

/// Unnormalised class scores `o_ic = Σ_j φ(s_ij) · y_jc`.
pub fn calm_forward(
    params: &AdapterParams,
    queries: &EmbeddingSet,
    support: &SupportSet,
) -> Result<ScoreMatrix> {
    let s = calm_affinity(params, queries, support.embeddings())?;
    aggregate(&s, params.phi, support)
}

pub(crate) fn aggregate(
    affinity: &ScoreMatrix,
    phi: Sharpness,
    support: &SupportSet,
) -> Result<ScoreMatrix> {
    let mut out = Matrix::zeros(affinity.rows(), support.n_classes());
    for i in 0..affinity.rows() {
        let dst = out.row_mut(i);
        for (&s, &label) in affinity.row(i).iter().zip(support.labels()) {
            dst[label] += phi.apply(s);
        }
    }
    ScoreMatrix::new(out, ScoreRole::Logits)
}

/// Rescales few-shot scores according to `mode`.
pub fn fsl_scores(scores: ScoreMatrix, mode: FslScores) -> ScoreMatrix {
    match mode {
        FslScores::Logits => scores,
        FslScores::Probabilities => {
            let mut m = scores.into_matrix();
            for i in 0..m.rows() {
                let row = m.row_mut(i);
                let total: f64 = row.iter().sum();
                if total > 0.0 {
                    row.iter_mut().for_each(|x| *x /= total);
                }
            }
            ScoreMatrix::from_parts(m, ScoreRole::Probabilities)
        }
    }
}
