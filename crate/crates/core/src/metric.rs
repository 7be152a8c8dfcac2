//! Numeric kernels shared by every head: row normalisation, cosine
//! similarity, the sharpness function applied to affinities, softmax and
//! cross-entropy.
//!
//! All reductions run in `f64`.

use alloc::vec::Vec;

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::matrix::{self, Matrix};

/// Rows with a Euclidean norm below this are treated as degenerate.
pub const ZERO_NORM_THRESHOLD: f64 = 1e-12;

/// What a [`ScoreMatrix`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum ScoreRole {
    Affinity,
    Logits,
    Probabilities,
    OneHot,
}

/// A finite score matrix tagged with its semantic role.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    values: Matrix,
    role: ScoreRole,
}

impl ScoreMatrix {
    pub fn new(values: Matrix, role: ScoreRole) -> Result<Self> {
        if let Some((row, col)) = values.first_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        Ok(Self { values, role })
    }

    /// Wraps values the caller has already checked.
    pub(crate) fn from_parts(values: Matrix, role: ScoreRole) -> Self {
        debug_assert!(values.is_finite());
        Self { values, role }
    }

    pub fn role(&self) -> ScoreRole {
        self.role
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.get(i, j)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.values
    }

    pub fn into_matrix(self) -> Matrix {
        self.values
    }

    /// Per-row index of the largest score; ties go to the lowest index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        self.values.iter_rows().map(argmax).collect()
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

pub(crate) fn normalize_rows(m: &Matrix) -> Result<Matrix> {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let n = matrix::norm(row);
        if n.is_nan() || n < ZERO_NORM_THRESHOLD {
            return Err(Error::ZeroNorm { row: i });
        }
        row.iter_mut().for_each(|x| *x /= n);
    }
    Ok(out)
}

/// Scales every row to unit Euclidean norm.
pub fn l2_normalize(set: &EmbeddingSet) -> Result<EmbeddingSet> {
    Ok(EmbeddingSet::from_checked(normalize_rows(set.matrix())?))
}

/// Pairwise cosine similarities between the rows of `x` and the rows of `y`.
pub fn cosine_matrix(x: &EmbeddingSet, y: &EmbeddingSet) -> Result<ScoreMatrix> {
    if x.dim() != y.dim() {
        return Err(Error::DimMismatch {
            expected: x.dim(),
            actual: y.dim(),
        });
    }
    let xn = normalize_rows(x.matrix())?;
    let yn = normalize_rows(y.matrix())?;
    Ok(ScoreMatrix::from_parts(
        xn.matmul_transposed(&yn)?,
        ScoreRole::Affinity,
    ))
}

/// Orientation of the sharpness exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum PhiSign {
    /// `exp(-b (1 - x))`: increasing in similarity, `φ(1) = 1`.
    #[default]
    Corrected,
    /// `exp(b (1 - x))` exactly as originally printed; decreasing in similarity.
    Paper,
}

/// The sharpness function `φ` with temperature `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Sharpness {
    b: f64,
    sign: PhiSign,
}

impl Sharpness {
    pub const DEFAULT_B: f64 = 5.5;

    pub fn new(b: f64) -> Result<Self> {
        Self::with_sign(b, PhiSign::Corrected)
    }

    pub fn with_sign(b: f64, sign: PhiSign) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidParameter(
                "sharpness b must be positive and finite",
            ));
        }
        Ok(Self { b, sign })
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn sign(&self) -> PhiSign {
        self.sign
    }

    #[inline]
    fn rate(&self) -> f64 {
        match self.sign {
            PhiSign::Corrected => self.b,
            PhiSign::Paper => -self.b,
        }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        libm::exp(-self.rate() * (1.0 - x))
    }

    /// `dφ/dx`
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        self.rate() * self.apply(x)
    }
}

impl Default for Sharpness {
    fn default() -> Self {
        Self {
            b: Self::DEFAULT_B,
            sign: PhiSign::Corrected,
        }
    }
}

/// Applies `φ` elementwise.
pub fn phi_scale(s: &ScoreMatrix, phi: Sharpness) -> Result<ScoreMatrix> {
    ScoreMatrix::new(s.matrix().map(|x| phi.apply(x)), ScoreRole::Affinity)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = libm::exp(*x - max);
        total += *x;
    }
    row.iter_mut().for_each(|x| *x /= total);
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &ScoreMatrix) -> ScoreMatrix {
    let mut out = logits.matrix().clone();
    for i in 0..out.rows() {
        softmax_in_place(out.row_mut(i));
    }
    ScoreMatrix::from_parts(out, ScoreRole::Probabilities)
}

/// `log Σ exp(row)`, computed stably.
pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = row.iter().map(|&x| libm::exp(x - max)).sum();
    max + libm::log(total)
}

/// Mean negative log-likelihood of `labels` under `softmax(logits)`.
pub fn cross_entropy(logits: &ScoreMatrix, labels: &[usize]) -> Result<f64> {
    if labels.len() != logits.rows() {
        return Err(Error::LabelCount {
            labels: labels.len(),
            rows: logits.rows(),
        });
    }
    let classes = logits.cols();
    let mut total = 0.0;
    for (row, &label) in logits.matrix().iter_rows().zip(labels) {
        if label >= classes {
            return Err(Error::LabelOutOfRange { id: label, classes });
        }
        total += log_sum_exp(row) - row[label];
    }
    // clamp rounding residue from a degenerate single-class row
    Ok((total / labels.len().max(1) as f64).max(0.0))
}
