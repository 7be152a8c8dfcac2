//! Zero-shot head: scaled cosine similarity between query embeddings and
//! one text embedding per class.

use alloc::vec::Vec;

use crate::embedding::{ClassVocabulary, EmbeddingSet};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metric::{self, ScoreMatrix, ScoreRole};

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroShotHead {
    /// Unit rows, vocabulary order.
    text: Matrix,
    vocab: ClassVocabulary,
    tau: f64,
}

impl ZeroShotHead {
    /// Logit scale used when none is given.
    pub const DEFAULT_TAU: f64 = 100.0;

    pub fn new(text: &EmbeddingSet, vocab: ClassVocabulary, tau: f64) -> Result<Self> {
        if text.rows() != vocab.len() {
            return Err(Error::LabelCount {
                labels: vocab.len(),
                rows: text.rows(),
            });
        }
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(
                "tau must be finite and non-negative",
            ));
        }
        Ok(Self {
            text: metric::normalize_rows(text.matrix())?,
            vocab,
            tau,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn with_tau(mut self, tau: f64) -> Result<Self> {
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(
                "tau must be finite and non-negative",
            ));
        }
        self.tau = tau;
        Ok(self)
    }

    pub fn vocab(&self) -> &ClassVocabulary {
        &self.vocab
    }

    pub fn n_classes(&self) -> usize {
        self.vocab.len()
    }

    pub fn dim(&self) -> usize {
        self.text.cols()
    }

    pub fn text(&self) -> &Matrix {
        &self.text
    }

    /// Head over a subset of classes, in the order given.
    pub fn select(&self, classes: &[usize]) -> Result<Self> {
        Ok(Self {
            text: self.text.select_rows(classes),
            vocab: self.vocab.select(classes)?,
            tau: self.tau,
        })
    }

    pub(crate) fn logits_unit(&self, unit_queries: &Matrix) -> Result<Matrix> {
        Ok(unit_queries.matmul_transposed(&self.text)?.scale(self.tau))
    }
}

/// `tau · cos(query, text_k)` for every query and class.
pub fn zsl_logits(head: &ZeroShotHead, queries: &EmbeddingSet) -> Result<ScoreMatrix> {
    queries.check_dim(head.dim())?;
    let unit = metric::normalize_rows(queries.matrix())?;
    ScoreMatrix::new(head.logits_unit(&unit)?, ScoreRole::Logits)
}

/// Most similar class per query; ties go to the lowest class id.
pub fn zsl_predict(head: &ZeroShotHead, queries: &EmbeddingSet) -> Result<Vec<usize>> {
    Ok(zsl_logits(head, queries)?.argmax_rows())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn axes_head(tau: f64) -> ZeroShotHead {
        let text =
            EmbeddingSet::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        ZeroShotHead::new(&text, ClassVocabulary::numbered(3), tau).unwrap()
    }

    #[test]
    fn logits_examples() {
        let head = axes_head(100.0);
        let q = EmbeddingSet::from_rows(&[[0.0, 2.0, 0.0]]).unwrap();
        let l = zsl_logits(&head, &q).unwrap();
        assert_eq!(l.row(0), &[0.0, 100.0, 0.0]);

        let text = EmbeddingSet::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let head = ZeroShotHead::new(&text, ClassVocabulary::numbered(2), 1.0).unwrap();
        let l = zsl_logits(&head, &EmbeddingSet::from_rows(&[[0.8, 0.6]]).unwrap()).unwrap();
        assert!((l.get(0, 0) - 0.8).abs() < 1e-15 && (l.get(0, 1) - 0.6).abs() < 1e-15);
        assert_eq!(
            zsl_predict(&head, &EmbeddingSet::from_rows(&[[0.8, 0.6]]).unwrap()).unwrap(),
            vec![0]
        );
    }

    #[test]
    fn predict_examples() {
        let head = axes_head(100.0);
        let q = EmbeddingSet::from_rows(&[[0.0, 0.0, 3.0], [1.0, 1.0, 1.0]]).unwrap();
        assert_eq!(zsl_predict(&head, &q).unwrap(), vec![2, 0]);
    }

    #[test]
    fn errors() {
        let head = axes_head(1.0);
        assert!(matches!(
            zsl_logits(&head, &EmbeddingSet::from_rows(&[[1.0, 0.0]]).unwrap()),
            Err(Error::DimMismatch { .. })
        ));
        assert!(matches!(
            zsl_logits(&head, &EmbeddingSet::from_rows(&[[0.0, 0.0, 0.0]]).unwrap()),
            Err(Error::ZeroNorm { row: 0 })
        ));
        let text = EmbeddingSet::from_rows(&[[1.0, 0.0]]).unwrap();
        assert!(ZeroShotHead::new(&text, ClassVocabulary::numbered(2), 1.0).is_err());
        assert!(ZeroShotHead::new(&text, ClassVocabulary::numbered(1), -1.0).is_err());
    }

    proptest! {
        #[test]
        fn predict_invariant_to_tau(
            q in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..8),
            tau in 0.001f64..1000.0,
        ) {
            prop_assume!(q.iter().all(|r| crate::matrix::norm(r) > 1e-3));
            let q = EmbeddingSet::from_rows(&q).unwrap();
            let text = EmbeddingSet::from_rows(&[[0.3, 1.0, 0.2], [1.0, -0.4, 0.0], [0.1, 0.1, 1.0]]).unwrap();
            let a = ZeroShotHead::new(&text, ClassVocabulary::numbered(3), 1.0).unwrap();
            let b = a.clone().with_tau(tau).unwrap();
            prop_assert_eq!(zsl_predict(&a, &q).unwrap(), zsl_predict(&b, &q).unwrap());

            let permuted = a.select(&[2, 0, 1]).unwrap();
            let la = zsl_logits(&a, &q).unwrap();
            let lp = zsl_logits(&permuted, &q).unwrap();
            for i in 0..q.rows() {
                prop_assert_eq!(lp.row(i), &[la.get(i, 2), la.get(i, 0), la.get(i, 1)][..]);
            }
        }
    }
}
