//! Embedding containers: unlabeled row sets, class vocabularies and
//! labeled support sets.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metric::{ScoreMatrix, ScoreRole};

/// A non-empty matrix of finite row embeddings living in one shared space.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    data: Matrix,
}

impl EmbeddingSet {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_matrix(Matrix::from_vec(rows, dim, data)?)
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::from_matrix(Matrix::from_rows(rows)?)
    }

    pub fn from_matrix(data: Matrix) -> Result<Self> {
        if data.rows() == 0 || data.cols() == 0 {
            return Err(Error::EmptySet {
                rows: data.rows(),
                dim: data.cols(),
            });
        }
        if let Some((row, col)) = data.first_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        Ok(Self { data })
    }

    pub(crate) fn from_checked(data: Matrix) -> Self {
        debug_assert!(data.rows() > 0 && data.cols() > 0 && data.is_finite());
        Self { data }
    }

    pub fn rows(&self) -> usize {
        self.data.rows()
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.data.row(i)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.data
    }

    pub fn into_matrix(self) -> Matrix {
        self.data
    }

    /// Rows picked by index. Panics on an empty or out-of-range selection.
    pub fn select(&self, indices: &[usize]) -> Self {
        assert!(!indices.is_empty(), "empty row selection");
        Self::from_checked(self.data.select_rows(indices))
    }

    pub(crate) fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimMismatch {
                expected,
                actual: self.dim(),
            });
        }
        Ok(())
    }
}

/// Ordered, unique class names; position is the class id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassVocabulary {
    names: Vec<String>,
}

impl ClassVocabulary {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() || names[..i].contains(name) {
                return Err(Error::BadClassName(name.clone()));
            }
        }
        Ok(Self { names })
    }

    /// `class-0`, `class-1`, ...
    pub fn numbered(n: usize) -> Self {
        Self {
            names: (0..n).map(|i| alloc::format!("class-{i}")).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Sub-vocabulary with the given classes, in the order given.
    pub fn select(&self, ids: &[usize]) -> Result<Self> {
        let names = ids
            .iter()
            .map(|&id| {
                self.names.get(id).cloned().ok_or(Error::LabelOutOfRange {
                    id,
                    classes: self.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(names)
    }
}

/// Labeled embeddings: one class id per row, drawn from `vocab`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSet {
    embeddings: EmbeddingSet,
    labels: Vec<usize>,
    vocab: ClassVocabulary,
}

impl SupportSet {
    pub fn new(
        embeddings: EmbeddingSet,
        labels: Vec<usize>,
        vocab: ClassVocabulary,
    ) -> Result<Self> {
        if labels.len() != embeddings.rows() {
            return Err(Error::LabelCount {
                labels: labels.len(),
                rows: embeddings.rows(),
            });
        }
        if let Some(&id) = labels.iter().find(|&&id| id >= vocab.len()) {
            return Err(Error::LabelOutOfRange {
                id,
                classes: vocab.len(),
            });
        }
        Ok(Self {
            embeddings,
            labels,
            vocab,
        })
    }

    pub fn embeddings(&self) -> &EmbeddingSet {
        &self.embeddings
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn vocab(&self) -> &ClassVocabulary {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.vocab.len()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim()
    }

    pub fn one_hot(&self) -> ScoreMatrix {
        one_hot(&self.labels, self.n_classes()).expect("labels validated on construction")
    }

    /// Number of rows carrying each class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Row indices grouped by class id.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut groups = alloc::vec![Vec::new(); self.n_classes()];
        for (i, &l) in self.labels.iter().enumerate() {
            groups[l].push(i);
        }
        groups
    }

    /// Restricts to `rows`, relabeling so that `classes[c]` becomes class `c`.
    ///
    /// Every selected row must carry a label listed in `classes`.
    pub fn subset(&self, rows: &[usize], classes: &[usize]) -> Result<Self> {
        let labels = rows
            .iter()
            .map(|&r| {
                let global = self.labels[r];
                classes
                    .iter()
                    .position(|&c| c == global)
                    .ok_or(Error::LabelOutOfRange {
                        id: global,
                        classes: classes.len(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            self.embeddings.select(rows),
            labels,
            self.vocab.select(classes)?,
        )
    }
}

/// One-hot encoding of `labels` over `n` classes.
pub fn one_hot(labels: &[usize], n: usize) -> Result<ScoreMatrix> {
    let mut m = Matrix::zeros(labels.len(), n);
    for (i, &id) in labels.iter().enumerate() {
        if id >= n {
            return Err(Error::LabelOutOfRange { id, classes: n });
        }
        m.set(i, id, 1.0);
    }
    Ok(ScoreMatrix::from_parts(m, ScoreRole::OneHot))
}
