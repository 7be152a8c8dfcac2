//! Loading labeled audio sets and class text embeddings from TREFFEMB files.

use std::path::Path;

use treff_core::{ClassVocabulary, EmbeddingSet, SupportSet, ZeroShotHead};

use crate::format::{read_embeddings, EmbeddingFile, FormatError};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("reading {path}")]
    Format {
        path: String,
        #[source]
        source: FormatError,
    },
    #[error("{0}: expected a labeled file")]
    Unlabeled(String),
    #[error("{0}: text file must hold exactly one row per class")]
    TextLabels(String),
    #[error("{0}: unlabeled text file needs class names from a labeled audio file")]
    NoVocabulary(String),
    #[error("invalid data in {path}")]
    Invalid {
        path: String,
        #[source]
        source: treff_core::Error,
    },
}

fn read(path: &Path) -> Result<EmbeddingFile, DatasetError> {
    read_embeddings(path).map_err(|source| DatasetError::Format {
        path: path.display().to_string(),
        source,
    })
}

fn invalid(path: &Path) -> impl Fn(treff_core::Error) -> DatasetError + '_ {
    move |source| DatasetError::Invalid {
        path: path.display().to_string(),
        source,
    }
}

/// An audio file; labels are optional.
pub fn load_audio(path: impl AsRef<Path>) -> Result<EmbeddingFile, DatasetError> {
    read(path.as_ref())
}

/// A labeled audio file.
pub fn load_support(path: impl AsRef<Path>) -> Result<SupportSet, DatasetError> {
    let path = path.as_ref();
    let file = read(path)?;
    match (file.labels, file.vocab) {
        (Some(labels), Some(vocab)) => {
            SupportSet::new(file.set, labels, vocab).map_err(invalid(path))
        }
        _ => Err(DatasetError::Unlabeled(path.display().to_string())),
    }
}

/// Class text embeddings as a zero-shot head.
///
/// A labeled text file names its own classes and must contain each class
/// exactly once; rows are reordered by class id. An unlabeled file is read
/// in the order of `fallback`.
pub fn load_head(
    path: impl AsRef<Path>,
    tau: f64,
    fallback: Option<&ClassVocabulary>,
) -> Result<ZeroShotHead, DatasetError> {
    let path = path.as_ref();
    let file = read(path)?;
    let (set, vocab) = match (file.labels, file.vocab) {
        (Some(labels), Some(vocab)) => {
            let n = vocab.len();
            let mut order = vec![usize::MAX; n];
            if labels.len() != n {
                return Err(DatasetError::TextLabels(path.display().to_string()));
            }
            for (row, &c) in labels.iter().enumerate() {
                if order[c] != usize::MAX {
                    return Err(DatasetError::TextLabels(path.display().to_string()));
                }
                order[c] = row;
            }
            (file.set.select(&order), vocab)
        }
        _ => match fallback {
            Some(v) => (file.set, v.clone()),
            None => return Err(DatasetError::NoVocabulary(path.display().to_string())),
        },
    };
    ZeroShotHead::new(&set, vocab, tau).map_err(invalid(path))
}

/// Labels `0..rows`: one row per class, the layout written for text files.
pub fn identity_labels(set: &EmbeddingSet) -> Vec<usize> {
    (0..set.rows()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::write_embeddings;

    #[test]
    fn text_rows_follow_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("text.bin");
        let set = EmbeddingSet::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let vocab = ClassVocabulary::new(["a", "b"]).unwrap();
        write_embeddings(&p, &set, Some(&[1, 0]), Some(&vocab)).unwrap();
        let head = load_head(&p, 1.0, None).unwrap();
        assert_eq!(head.text().row(0), &[1.0, 0.0]);
        assert_eq!(head.vocab(), &vocab);

        write_embeddings(&p, &set, Some(&[1, 1]), Some(&vocab)).unwrap();
        assert!(matches!(
            load_head(&p, 1.0, None),
            Err(DatasetError::TextLabels(_))
        ));

        write_embeddings(&p, &set, None, None).unwrap();
        assert!(matches!(
            load_head(&p, 1.0, None),
            Err(DatasetError::NoVocabulary(_))
        ));
        assert_eq!(
            load_head(&p, 1.0, Some(&vocab)).unwrap().text().row(0),
            &[0.0, 1.0]
        );
        assert!(matches!(load_support(&p), Err(DatasetError::Unlabeled(_))));
        assert!(matches!(
            load_head(&p, 1.0, Some(&ClassVocabulary::numbered(3))),
            Err(DatasetError::Invalid { .. })
        ));
    }
}
