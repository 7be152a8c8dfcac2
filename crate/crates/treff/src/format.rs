//! TREFFEMB v1: a little-endian container for embedding matrices with
//! optional labels and class names.
//!
//! ```text
//! magic    8 bytes  "TREFFEMB"
//! version  u32      1
//! rows     u32
//! dim      u32
//! flags    u8       bit 0: has_labels
//! payload  rows × dim f32, row-major
//! -- only when has_labels --
//! labels   rows × u32 class ids
//! n        u32
//! names    n × (u32 byte length, UTF-8 bytes)
//! ```
//!
//! Values are held as `f64` in memory and rounded to `f32` on write, so
//! any `f32`-representable matrix round-trips bit-exactly.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use treff_core::{ClassVocabulary, EmbeddingSet, Matrix, SupportSet};

pub const MAGIC: &[u8; 8] = b"TREFFEMB";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 8 + 4 + 4 + 4 + 1;
const FLAG_LABELS: u8 = 0b1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a TREFFEMB file (bad magic)")]
    BadMagic,
    #[error("unsupported TREFFEMB version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated while reading {0}")]
    Truncated(&'static str),
    #[error("{0} unexpected bytes after the last section")]
    TrailingBytes(usize),
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("value at row {row}, column {col} does not fit in f32")]
    Overflow { row: usize, col: usize },
    #[error("labels and vocabulary must be given together")]
    LabelArity,
    #[error("class name {0} is not valid UTF-8")]
    BadName(usize),
    #[error("matrix too large for the format ({0} exceeds u32)")]
    TooLarge(&'static str),
    #[error(transparent)]
    Invalid(#[from] treff_core::Error),
}

/// Contents of a TREFFEMB file.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub set: EmbeddingSet,
    pub labels: Option<Vec<usize>>,
    pub vocab: Option<ClassVocabulary>,
}

impl EmbeddingFile {
    pub fn unlabeled(set: EmbeddingSet) -> Self {
        Self {
            set,
            labels: None,
            vocab: None,
        }
    }

    pub fn labeled(support: &SupportSet) -> Self {
        Self {
            set: support.embeddings().clone(),
            labels: Some(support.labels().to_vec()),
            vocab: Some(support.vocab().clone()),
        }
    }

    /// The labeled view, if the file carries labels.
    pub fn into_support(self) -> Result<SupportSet, FormatError> {
        match (self.labels, self.vocab) {
            (Some(labels), Some(vocab)) => Ok(SupportSet::new(self.set, labels, vocab)?),
            _ => Err(FormatError::LabelArity),
        }
    }
}

fn to_u32(x: usize, what: &'static str) -> Result<u32, FormatError> {
    u32::try_from(x).map_err(|_| FormatError::TooLarge(what))
}

/// Serialises `set` (and optionally its labels and class names).
pub fn encode(
    set: &EmbeddingSet,
    labels: Option<&[usize]>,
    vocab: Option<&ClassVocabulary>,
) -> Result<Vec<u8>, FormatError> {
    let labeled = match (labels, vocab) {
        (Some(l), Some(v)) => {
            // reuse the core validation of arity and range
            SupportSet::new(set.clone(), l.to_vec(), v.clone())?;
            Some((l, v))
        }
        (None, None) => None,
        _ => return Err(FormatError::LabelArity),
    };

    let (rows, dim) = (set.rows(), set.dim());
    let mut out = Vec::with_capacity(HEADER_LEN + rows * dim * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(rows, "rows")?.to_le_bytes());
    out.extend_from_slice(&to_u32(dim, "dim")?.to_le_bytes());
    out.push(if labeled.is_some() { FLAG_LABELS } else { 0 });

    for (i, &x) in set.matrix().as_slice().iter().enumerate() {
        let v = x as f32;
        if !v.is_finite() {
            return Err(FormatError::Overflow {
                row: i / dim,
                col: i % dim,
            });
        }
        out.extend_from_slice(&v.to_le_bytes());
    }

    if let Some((labels, vocab)) = labeled {
        for &l in labels {
            out.extend_from_slice(&to_u32(l, "class id")?.to_le_bytes());
        }
        out.extend_from_slice(&to_u32(vocab.len(), "class count")?.to_le_bytes());
        for name in vocab.names() {
            out.extend_from_slice(&to_u32(name.len(), "class name")?.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], FormatError> {
        let end = self
            .pos
            .checked_add(n)
            .ok_or(FormatError::Truncated(what))?;
        let bytes = self
            .buf
            .get(self.pos..end)
            .ok_or(FormatError::Truncated(what))?;
        self.pos = end;
        Ok(bytes)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, FormatError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parses a TREFFEMB byte buffer.
pub fn decode(buf: &[u8]) -> Result<EmbeddingFile, FormatError> {
    let mut cur = Cursor { buf, pos: 0 };
    if buf.len() < MAGIC.len() || &buf[..MAGIC.len()] != MAGIC {
        return Err(FormatError::BadMagic);
    }
    cur.pos = MAGIC.len();
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let rows = cur.u32("rows")? as usize;
    let dim = cur.u32("dim")? as usize;
    let flags = cur.take(1, "flags")?[0];

    let count = rows
        .checked_mul(dim)
        .ok_or(FormatError::Truncated("payload"))?;
    let payload = cur.take(
        count
            .checked_mul(4)
            .ok_or(FormatError::Truncated("payload"))?,
        "payload",
    )?;
    let mut data = Vec::with_capacity(count);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(FormatError::NonFinite {
                row: i / dim,
                col: i % dim,
            });
        }
        data.push(f64::from(v));
    }
    let set = EmbeddingSet::from_matrix(Matrix::from_vec(rows, dim, data)?)?;

    let (labels, vocab) = if flags & FLAG_LABELS != 0 {
        let raw = cur.take(rows * 4, "labels")?;
        let labels: Vec<usize> = raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
            .collect();
        let n = cur.u32("class count")? as usize;
        let mut names = Vec::with_capacity(n.min(1 << 16));
        for i in 0..n {
            let len = cur.u32("class name length")? as usize;
            let bytes = cur.take(len, "class name")?;
            names.push(String::from_utf8(bytes.to_vec()).map_err(|_| FormatError::BadName(i))?);
        }
        let vocab = ClassVocabulary::new(names)?;
        // range-check labels against the vocabulary
        let support = SupportSet::new(set.clone(), labels, vocab)?;
        (
            Some(support.labels().to_vec()),
            Some(support.vocab().clone()),
        )
    } else {
        (None, None)
    };

    if cur.pos != buf.len() {
        return Err(FormatError::TrailingBytes(buf.len() - cur.pos));
    }
    Ok(EmbeddingFile { set, labels, vocab })
}

/// Writes a TREFFEMB file; identical inputs give byte-identical files.
pub fn write_embeddings(
    path: impl AsRef<Path>,
    set: &EmbeddingSet,
    labels: Option<&[usize]>,
    vocab: Option<&ClassVocabulary>,
) -> Result<(), FormatError> {
    let bytes = encode(set, labels, vocab)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    Ok(())
}

pub fn write_file(path: impl AsRef<Path>, file: &EmbeddingFile) -> Result<(), FormatError> {
    write_embeddings(path, &file.set, file.labels.as_deref(), file.vocab.as_ref())
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingFile, FormatError> {
    decode(&fs::read(path)?)
}
