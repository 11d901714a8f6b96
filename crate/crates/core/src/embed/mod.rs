//! Sentence-embedding providers and unit-normalized vector sets.
//!
//! Summaries are embedded in batches (halving the batch size when a provider
//! rejects the payload as too large) and stored as rows of an
//! [`EmbeddingSet`], every row normalized to unit length so cosine
//! similarity is a plain dot product. A deterministic hashing provider backs
//! tests and offline runs with no network at all.

mod http;

pub use http::HttpEmbedProvider;

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::SummarySet;
use crate::matrix::RowMatrix;

/// Default number of texts per embedding request.
pub const DEFAULT_BATCH_SIZE: usize = 64;

/// Errors from embedding providers and vector-set handling.
#[derive(Debug, Error)]
pub enum EmbedError {
    /// The provider failed; `retryable` mirrors the transport-level verdict.
    #[error("embedding provider error: {detail}")]
    Provider { detail: String, retryable: bool },
    /// The provider rejected the request as too large; callers halve and
    /// retry.
    #[error("embedding payload too large for batch of {batch}")]
    PayloadTooLarge { batch: usize },
    /// The provider returned the wrong number of embeddings.
    #[error("provider returned {found} embeddings for {expected} inputs")]
    CountMismatch { expected: usize, found: usize },
    /// A returned vector had the wrong width.
    #[error("expected {expected}-dimensional embedding, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    /// A vector had zero norm and cannot be unit-normalized.
    #[error("embedding for {id} has zero norm")]
    ZeroVector { id: String },
    #[error("duplicate embedding id {id}")]
    DuplicateId { id: String },
    #[error("batch size must be at least 1")]
    InvalidBatchSize,
    #[error("embedding dimension must be at least 2, got {dim}")]
    InvalidDimension { dim: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// The on-disk metadata disagrees with the vector file.
    #[error("bad embedding metadata: {0}")]
    Meta(String),
}

/// A source of fixed-width sentence embeddings.
pub trait EmbedProvider {
    /// Stable identifier recorded alongside the vectors.
    fn id(&self) -> &str;

    /// Output dimensionality; every returned vector must have this width.
    fn dim(&self) -> usize;

    /// Embeds a batch of texts, one vector per input, in input order.
    ///
    /// # Errors
    ///
    /// [`EmbedError::PayloadTooLarge`] when the batch should be split, any
    /// other [`EmbedError`] for terminal failures.
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

/// Normalizes `row` to unit length in place, returning the original norm.
fn l2_normalize(row: &mut [f64]) -> f64 {
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in row.iter_mut() {
            *v /= norm;
        }
    }
    norm
}

/// On-disk companion of the raw `f32` vector file.
#[derive(Debug, Serialize, Deserialize)]
struct EmbeddingMeta {
    dim: usize,
    n: usize,
    provider_id: String,
    fragment_ids: Vec<String>,
}

/// Unit-normalized embeddings for a list of fragments, row `i` belonging to
/// `ids()[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    provider_id: String,
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    matrix: RowMatrix,
}

impl EmbeddingSet {
    /// Builds a set from raw rows, normalizing each to unit length.
    ///
    /// # Errors
    ///
    /// [`EmbedError::CountMismatch`] when ids and rows disagree in number,
    /// [`EmbedError::DimensionMismatch`] for a row of the wrong width,
    /// [`EmbedError::DuplicateId`], or [`EmbedError::ZeroVector`] for a row
    /// that cannot be normalized.
    pub fn from_rows(
        provider_id: impl Into<String>,
        dim: usize,
        ids: Vec<String>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self, EmbedError> {
        if ids.len() != rows.len() {
            return Err(EmbedError::CountMismatch {
                expected: ids.len(),
                found: rows.len(),
            });
        }
        let mut matrix = RowMatrix::zeros(ids.len(), dim);
        let mut index = HashMap::with_capacity(ids.len());
        for (i, (id, mut row)) in ids.iter().zip(rows).enumerate() {
            if row.len() != dim {
                return Err(EmbedError::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(EmbedError::DuplicateId { id: id.clone() });
            }
            if l2_normalize(&mut row) == 0.0 {
                return Err(EmbedError::ZeroVector { id: id.clone() });
            }
            matrix.set_row(i, &row);
        }
        Ok(Self {
            provider_id: provider_id.into(),
            dim,
            ids,
            index,
            matrix,
        })
    }

    #[must_use]
    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    #[must_use]
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Vector for `id`, if present.
    #[must_use]
    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&i| self.matrix.row(i))
    }

    /// Row `i` (panics out of range, like slice indexing).
    #[must_use]
    pub fn row(&self, i: usize) -> &[f64] {
        self.matrix.row(i)
    }

    #[must_use]
    pub fn matrix(&self) -> &RowMatrix {
        &self.matrix
    }

    /// Writes the vectors as row-major little-endian `f32`.
    ///
    /// # Errors
    ///
    /// I/O failures.
    pub fn write_f32(&self, path: &Path) -> Result<(), EmbedError> {
        let io_err = |source| EmbedError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut bytes = Vec::with_capacity(self.matrix.data().len() * 4);
        for &value in self.matrix.data() {
            bytes.extend_from_slice(&(value as f32).to_le_bytes());
        }
        let mut file = fs::File::create(path).map_err(io_err)?;
        file.write_all(&bytes).map_err(io_err)?;
        Ok(())
    }

    /// Writes the JSON metadata (`dim`, `n`, `provider_id`, `fragment_ids`)
    /// describing a vector file.
    ///
    /// # Errors
    ///
    /// I/O failures.
    pub fn write_meta_json(&self, path: &Path) -> Result<(), EmbedError> {
        let meta = EmbeddingMeta {
            dim: self.dim,
            n: self.len(),
            provider_id: self.provider_id.clone(),
            fragment_ids: self.ids.clone(),
        };
        let body = serde_json::to_string(&meta).expect("metadata always serializes");
        fs::write(path, body).map_err(|source| EmbedError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Loads a set written by [`EmbeddingSet::write_f32`] and
    /// [`EmbeddingSet::write_meta_json`], re-normalizing rows to undo `f32`
    /// rounding.
    ///
    /// # Errors
    ///
    /// [`EmbedError::Meta`] when the two files disagree, plus I/O failures.
    pub fn read_from_files(vectors: &Path, meta: &Path) -> Result<Self, EmbedError> {
        let meta_body = fs::read_to_string(meta).map_err(|source| EmbedError::Io {
            path: meta.to_path_buf(),
            source,
        })?;
        let meta: EmbeddingMeta = serde_json::from_str(&meta_body)
            .map_err(|err| EmbedError::Meta(format!("unparseable metadata: {err}")))?;
        if meta.fragment_ids.len() != meta.n {
            return Err(EmbedError::Meta(format!(
                "metadata lists {} fragment ids but n = {}",
                meta.fragment_ids.len(),
                meta.n
            )));
        }
        let mut file = fs::File::open(vectors).map_err(|source| EmbedError::Io {
            path: vectors.to_path_buf(),
            source,
        })?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(|source| EmbedError::Io {
            path: vectors.to_path_buf(),
            source,
        })?;
        let expected = meta.n * meta.dim * 4;
        if bytes.len() != expected {
            return Err(EmbedError::Meta(format!(
                "vector file holds {} bytes, expected {expected} for {}x{} f32",
                bytes.len(),
                meta.n,
                meta.dim
            )));
        }
        let mut rows = Vec::with_capacity(meta.n);
        for r in 0..meta.n {
            let mut row = Vec::with_capacity(meta.dim);
            for c in 0..meta.dim {
                let at = (r * meta.dim + c) * 4;
                let quad: [u8; 4] = bytes[at..at + 4].try_into().expect("length checked");
                row.push(f64::from(f32::from_le_bytes(quad)));
            }
            rows.push(row);
        }
        Self::from_rows(meta.provider_id, meta.dim, meta.fragment_ids, rows)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Seeded FNV-1a over the seed bytes followed by `bytes`.
fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for byte in seed.to_le_bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    for &byte in bytes {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

fn hashed_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|token| !token.is_empty())
        .map(str::to_lowercase)
}

/// Embeds `text` as a unit-normalized bag of hashed lowercase tokens.
///
/// Tokens are maximal alphanumeric runs; each increments the bucket chosen
/// by a seeded FNV-1a hash modulo `dim`. Texts sharing tokens therefore get
/// positive cosine similarity, disjoint texts (modulo hash collisions) get
/// zero. A text with no tokens at all maps to a fixed seed-dependent one-hot
/// vector. Fully deterministic in `(text, dim, seed)`.
///
/// # Errors
///
/// [`EmbedError::InvalidDimension`] when `dim < 2`.
pub fn deterministic_embed(text: &str, dim: usize, seed: u64) -> Result<Vec<f64>, EmbedError> {
    if dim < 2 {
        return Err(EmbedError::InvalidDimension { dim });
    }
    let mut row = vec![0.0f64; dim];
    let mut empty = true;
    for token in hashed_tokens(text) {
        let bucket = (fnv1a(seed, token.as_bytes()) % dim as u64) as usize;
        row[bucket] += 1.0;
        empty = false;
    }
    if empty {
        let bucket = (fnv1a(seed, &[]) % dim as u64) as usize;
        row[bucket] = 1.0;
    }
    l2_normalize(&mut row);
    Ok(row)
}

/// The hashing embedder as a provider: offline, deterministic, and adequate
/// for exercising every downstream stage.
#[derive(Debug, Clone)]
pub struct DeterministicEmbedProvider {
    id: String,
    dim: usize,
    seed: u64,
}

impl DeterministicEmbedProvider {
    /// # Errors
    ///
    /// [`EmbedError::InvalidDimension`] when `dim < 2`.
    pub fn new(dim: usize, seed: u64) -> Result<Self, EmbedError> {
        if dim < 2 {
            return Err(EmbedError::InvalidDimension { dim });
        }
        Ok(Self {
            id: format!("deterministic-{dim}-{seed}"),
            dim,
            seed,
        })
    }
}

impl EmbedProvider for DeterministicEmbedProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        texts
            .iter()
            .map(|text| deterministic_embed(text, self.dim, self.seed))
            .collect()
    }
}

/// Embeds parallel `ids`/`texts` lists, batched with adaptive halving.
///
/// Requests go out `batch_size` texts at a time; when the provider reports
/// the payload as too large the batch size halves (staying halved) until it
/// reaches one, at which point the error is terminal. Output rows are in
/// input order.
///
/// # Errors
///
/// Provider errors, count/dimension mismatches, or a zero-norm vector.
pub fn embed_texts(
    ids: Vec<String>,
    texts: &[String],
    provider: &dyn EmbedProvider,
    batch_size: usize,
) -> Result<EmbeddingSet, EmbedError> {
    if batch_size == 0 {
        return Err(EmbedError::InvalidBatchSize);
    }
    if ids.len() != texts.len() {
        return Err(EmbedError::CountMismatch {
            expected: ids.len(),
            found: texts.len(),
        });
    }
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(texts.len());
    let mut chunk = batch_size;
    let mut start = 0usize;
    while start < texts.len() {
        let end = (start + chunk).min(texts.len());
        let slice: Vec<&str> = texts[start..end].iter().map(String::as_str).collect();
        match provider.embed(&slice) {
            Ok(batch) => {
                if batch.len() != slice.len() {
                    return Err(EmbedError::CountMismatch {
                        expected: slice.len(),
                        found: batch.len(),
                    });
                }
                rows.extend(batch);
                start = end;
            }
            Err(EmbedError::PayloadTooLarge { .. }) if chunk > 1 => {
                chunk = (chunk / 2).max(1);
                log::warn!("embedding payload too large; retrying with batch size {chunk}");
            }
            Err(err) => return Err(err),
        }
    }
    EmbeddingSet::from_rows(provider.id(), provider.dim(), ids, rows)
}

/// Embeds every successful summary of `set`, skipping failed entries.
///
/// Row order matches corpus order restricted to successes; each row's id is
/// the summarized fragment's id.
///
/// # Errors
///
/// As [`embed_texts`].
pub fn embed_summaries(
    set: &SummarySet,
    provider: &dyn EmbedProvider,
    batch_size: usize,
) -> Result<EmbeddingSet, EmbedError> {
    let mut ids = Vec::new();
    let mut texts = Vec::new();
    for summary in set.successes() {
        ids.push(summary.fragment_id.clone());
        texts.push(summary.text.clone());
    }
    embed_texts(ids, &texts, provider, batch_size)
}
