//! Durable summary cache.
//!
//! Summaries are persisted as one JSON object per line so that new records
//! append without rewriting the file. Records are keyed by content: the
//! SHA-256 of the fragment text plus the provider id, prompt-language tag,
//! and template-body hash. Identical code in different files therefore
//! shares one cached summary, and changing the prompt or provider never
//! collides with old entries. Within one file, the last record written for a
//! key wins.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from summary-store access.
#[derive(Debug, Error)]
pub enum StoreError {
    /// Filesystem access failed; failed writes are fatal for durability.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// A record could not be serialized (should not happen for valid records).
    #[error("could not serialize record: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// Cache key: identical code summarized by the same provider, language, and
/// template hits the same record.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SummaryKey {
    /// SHA-256 hex of the fragment text.
    pub fragment_hash: String,
    /// Provider identifier (should name the model it stands for).
    pub provider: String,
    /// Prompt-language tag (e.g. "english").
    pub lang: String,
    /// SHA-256 hex of the prompt-template body.
    pub template_hash: String,
}

/// One cached summary, in exactly the on-disk shape.
///
/// An empty `summary` marks a recorded extraction failure: the fragment was
/// sent to the provider but no sentence could be extracted. Failed records
/// are kept so reruns do not repeat the call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub fragment_hash: String,
    pub provider: String,
    pub lang: String,
    pub template_hash: String,
    pub fragment_id: String,
    pub summary: String,
    pub stopwords_removed: bool,
    /// RFC 3339 creation time; cache metadata only, never part of reports.
    pub created_at: String,
}

impl SummaryRecord {
    /// Builds a record stamped with the current time.
    #[must_use]
    pub fn new(key: SummaryKey, fragment_id: String, summary: String, stopwords_removed: bool) -> Self {
        Self {
            fragment_hash: key.fragment_hash,
            provider: key.provider,
            lang: key.lang,
            template_hash: key.template_hash,
            fragment_id,
            summary,
            stopwords_removed,
            created_at: chrono::Utc::now().to_rfc3339(),
        }
    }

    /// The cache key this record is stored under.
    #[must_use]
    pub fn key(&self) -> SummaryKey {
        SummaryKey {
            fragment_hash: self.fragment_hash.clone(),
            provider: self.provider.clone(),
            lang: self.lang.clone(),
            template_hash: self.template_hash.clone(),
        }
    }

    /// True when this record memorializes a failed extraction.
    #[must_use]
    pub fn is_failed(&self) -> bool {
        self.summary.is_empty()
    }
}

/// An append-only JSONL store of [`SummaryRecord`]s with an in-memory index.
///
/// Writes go through a single owner (`&mut self`); wrap the store in a
/// `Mutex` to commit from several workers. Reads of the loaded map are plain
/// lookups.
#[derive(Debug)]
pub struct SummaryStore {
    path: PathBuf,
    records: HashMap<SummaryKey, SummaryRecord>,
    writer: Option<BufWriter<fs::File>>,
    corrupt_lines: usize,
}

impl SummaryStore {
    /// The conventional location of a store:
    /// `<cache_root>/<dataset>/<provider>/<lang>/summaries.jsonl`.
    #[must_use]
    pub fn layout_path(cache_root: &Path, dataset: &str, provider: &str, lang: &str) -> PathBuf {
        cache_root
            .join(dataset)
            .join(provider)
            .join(lang)
            .join("summaries.jsonl")
    }

    /// Opens (or prepares to create) the store at `path`, loading any
    /// existing records. Lines that fail to parse are skipped with a warning
    /// and counted; later duplicates of a key replace earlier ones.
    ///
    /// # Errors
    ///
    /// I/O failures other than the file not existing yet.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        let mut records = HashMap::new();
        let mut corrupt_lines = 0usize;
        match fs::File::open(&path) {
            Ok(file) => {
                for line in BufReader::new(file).lines() {
                    let line = line.map_err(|source| StoreError::Io {
                        path: path.clone(),
                        source,
                    })?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    match serde_json::from_str::<SummaryRecord>(&line) {
                        Ok(record) => {
                            records.insert(record.key(), record);
                        }
                        Err(err) => {
                            corrupt_lines += 1;
                            log::warn!(
                                "skipping corrupt summary record in {}: {err}",
                                path.display()
                            );
                        }
                    }
                }
            }
            Err(err) if err.kind() == std::io::ErrorKind::NotFound => {}
            Err(source) => return Err(StoreError::Io { path, source }),
        }
        Ok(Self {
            path,
            records,
            writer: None,
            corrupt_lines,
        })
    }

    /// Opens the store for a (dataset, provider, language) triple under
    /// `cache_root`, creating parent directories as needed on first write.
    ///
    /// # Errors
    ///
    /// As [`SummaryStore::open`].
    pub fn open_layout(
        cache_root: &Path,
        dataset: &str,
        provider: &str,
        lang: &str,
    ) -> Result<Self, StoreError> {
        Self::open(Self::layout_path(cache_root, dataset, provider, lang))
    }

    #[must_use]
    pub fn path(&self) -> &Path {
        &self.path
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.records.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of unparseable lines skipped at load time.
    #[must_use]
    pub fn corrupt_lines(&self) -> usize {
        self.corrupt_lines
    }

    /// Exact-match lookup.
    #[must_use]
    pub fn get(&self, key: &SummaryKey) -> Option<&SummaryRecord> {
        self.records.get(key)
    }

    /// Iterates over the live (last-written) records in arbitrary order.
    pub fn records(&self) -> impl Iterator<Item = &SummaryRecord> {
        self.records.values()
    }

    /// Appends a record to disk and the in-memory index (last-write-wins).
    ///
    /// The line is flushed to the OS before returning, so a reload sees it
    /// even if the process dies without calling [`SummaryStore::flush`].
    ///
    /// # Errors
    ///
    /// Disk-full and other I/O failures are fatal.
    pub fn put(&mut self, record: SummaryRecord) -> Result<(), StoreError> {
        if self.writer.is_none() {
            if let Some(parent) = self.path.parent() {
                fs::create_dir_all(parent).map_err(|source| StoreError::Io {
                    path: self.path.clone(),
                    source,
                })?;
            }
            let file = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&self.path)
                .map_err(|source| StoreError::Io {
                    path: self.path.clone(),
                    source,
                })?;
            self.writer = Some(BufWriter::new(file));
        }
        let writer = self.writer.as_mut().expect("writer just ensured");
        let line = serde_json::to_string(&record)?;
        writeln!(writer, "{line}").map_err(|source| StoreError::Io {
            path: self.path.clone(),
            source,
        })?;
        writer.flush().map_err(|source| StoreError::Io {
            path: self.path.clone(),
            source,
        })?;
        self.records.insert(record.key(), record);
        Ok(())
    }

    /// Flushes buffered writes.
    ///
    /// # Errors
    ///
    /// Propagates I/O failures.
    pub fn flush(&mut self) -> Result<(), StoreError> {
        if let Some(writer) = self.writer.as_mut() {
            writer.flush().map_err(|source| StoreError::Io {
                path: self.path.clone(),
                source,
            })?;
        }
        Ok(())
    }
}
