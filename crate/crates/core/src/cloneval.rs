//! Cosine-threshold clone classification and threshold sweeps.
//!
//! A pair of fragments is predicted to be a clone when the cosine similarity
//! of their summary embeddings is **at or above** the threshold (the
//! boundary is inclusive). Sweeps evaluate a strictly increasing grid of
//! thresholds against labeled pairs and report both binary (positive-class)
//! and support-weighted metrics; the CSV export carries the weighted
//! numbers, the JSON mirror carries both.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::PairDataset;
use crate::embed::EmbeddingSet;
use crate::metrics::{classification_report, Averaging, ConfusionCounts, EvalReport, MetricsError};

/// Errors from clone evaluation.
#[derive(Debug, Error)]
pub enum EvalError {
    /// A pair references a fragment with no embedding (failed summary or
    /// wrong corpus).
    #[error("no embedding for fragment {id}")]
    MissingEmbedding { id: String },
    #[error("threshold must be strictly between 0 and 1, got {value}")]
    InvalidThreshold { value: f64 },
    #[error("invalid threshold grid: {0}")]
    InvalidGrid(String),
    #[error("cannot evaluate an empty pair set")]
    EmptyPairs,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Cosine similarity of two equal-length vectors, clamped to `[-1, 1]` so
/// accumulated rounding can never push a comparison past the boundaries.
/// A zero-norm input yields 0.0.
///
/// # Panics
///
/// When the vectors differ in length.
#[must_use]
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "cosine of different-length vectors");
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

fn check_threshold(value: f64) -> Result<(), EvalError> {
    if value.is_finite() && 0.0 < value && value < 1.0 {
        Ok(())
    } else {
        Err(EvalError::InvalidThreshold { value })
    }
}

/// A strictly increasing grid of thresholds in (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    grid: Vec<f64>,
}

impl Default for ThresholdConfig {
    /// The standard sweep: 0.50 through 0.75 in steps of 0.05.
    fn default() -> Self {
        Self {
            grid: vec![0.50, 0.55, 0.60, 0.65, 0.70, 0.75],
        }
    }
}

impl ThresholdConfig {
    /// Validates that `grid` is non-empty, strictly increasing, and within
    /// (0, 1).
    ///
    /// # Errors
    ///
    /// [`EvalError::InvalidGrid`] otherwise.
    pub fn new(grid: Vec<f64>) -> Result<Self, EvalError> {
        if grid.is_empty() {
            return Err(EvalError::InvalidGrid("grid is empty".to_string()));
        }
        for value in &grid {
            if !(value.is_finite() && 0.0 < *value && *value < 1.0) {
                return Err(EvalError::InvalidGrid(format!(
                    "threshold {value} is outside (0, 1)"
                )));
            }
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EvalError::InvalidGrid(
                "thresholds must be strictly increasing".to_string(),
            ));
        }
        Ok(Self { grid })
    }

    #[must_use]
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }
}

fn ser_bool_int<S: serde::Serializer>(value: &bool, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u8(u8::from(*value))
}

fn de_bool_int<'de, D: serde::Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    match u8::deserialize(d)? {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(serde::de::Error::custom(format!(
            "pred must be 0 or 1, got {other}"
        ))),
    }
}

/// One classified pair; serializes as
/// `{"id1": …, "id2": …, "sim": …, "pred": 0|1, "T": …}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClonePrediction {
    #[serde(rename = "id1")]
    pub id_a: String,
    #[serde(rename = "id2")]
    pub id_b: String,
    #[serde(rename = "sim")]
    pub similarity: f64,
    #[serde(
        rename = "pred",
        serialize_with = "ser_bool_int",
        deserialize_with = "de_bool_int"
    )]
    pub predicted: bool,
    #[serde(rename = "T")]
    pub threshold: f64,
}

/// Classifies every pair at one threshold (inclusive: `sim >= threshold` is
/// a clone). Output order matches the pair set.
///
/// # Errors
///
/// [`EvalError::InvalidThreshold`], [`EvalError::EmptyPairs`], or
/// [`EvalError::MissingEmbedding`] naming the absent fragment.
pub fn classify_pairs(
    pairs: &PairDataset,
    embeddings: &EmbeddingSet,
    threshold: f64,
) -> Result<Vec<ClonePrediction>, EvalError> {
    check_threshold(threshold)?;
    if pairs.is_empty() {
        return Err(EvalError::EmptyPairs);
    }
    let mut predictions = Vec::with_capacity(pairs.len());
    for pair in pairs.pairs() {
        let a = embeddings
            .get(&pair.id_a)
            .ok_or_else(|| EvalError::MissingEmbedding {
                id: pair.id_a.clone(),
            })?;
        let b = embeddings
            .get(&pair.id_b)
            .ok_or_else(|| EvalError::MissingEmbedding {
                id: pair.id_b.clone(),
            })?;
        let similarity = cosine_similarity(a, b);
        predictions.push(ClonePrediction {
            id_a: pair.id_a.clone(),
            id_b: pair.id_b.clone(),
            similarity,
            predicted: similarity >= threshold,
            threshold,
        });
    }
    Ok(predictions)
}

/// Metrics for one threshold under both averaging schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "T")]
    pub threshold: f64,
    pub binary: EvalReport,
    pub weighted: EvalReport,
}

/// A completed threshold sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    grid: Vec<f64>,
    rows: Vec<SweepRow>,
}

impl SweepTable {
    #[must_use]
    pub fn rows(&self) -> &[SweepRow] {
        &self.rows
    }

    #[must_use]
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// The row with the best weighted F1; ties go to the lower threshold.
    #[must_use]
    pub fn best_by_f1(&self) -> &SweepRow {
        let mut best = &self.rows[0];
        for row in &self.rows[1..] {
            if row.weighted.f1 > best.weighted.f1 {
                best = row;
            }
        }
        best
    }

    /// Renders `T,accuracy,precision,recall,f1` lines from the weighted
    /// reports.
    #[must_use]
    pub fn to_csv(&self) -> String {
        let mut out = String::from("T,accuracy,precision,recall,f1\n");
        for row in &self.rows {
            let w = &row.weighted;
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.threshold, w.accuracy, w.precision, w.recall, w.f1
            ));
        }
        out
    }

    /// # Errors
    ///
    /// I/O failures.
    pub fn write_csv(&self, path: &Path) -> Result<(), EvalError> {
        fs::write(path, self.to_csv()).map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Writes the JSON mirror carrying the grid and both averagings.
    ///
    /// # Errors
    ///
    /// I/O failures.
    pub fn write_json(&self, path: &Path) -> Result<(), EvalError> {
        let body = serde_json::to_string_pretty(self).expect("sweep table always serializes");
        fs::write(path, body).map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Evaluates every threshold in `config` against the labeled pairs.
///
/// Similarities are computed once; each threshold then reduces them to a
/// confusion table and reports under both averaging schemes.
///
/// # Errors
///
/// As [`classify_pairs`], plus metric errors.
pub fn sweep_thresholds(
    pairs: &PairDataset,
    embeddings: &EmbeddingSet,
    config: &ThresholdConfig,
) -> Result<SweepTable, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyPairs);
    }
    let mut sims = Vec::with_capacity(pairs.len());
    for pair in pairs.pairs() {
        let a = embeddings
            .get(&pair.id_a)
            .ok_or_else(|| EvalError::MissingEmbedding {
                id: pair.id_a.clone(),
            })?;
        let b = embeddings
            .get(&pair.id_b)
            .ok_or_else(|| EvalError::MissingEmbedding {
                id: pair.id_b.clone(),
            })?;
        sims.push((cosine_similarity(a, b), pair.truth));
    }
    let mut rows = Vec::with_capacity(config.grid().len());
    for &threshold in config.grid() {
        let counts =
            ConfusionCounts::from_outcomes(sims.iter().map(|&(sim, truth)| (sim >= threshold, truth)))?;
        rows.push(SweepRow {
            threshold,
            binary: classification_report(counts, Averaging::Binary)?,
            weighted: classification_report(counts, Averaging::Weighted)?,
        });
    }
    Ok(SweepTable {
        grid: config.grid().to_vec(),
        rows,
    })
}

/// Writes predictions as JSON lines.
///
/// # Errors
///
/// I/O failures.
pub fn write_predictions_jsonl(
    predictions: &[ClonePrediction],
    path: &Path,
) -> Result<(), EvalError> {
    let io_err = |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = String::new();
    for prediction in predictions {
        out.push_str(&serde_json::to_string(prediction).expect("prediction always serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err)
}
