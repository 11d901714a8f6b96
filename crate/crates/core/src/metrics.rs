//! Classification metrics and partition agreement.
//!
//! Clone detection reports accuracy, precision, recall, and F1 from a binary
//! confusion table, in either plain binary form (positive class only) or as a
//! support-weighted average over both classes. Clustering quality against
//! ground-truth labels is scored with the adjusted Rand index, computed with
//! exact integer contingency arithmetic so that agreement values carry no
//! floating-point accumulation error.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from metric computations.
#[derive(Debug, Error)]
pub enum MetricsError {
    /// No (prediction, truth) outcomes were supplied.
    #[error("cannot compute metrics over an empty outcome set")]
    EmptyInput,
    /// Partition slices have different lengths.
    #[error("partition length mismatch: truth has {truth}, prediction has {pred}")]
    LengthMismatch { truth: usize, pred: usize },
    /// Partition agreement needs at least two elements.
    #[error("adjusted Rand index needs at least 2 elements, got {found}")]
    TooFewElements { found: usize },
}

/// Binary confusion table.
///
/// `fn_` is serialized as `"fn"`; the underscore only dodges the keyword.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    /// Tallies `(predicted, truth)` outcomes.
    ///
    /// # Errors
    ///
    /// Returns [`MetricsError::EmptyInput`] when the iterator yields nothing.
    pub fn from_outcomes<I>(outcomes: I) -> Result<Self, MetricsError>
    where
        I: IntoIterator<Item = (bool, bool)>,
    {
        let mut counts = Self {
            tp: 0,
            fp: 0,
            fn_: 0,
            tn: 0,
        };
        let mut any = false;
        for (predicted, truth) in outcomes {
            any = true;
            match (predicted, truth) {
                (true, true) => counts.tp += 1,
                (true, false) => counts.fp += 1,
                (false, true) => counts.fn_ += 1,
                (false, false) => counts.tn += 1,
            }
        }
        if !any {
            return Err(MetricsError::EmptyInput);
        }
        Ok(counts)
    }

    /// Total number of outcomes in the table.
    #[must_use]
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// How per-class metrics are combined into the reported numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Positive-class metrics only.
    Binary,
    /// Per-class metrics averaged with weights proportional to class support.
    /// Under this scheme recall always equals accuracy.
    Weighted,
}

/// Accuracy, precision, recall, and F1 for one confusion table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub averaging: Averaging,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
    /// True when a precision denominator was zero for a class that carries
    /// weight; the affected term is reported as 0.0 instead of NaN.
    pub degenerate_precision: bool,
    /// Same for a recall denominator.
    pub degenerate_recall: bool,
}

/// Harmonic mean of precision and recall; 0.0 when both are zero.
#[must_use]
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Derives an [`EvalReport`] from a confusion table.
///
/// Zero denominators never produce NaN: the affected metric is reported as
/// 0.0 and the matching degenerate flag is set.
///
/// # Errors
///
/// Returns [`MetricsError::EmptyInput`] when the table is all zeros.
pub fn classification_report(
    counts: ConfusionCounts,
    averaging: Averaging,
) -> Result<EvalReport, MetricsError> {
    let total = counts.total();
    if total == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let accuracy = (counts.tp + counts.tn) as f64 / total as f64;

    match averaging {
        Averaging::Binary => {
            let (precision, deg_p) = ratio(counts.tp, counts.tp + counts.fp);
            let (recall, deg_r) = ratio(counts.tp, counts.tp + counts.fn_);
            Ok(EvalReport {
                averaging,
                accuracy,
                precision,
                recall,
                f1: f1_score(precision, recall),
                counts,
                degenerate_precision: deg_p,
                degenerate_recall: deg_r,
            })
        }
        Averaging::Weighted => {
            // Treat "clone" and "not clone" as two classes; the negative
            // class's precision/recall mirror the positive ones with the
            // table transposed.
            let support_pos = counts.tp + counts.fn_;
            let support_neg = counts.tn + counts.fp;
            let mut precision = 0.0;
            let mut recall = 0.0;
            let mut f1 = 0.0;
            let mut deg_p = false;
            let mut deg_r = false;
            let classes = [
                (support_pos, counts.tp, counts.tp + counts.fp),
                (support_neg, counts.tn, counts.tn + counts.fn_),
            ];
            for (support, hit, predicted) in classes {
                if support == 0 {
                    continue; // class absent from truth: zero weight
                }
                let weight = support as f64 / total as f64;
                let (p, dp) = ratio(hit, predicted);
                let (r, dr) = ratio(hit, support);
                deg_p |= dp;
                deg_r |= dr;
                precision += weight * p;
                recall += weight * r;
                f1 += weight * f1_score(p, r);
            }
            Ok(EvalReport {
                averaging,
                accuracy,
                precision,
                recall,
                f1,
                counts,
                degenerate_precision: deg_p,
                degenerate_recall: deg_r,
            })
        }
    }
}

fn choose2(n: i128) -> i128 {
    n * (n - 1) / 2
}

/// Adjusted Rand index between two partitions of the same elements.
///
/// Accepts any hashable label types; only label co-occurrence matters, so the
/// value is invariant under relabeling of either side. Computed from the
/// contingency table in exact `i128` arithmetic; the final division is the
/// only floating-point step. When the expected-index correction collapses the
/// denominator to zero (both partitions trivial), the partitions are
/// identical up to relabeling and the index is 1.0.
///
/// # Errors
///
/// Returns [`MetricsError::LengthMismatch`] for unequal slice lengths and
/// [`MetricsError::TooFewElements`] for fewer than two elements.
pub fn adjusted_rand_index<T, U>(truth: &[T], pred: &[U]) -> Result<f64, MetricsError>
where
    T: Eq + Hash,
    U: Eq + Hash,
{
    if truth.len() != pred.len() {
        return Err(MetricsError::LengthMismatch {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    if truth.len() < 2 {
        return Err(MetricsError::TooFewElements { found: truth.len() });
    }

    // Contingency table n_ij plus row and column sums, keyed by label refs.
    let mut cells: HashMap<(&T, &U), i128> = HashMap::new();
    let mut row_sums: HashMap<&T, i128> = HashMap::new();
    let mut col_sums: HashMap<&U, i128> = HashMap::new();
    for (t, p) in truth.iter().zip(pred) {
        *cells.entry((t, p)).or_insert(0) += 1;
        *row_sums.entry(t).or_insert(0) += 1;
        *col_sums.entry(p).or_insert(0) += 1;
    }

    let sum_cells: i128 = cells.values().map(|&c| choose2(c)).sum();
    let sum_rows: i128 = row_sums.values().map(|&c| choose2(c)).sum();
    let sum_cols: i128 = col_sums.values().map(|&c| choose2(c)).sum();
    let total_pairs = choose2(truth.len() as i128);

    // ARI = (sum_cells - sum_rows*sum_cols/total) /
    //       ((sum_rows+sum_cols)/2 - sum_rows*sum_cols/total),
    // cleared of fractions by multiplying through by 2*total.
    let numerator = 2 * (sum_cells * total_pairs - sum_rows * sum_cols);
    let denominator = (sum_rows + sum_cols) * total_pairs - 2 * sum_rows * sum_cols;
    if denominator == 0 {
        return Ok(1.0);
    }
    Ok(numerator as f64 / denominator as f64)
}
