//! Exact t-SNE projection of embeddings to 2-D.
//!
//! This is the O(n²) reference algorithm: per-point bandwidths found by
//! binary search so every conditional distribution hits the requested
//! perplexity, symmetrized joint probabilities, and gradient descent on the
//! KL divergence with early exaggeration, momentum switching, and adaptive
//! per-coordinate gains. Runs are a pure function of the inputs and the
//! seed, and every iteration's KL against the *true* (unexaggerated) target
//! is traced so convergence is observable.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::embed::EmbeddingSet;
use crate::matrix::RowMatrix;

/// Errors from projection.
#[derive(Debug, Error)]
pub enum VizError {
    /// All input rows are identical; no structure to lay out.
    #[error("zero variance input")]
    ZeroVariance,
    #[error("perplexity {perplexity} too large for {n} points (need 3*perplexity <= n-1)")]
    PerplexityTooLarge { perplexity: f64, n: usize },
    #[error("need at least 8 points, got {n}")]
    TooFewPoints { n: usize },
    #[error("invalid projection config: {0}")]
    InvalidConfig(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// t-SNE knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct TsneConfig {
    /// Effective number of neighbors each conditional distribution targets.
    pub perplexity: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    /// Factor applied to the attractive forces for the first
    /// `exaggeration_iters` iterations.
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    /// Iteration at which momentum switches from initial to final.
    pub momentum_switch_iter: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            learning_rate: 200.0,
            iterations: 1000,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            momentum_switch_iter: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            seed: 0,
        }
    }
}

impl TsneConfig {
    fn validate(&self) -> Result<(), VizError> {
        let bad = |msg: String| Err(VizError::InvalidConfig(msg));
        if !self.perplexity.is_finite() || self.perplexity <= 1.0 {
            return bad(format!("perplexity must exceed 1, got {}", self.perplexity));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return bad(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.iterations < 250 {
            return bad(format!(
                "need at least 250 iterations, got {}",
                self.iterations
            ));
        }
        if !self.early_exaggeration.is_finite() || self.early_exaggeration < 1.0 {
            return bad(format!(
                "early exaggeration must be at least 1, got {}",
                self.early_exaggeration
            ));
        }
        if self.exaggeration_iters > self.iterations {
            return bad(format!(
                "exaggeration_iters {} exceeds iterations {}",
                self.exaggeration_iters, self.iterations
            ));
        }
        for (name, m) in [
            ("initial_momentum", self.initial_momentum),
            ("final_momentum", self.final_momentum),
        ] {
            if !(0.0..1.0).contains(&m) {
                return bad(format!("{name} must be in [0, 1), got {m}"));
            }
        }
        Ok(())
    }
}

/// A fitted 2-D layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection2D {
    pub ids: Vec<String>,
    /// n×2 coordinates, row `i` for `ids[i]`.
    pub coords: RowMatrix,
    /// Optional class labels carried through for plotting.
    pub labels: Option<Vec<i64>>,
    /// KL divergence against the true target after the final iteration.
    pub final_kl: f64,
}

/// Per-iteration KL divergence against the unexaggerated target.
#[derive(Debug, Clone, PartialEq)]
pub struct TsneTrace {
    pub kl_by_iter: Vec<f64>,
}

/// Pairwise squared Euclidean distances (exact, n×n).
fn squared_distances(data: &RowMatrix) -> RowMatrix {
    let n = data.n_rows();
    let mut out = RowMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut acc = 0.0;
            for (a, b) in data.row(i).iter().zip(data.row(j)) {
                let d = a - b;
                acc += d * d;
            }
            out.row_mut(i)[j] = acc;
            out.row_mut(j)[i] = acc;
        }
    }
    out
}

struct RowCalibration {
    probabilities: Vec<f64>,
    sum_p: f64,
    entropy_nats: f64,
}

fn evaluate_row(distances: &[f64], skip: usize, beta: f64, shift: f64) -> RowCalibration {
    let mut probabilities = vec![0.0; distances.len()];
    let mut sum_p = 0.0;
    let mut sum_dp = 0.0;
    for (j, &d) in distances.iter().enumerate() {
        if j == skip {
            continue;
        }
        let shifted = d - shift;
        let e = (-beta * shifted).exp();
        probabilities[j] = e;
        sum_p += e;
        sum_dp += shifted * e;
    }
    let entropy_nats = sum_p.ln() + beta * sum_dp / sum_p;
    RowCalibration {
        probabilities,
        sum_p,
        entropy_nats,
    }
}

/// Conditional probabilities `p(j|i)`, each row's bandwidth binary-searched
/// (at most 64 halvings/doublings, tolerance 1e-5 nats) so its entropy
/// matches `ln(perplexity)`. Row `i` sums to 1 with `p(i|i) = 0`.
#[must_use]
pub fn conditional_probabilities(data: &RowMatrix, perplexity: f64) -> RowMatrix {
    let n = data.n_rows();
    let distances = squared_distances(data);
    let target = perplexity.ln();
    let mut conditionals = RowMatrix::zeros(n, n);
    for i in 0..n {
        let row = distances.row(i);
        // Shift by the smallest off-diagonal distance so the largest
        // exponent is exactly 0; keeps everything in exp's happy range.
        let shift = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &d)| d)
            .fold(f64::INFINITY, f64::min);
        let mut beta = 1.0f64;
        let mut lo = 0.0f64;
        let mut hi = f64::INFINITY;
        let mut cal = evaluate_row(row, i, beta, shift);
        for _ in 0..64 {
            let diff = cal.entropy_nats - target;
            if diff.abs() < 1e-5 {
                break;
            }
            if diff > 0.0 {
                // Entropy too high: sharpen by raising beta.
                lo = beta;
                beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = if lo > 0.0 { 0.5 * (beta + lo) } else { beta * 0.5 };
            }
            cal = evaluate_row(row, i, beta, shift);
        }
        let out = conditionals.row_mut(i);
        for (j, p) in cal.probabilities.iter().enumerate() {
            out[j] = p / cal.sum_p;
        }
    }
    conditionals
}

/// Symmetrized joint probabilities `P = (P(j|i) + P(i|j)) / 2n`: symmetric,
/// zero diagonal, total mass 1.
#[must_use]
pub fn joint_probabilities(data: &RowMatrix, perplexity: f64) -> RowMatrix {
    let conditionals = conditional_probabilities(data, perplexity);
    let n = data.n_rows();
    let mut joint = RowMatrix::zeros(n, n);
    let scale = 1.0 / (2.0 * n as f64);
    for i in 0..n {
        for j in 0..n {
            joint.row_mut(i)[j] =
                (conditionals.row(i)[j] + conditionals.row(j)[i]) * scale;
        }
    }
    joint
}

/// Student-t similarity weights for the current layout and their total.
fn layout_weights(y: &RowMatrix) -> (RowMatrix, f64) {
    let n = y.n_rows();
    let mut weights = RowMatrix::zeros(n, n);
    let mut total = 0.0;
    for i in 0..n {
        let (xi, yi) = (y.row(i)[0], y.row(i)[1]);
        for j in (i + 1)..n {
            let dx = xi - y.row(j)[0];
            let dy = yi - y.row(j)[1];
            let w = 1.0 / (1.0 + dx * dx + dy * dy);
            weights.row_mut(i)[j] = w;
            weights.row_mut(j)[i] = w;
            total += 2.0 * w;
        }
    }
    (weights, total)
}

const PROB_FLOOR: f64 = 1e-12;

/// KL(P ‖ Q) for the layout `y`; terms with `p < 1e-12` are skipped and `q`
/// is floored at 1e-12, so the result is always finite.
#[must_use]
pub fn kl_divergence(p: &RowMatrix, y: &RowMatrix) -> f64 {
    let (weights, total) = layout_weights(y);
    let n = y.n_rows();
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let pij = p.row(i)[j];
            if pij < PROB_FLOOR {
                continue;
            }
            let qij = (weights.row(i)[j] / total).max(PROB_FLOOR);
            kl += pij * (pij / qij).ln();
        }
    }
    kl
}

/// Analytic KL gradient: `4 Σ_j (p_ij − q_ij) w_ij (y_i − y_j)` per point,
/// with `p` scaled by `exaggeration`. Public so callers can verify the
/// optimizer against finite differences of [`kl_divergence`].
pub fn kl_gradient(p: &RowMatrix, y: &RowMatrix, exaggeration: f64) -> RowMatrix {
    let (weights, total) = layout_weights(y);
    let n = y.n_rows();
    let mut grad = RowMatrix::zeros(n, 2);
    for i in 0..n {
        let (xi, yi) = (y.row(i)[0], y.row(i)[1]);
        let mut gx = 0.0;
        let mut gy = 0.0;
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = weights.row(i)[j];
            let coeff = 4.0 * (exaggeration * p.row(i)[j] - w / total) * w;
            gx += coeff * (xi - y.row(j)[0]);
            gy += coeff * (yi - y.row(j)[1]);
        }
        grad.row_mut(i)[0] = gx;
        grad.row_mut(i)[1] = gy;
    }
    grad
}

fn recenter(y: &mut RowMatrix) {
    let n = y.n_rows();
    if n == 0 {
        return;
    }
    let mut mean_x = 0.0;
    let mut mean_y = 0.0;
    for i in 0..n {
        mean_x += y.row(i)[0];
        mean_y += y.row(i)[1];
    }
    mean_x /= n as f64;
    mean_y /= n as f64;
    for i in 0..n {
        y.row_mut(i)[0] -= mean_x;
        y.row_mut(i)[1] -= mean_y;
    }
}

/// Projects arbitrary rows to 2-D, returning the layout and the KL trace.
///
/// # Errors
///
/// [`VizError::TooFewPoints`] (< 8), [`VizError::PerplexityTooLarge`]
/// (needs `3*perplexity <= n-1`), [`VizError::ZeroVariance`] when all rows
/// coincide, or [`VizError::InvalidConfig`].
pub fn tsne_with_trace(
    data: &RowMatrix,
    ids: Vec<String>,
    labels: Option<Vec<i64>>,
    config: &TsneConfig,
) -> Result<(Projection2D, TsneTrace), VizError> {
    config.validate()?;
    let n = data.n_rows();
    if n < 8 {
        return Err(VizError::TooFewPoints { n });
    }
    if 3.0 * config.perplexity > (n - 1) as f64 {
        return Err(VizError::PerplexityTooLarge {
            perplexity: config.perplexity,
            n,
        });
    }
    if ids.len() != n {
        return Err(VizError::InvalidConfig(format!(
            "{} ids for {n} rows",
            ids.len()
        )));
    }
    if let Some(labels) = &labels {
        if labels.len() != n {
            return Err(VizError::InvalidConfig(format!(
                "{} labels for {n} rows",
                labels.len()
            )));
        }
    }
    let first = data.row(0);
    let identical = (1..n).all(|i| data.row(i) == first);
    if identical {
        return Err(VizError::ZeroVariance);
    }

    let p = joint_probabilities(data, config.perplexity);

    // Tiny Gaussian init via Box-Muller; 1 - u keeps ln away from zero.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut y = RowMatrix::zeros(n, 2);
    for i in 0..n {
        for c in 0..2 {
            let u1: f64 = 1.0 - rng.random::<f64>();
            let u2: f64 = rng.random::<f64>();
            let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            y.row_mut(i)[c] = 1e-4 * z;
        }
    }

    let mut velocity = RowMatrix::zeros(n, 2);
    let mut gains = RowMatrix::zeros(n, 2);
    gains.data_mut().fill(1.0);
    let mut kl_by_iter = Vec::with_capacity(config.iterations);
    for iter in 0..config.iterations {
        let exaggeration = if iter < config.exaggeration_iters {
            config.early_exaggeration
        } else {
            1.0
        };
        let momentum = if iter < config.momentum_switch_iter {
            config.initial_momentum
        } else {
            config.final_momentum
        };
        let grad = kl_gradient(&p, &y, exaggeration);
        for idx in 0..n * 2 {
            let g = grad.data()[idx];
            let v = velocity.data()[idx];
            let gain = &mut gains.data_mut()[idx];
            // Gain adaptation: grow when the gradient flips against the
            // velocity, shrink when they agree, never below 0.01.
            *gain = if (g > 0.0) != (v > 0.0) {
                *gain + 0.2
            } else {
                (*gain * 0.8).max(0.01)
            };
            let step = momentum * v - config.learning_rate * *gain * g;
            velocity.data_mut()[idx] = step;
            y.data_mut()[idx] += step;
        }
        recenter(&mut y);
        kl_by_iter.push(kl_divergence(&p, &y));
    }
    let final_kl = *kl_by_iter.last().expect("at least 250 iterations ran");
    Ok((
        Projection2D {
            ids,
            coords: y,
            labels,
            final_kl,
        },
        TsneTrace { kl_by_iter },
    ))
}

/// Projects an embedding set to 2-D.
///
/// # Errors
///
/// As [`tsne_with_trace`].
pub fn tsne(
    set: &EmbeddingSet,
    labels: Option<Vec<i64>>,
    config: &TsneConfig,
) -> Result<Projection2D, VizError> {
    let (projection, _) = tsne_with_trace(set.matrix(), set.ids().to_vec(), labels, config)?;
    Ok(projection)
}

#[derive(Serialize)]
struct PointJson<'a> {
    id: &'a str,
    x: f64,
    y: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<i64>,
}

#[derive(Serialize)]
struct ProjectionJson<'a> {
    points: Vec<PointJson<'a>>,
}

impl Projection2D {
    /// Renders `id,x,y` CSV (plus a `label` column when labels are present).
    #[must_use]
    pub fn to_csv(&self) -> String {
        let mut out = String::from(if self.labels.is_some() {
            "id,x,y,label\n"
        } else {
            "id,x,y\n"
        });
        for (i, id) in self.ids.iter().enumerate() {
            let row = self.coords.row(i);
            match &self.labels {
                Some(labels) => {
                    out.push_str(&format!("{id},{},{},{}\n", row[0], row[1], labels[i]));
                }
                None => out.push_str(&format!("{id},{},{}\n", row[0], row[1])),
            }
        }
        out
    }

    /// # Errors
    ///
    /// I/O failures.
    pub fn write_csv(&self, path: &Path) -> Result<(), VizError> {
        fs::write(path, self.to_csv()).map_err(|source| VizError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Writes the JSON mirror: `{"points": [{"id", "x", "y"[, "label"]}]}`.
    ///
    /// # Errors
    ///
    /// I/O failures.
    pub fn write_json(&self, path: &Path) -> Result<(), VizError> {
        let points = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| PointJson {
                id,
                x: self.coords.row(i)[0],
                y: self.coords.row(i)[1],
                label: self.labels.as_ref().map(|l| l[i]),
            })
            .collect();
        let body = serde_json::to_string_pretty(&ProjectionJson { points })
            .expect("projection always serializes");
        fs::write(path, body).map_err(|source| VizError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}
