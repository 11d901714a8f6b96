//! K-means clustering over embedding rows.
//!
//! Standard Lloyd iterations with k-means++ seeding, multiple restarts on
//! decorrelated RNG streams of one base seed, deterministic tie-breaking
//! (lowest centroid index wins), and empty-cluster repair (an empty centroid
//! jumps to the point farthest from its current centroid). The best restart
//! by inertia is returned; everything is reproducible from the seed.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::matrix::RowMatrix;

/// Errors from clustering.
#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("cannot cluster an empty data set")]
    EmptyData,
    #[error("k must be between 1 and the number of points, got k={k} for n={n}")]
    InvalidK { k: usize, n: usize },
    #[error("invalid clustering config: {0}")]
    InvalidConfig(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// K-means knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct KmeansConfig {
    pub k: usize,
    pub seed: u64,
    /// Lloyd iteration cap per restart.
    pub max_iter: usize,
    /// Convergence threshold on the Frobenius norm of the centroid shift.
    pub tol: f64,
    /// Independent seeded restarts; the best inertia wins.
    pub restarts: usize,
}

impl KmeansConfig {
    /// Defaults: 300 iterations, tolerance 1e-4, 10 restarts, seed 0.
    #[must_use]
    pub fn new(k: usize) -> Self {
        Self {
            k,
            seed: 0,
            max_iter: 300,
            tol: 1e-4,
            restarts: 10,
        }
    }

    /// # Errors
    ///
    /// [`ClusterError::InvalidConfig`] for zero iterations/restarts or a
    /// negative/NaN tolerance.
    fn validate(&self) -> Result<(), ClusterError> {
        if self.max_iter == 0 {
            return Err(ClusterError::InvalidConfig(
                "max_iter must be at least 1".to_string(),
            ));
        }
        if self.restarts == 0 {
            return Err(ClusterError::InvalidConfig(
                "restarts must be at least 1".to_string(),
            ));
        }
        if !self.tol.is_finite() || self.tol < 0.0 {
            return Err(ClusterError::InvalidConfig(format!(
                "tol must be finite and non-negative, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// A fitted clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    /// Cluster index per input row.
    pub assignments: Vec<usize>,
    /// One centroid per row.
    pub centroids: RowMatrix,
    /// Sum of squared distances from each point to its centroid.
    pub inertia: f64,
    /// Lloyd iterations used by the winning restart.
    pub iterations: usize,
    /// The base seed the run was derived from.
    pub seed: u64,
}

fn d2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Sum of squared distances from each point to its assigned centroid.
#[must_use]
pub fn inertia(data: &RowMatrix, centroids: &RowMatrix, assignments: &[usize]) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &c)| d2(data.row(i), centroids.row(c)))
        .sum()
}

/// K-means++ seeding: D²-weighted sampling of successive centroids.
fn kmeanspp_init(data: &RowMatrix, k: usize, rng: &mut ChaCha8Rng) -> RowMatrix {
    let n = data.n_rows();
    let mut centroids = RowMatrix::zeros(k, data.n_cols());
    let first = rng.random_range(0..n);
    centroids.set_row(0, data.row(first));
    let mut nearest: Vec<f64> = (0..n).map(|i| d2(data.row(i), centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let chosen = if total <= 0.0 {
            // Every point coincides with a chosen centroid; any point works.
            rng.random_range(0..n)
        } else {
            let threshold = rng.random_range(0.0..total);
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &weight) in nearest.iter().enumerate() {
                acc += weight;
                if acc > threshold {
                    pick = i;
                    break;
                }
            }
            pick
        };
        centroids.set_row(c, data.row(chosen));
        for (i, near) in nearest.iter_mut().enumerate() {
            let dist = d2(data.row(i), centroids.row(c));
            if dist < *near {
                *near = dist;
            }
        }
    }
    centroids
}

fn nearest_centroid(centroids: &RowMatrix, point: &[f64]) -> usize {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for c in 0..centroids.n_rows() {
        let dist = d2(point, centroids.row(c));
        // Strictly-less keeps the lowest index on ties.
        if dist < best_d {
            best_d = dist;
            best = c;
        }
    }
    best
}

struct SingleRun {
    assignments: Vec<usize>,
    centroids: RowMatrix,
    inertia: f64,
    iterations: usize,
}

fn kmeans_single(data: &RowMatrix, config: &KmeansConfig, rng: &mut ChaCha8Rng) -> SingleRun {
    let n = data.n_rows();
    let d = data.n_cols();
    let k = config.k;
    let mut centroids = kmeanspp_init(data, k, rng);
    let mut assignments = vec![usize::MAX; n];
    let mut last_inertia = f64::INFINITY;
    let mut iterations = 0usize;
    for _ in 0..config.max_iter {
        iterations += 1;

        let mut changed = false;
        for (i, slot) in assignments.iter_mut().enumerate() {
            let c = nearest_centroid(&centroids, data.row(i));
            if *slot != c {
                *slot = c;
                changed = true;
            }
        }

        let mut new_centroids = RowMatrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            counts[c] += 1;
            let row = new_centroids.row_mut(c);
            for (sum, value) in row.iter_mut().zip(data.row(i)) {
                *sum += value;
            }
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                let inv = 1.0 / count as f64;
                for value in new_centroids.row_mut(c) {
                    *value *= inv;
                }
            } else {
                // Keep the stale centroid; repair below may relocate it.
                let old = centroids.row(c).to_vec();
                new_centroids.set_row(c, &old);
            }
        }

        // Empty-cluster repair: park the centroid on the point farthest
        // from its current centroid, each point used at most once per
        // iteration. Assignments catch up next iteration.
        let mut repaired = false;
        let mut taken = vec![false; n];
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                continue;
            }
            let mut best_i = 0usize;
            let mut best_d = -1.0f64;
            for (i, &is_taken) in taken.iter().enumerate() {
                if is_taken {
                    continue;
                }
                let dist = d2(data.row(i), new_centroids.row(assignments[i]));
                if dist > best_d {
                    best_d = dist;
                    best_i = i;
                }
            }
            if d2(new_centroids.row(c), data.row(best_i)) > 0.0 {
                repaired = true;
            }
            new_centroids.set_row(c, data.row(best_i));
            taken[best_i] = true;
        }

        let shift = centroids.squared_distance_to(&new_centroids).sqrt();
        centroids = new_centroids;
        let now = inertia(data, &centroids, &assignments);
        debug_assert!(
            now <= last_inertia + 1e-9,
            "inertia increased within a restart: {last_inertia} -> {now}"
        );
        last_inertia = now;
        if !repaired && (!changed || shift < config.tol) {
            break;
        }
    }
    SingleRun {
        assignments,
        centroids,
        inertia: last_inertia,
        iterations,
    }
}

/// Fits k-means to the rows of `data`.
///
/// Each restart draws from an independent stream of the base seed, so the
/// whole run is a pure function of `(data, config)`. The restart with the
/// strictly lowest inertia wins (ties keep the earliest restart).
///
/// # Errors
///
/// [`ClusterError::EmptyData`], [`ClusterError::InvalidK`], or
/// [`ClusterError::InvalidConfig`].
pub fn kmeans(data: &RowMatrix, config: &KmeansConfig) -> Result<ClusteringResult, ClusterError> {
    let n = data.n_rows();
    if n == 0 {
        return Err(ClusterError::EmptyData);
    }
    if config.k == 0 || config.k > n {
        return Err(ClusterError::InvalidK { k: config.k, n });
    }
    config.validate()?;
    let mut best: Option<SingleRun> = None;
    for restart in 0..config.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(restart as u64);
        let run = kmeans_single(data, config, &mut rng);
        let better = best
            .as_ref()
            .map(|b| run.inertia < b.inertia)
            .unwrap_or(true);
        if better {
            best = Some(run);
        }
    }
    let run = best.expect("at least one restart ran");
    Ok(ClusteringResult {
        assignments: run.assignments,
        centroids: run.centroids,
        inertia: run.inertia,
        iterations: run.iterations,
        seed: config.seed,
    })
}

#[derive(Serialize)]
struct AssignmentRecord<'a> {
    id: &'a str,
    cluster: usize,
}

/// Writes `{"id": …, "cluster": …}` JSON lines, one per point.
///
/// # Errors
///
/// [`ClusterError::InvalidConfig`] when ids and assignments differ in
/// length, plus I/O failures.
pub fn write_assignments_jsonl(
    ids: &[String],
    assignments: &[usize],
    path: &Path,
) -> Result<(), ClusterError> {
    if ids.len() != assignments.len() {
        return Err(ClusterError::InvalidConfig(format!(
            "{} ids but {} assignments",
            ids.len(),
            assignments.len()
        )));
    }
    let mut out = String::new();
    for (id, &cluster) in ids.iter().zip(assignments) {
        let record = AssignmentRecord { id, cluster };
        out.push_str(&serde_json::to_string(&record).expect("record always serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| ClusterError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes centroids as row-major little-endian `f32`.
///
/// # Errors
///
/// I/O failures.
pub fn write_centroids_f32(centroids: &RowMatrix, path: &Path) -> Result<(), ClusterError> {
    let mut bytes = Vec::with_capacity(centroids.data().len() * 4);
    for &value in centroids.data() {
        bytes.extend_from_slice(&(value as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|source| ClusterError::Io {
        path: path.to_path_buf(),
        source,
    })
}
