//! Lloyd's K-means with k-means++ seeding.
//!
//! Distances are accumulated in f64 from f32 inputs; centroids are stored as
//! f32. The assignment step runs in parallel over rows, the centroid update is
//! a sequential fixed-order reduction, so results do not depend on the number
//! of threads.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::{LcgError, Result};
use crate::par;

pub const DEFAULT_K: usize = 100;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansParams {
            k,
            seed,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub dim: usize,
    pub seed: u64,
    /// Row-major K x dim.
    pub centroids: Vec<f32>,
    pub assignment: Vec<usize>,
    pub distance: Vec<f64>,
    pub objective: f64,
    pub iterations_run: usize,
    /// Objective after the initial assignment and after every iteration.
    pub objective_history: Vec<f64>,
}

impl ClusterModel {
    pub fn centroid(&self, k: usize) -> &[f32] {
        &self.centroids[k * self.dim..(k + 1) * self.dim]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }

    /// Record ids per cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.k];
        for (i, &a) in self.assignment.iter().enumerate() {
            members[a].push(i);
        }
        members
    }

    /// Rebuilds a model from stored centroids by re-running the assignment
    /// step. This reproduces the fitted model exactly, since a fitted model's
    /// assignment is always the assignment of its final centroids.
    pub fn from_centroids(
        embeddings: &EmbeddingMatrix,
        centroids: Vec<f32>,
        k: usize,
        seed: u64,
        iterations_run: usize,
        objective_history: Vec<f64>,
    ) -> Result<Self> {
        if centroids.len() != k * embeddings.dim() {
            return Err(LcgError::DimensionMismatch {
                expected: k * embeddings.dim(),
                actual: centroids.len(),
            });
        }
        let (assignment, sq) = assign(embeddings, &centroids, k);
        let objective = sq.iter().sum();
        Ok(ClusterModel {
            k,
            dim: embeddings.dim(),
            seed,
            centroids,
            assignment,
            distance: sq.iter().map(|d| d.sqrt()).collect(),
            objective,
            iterations_run,
            objective_history,
        })
    }

    pub fn report(&self) -> ClusterReport {
        ClusterReport {
            k: self.k,
            dim: self.dim,
            seed: self.seed,
            iterations_run: self.iterations_run,
            objective: self.objective,
            sizes: self.sizes(),
            objective_history: self.objective_history.clone(),
        }
    }
}

/// JSON summary written next to the assignment and centroid files.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClusterReport {
    pub k: usize,
    pub dim: usize,
    pub seed: u64,
    pub iterations_run: usize,
    pub objective: f64,
    pub sizes: Vec<usize>,
    pub objective_history: Vec<f64>,
}

pub fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

/// Nearest centroid for every row (lowest index wins ties) and the squared
/// distance to it.
pub fn assign(embeddings: &EmbeddingMatrix, centroids: &[f32], k: usize) -> (Vec<usize>, Vec<f64>) {
    let dim = embeddings.dim();
    let pairs = par::map_range(embeddings.rows(), |i| {
        let row = embeddings.row(i);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..k {
            let d = squared_distance(row, &centroids[c * dim..(c + 1) * dim]);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        (best, best_d)
    });
    pairs.into_iter().unzip()
}

/// Arithmetic mean of the rows assigned to each cluster.
pub fn compute_centroids(embeddings: &EmbeddingMatrix, assignment: &[usize], k: usize) -> Result<Vec<f32>> {
    let (sums, counts) = accumulate(embeddings, assignment, k)?;
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(LcgError::Numeric(format!("cluster {empty} is empty")));
    }
    Ok(finish_means(&sums, &counts, embeddings.dim()))
}

fn accumulate(embeddings: &EmbeddingMatrix, assignment: &[usize], k: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    if assignment.len() != embeddings.rows() {
        return Err(LcgError::DimensionMismatch {
            expected: embeddings.rows(),
            actual: assignment.len(),
        });
    }
    let dim = embeddings.dim();
    let mut sums = vec![0.0f64; k * dim];
    let mut counts = vec![0usize; k];
    for (i, &a) in assignment.iter().enumerate() {
        if a >= k {
            return Err(LcgError::Data(format!("record {i} assigned to cluster {a} >= k={k}")));
        }
        counts[a] += 1;
        for (s, &v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(embeddings.row(i)) {
            *s += f64::from(v);
        }
    }
    Ok((sums, counts))
}

fn finish_means(sums: &[f64], counts: &[usize], dim: usize) -> Vec<f32> {
    sums.chunks(dim)
        .zip(counts)
        .flat_map(|(s, &n)| s.iter().map(move |&v| if n == 0 { 0.0 } else { (v / n as f64) as f32 }))
        .collect()
}

fn kmeans_plus_plus(embeddings: &EmbeddingMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = embeddings.rows();
    let dim = embeddings.dim();
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(embeddings.row(first));
    let mut nearest: Vec<f64> = par::map_range(n, |i| squared_distance(embeddings.row(i), embeddings.row(first)));

    for _ in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in nearest.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave target just above the final sum
            pick.unwrap_or_else(|| nearest.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            rng.random_range(0..n)
        };
        let row = embeddings.row(pick);
        centroids.extend_from_slice(row);
        let updated = par::map_range(n, |i| squared_distance(embeddings.row(i), row));
        for (d, u) in nearest.iter_mut().zip(updated) {
            if u < *d {
                *d = u;
            }
        }
    }
    centroids
}

/// Moves the centroid of every empty cluster onto the point that is currently
/// farthest from its own centroid. Returns false if there was nothing to do.
fn repair_empty(
    embeddings: &EmbeddingMatrix,
    centroids: &mut [f32],
    counts: &[usize],
    sq: &[f64],
) -> bool {
    let dim = embeddings.dim();
    let empty: Vec<usize> = counts.iter().enumerate().filter(|(_, &c)| c == 0).map(|(i, _)| i).collect();
    if empty.is_empty() {
        return false;
    }
    let mut order: Vec<usize> = (0..sq.len()).collect();
    order.sort_by(|&a, &b| sq[b].total_cmp(&sq[a]).then(a.cmp(&b)));
    for (&cluster, &point) in empty.iter().zip(&order) {
        centroids[cluster * dim..(cluster + 1) * dim].copy_from_slice(embeddings.row(point));
    }
    true
}

pub fn kmeans_fit(embeddings: &EmbeddingMatrix, params: &KMeansParams) -> Result<ClusterModel> {
    let n = embeddings.rows();
    let k = params.k;
    if k < 1 {
        return Err(LcgError::param("k", "must be at least 1"));
    }
    if k > n {
        return Err(LcgError::param("k", format!("k={k} exceeds the number of points ({n})")));
    }
    if params.max_iter < 1 {
        return Err(LcgError::param("max_iter", "must be at least 1"));
    }
    if params.tol.is_nan() || params.tol < 0.0 {
        return Err(LcgError::param("tol", "must be non-negative"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = kmeans_plus_plus(embeddings, k, &mut rng);
    let (mut assignment, mut sq) = assign(embeddings, &centroids, k);
    let mut objective: f64 = sq.iter().sum();
    let mut history = vec![objective];
    let mut iterations = 0;

    while iterations < params.max_iter {
        let (sums, counts) = accumulate(embeddings, &assignment, k)?;
        let mut next = finish_means(&sums, &counts, embeddings.dim());
        repair_empty(embeddings, &mut next, &counts, &sq);
        centroids = next;
        let (a, s) = assign(embeddings, &centroids, k);
        assignment = a;
        sq = s;
        let previous = objective;
        objective = sq.iter().sum();
        history.push(objective);
        iterations += 1;
        if objective == 0.0 || previous <= 0.0 || (previous - objective) / previous < params.tol {
            break;
        }
    }

    // The final assignment may still leave a cluster empty; give each one a
    // point and reassign, without touching the occupied centroids.
    for _ in 0..k {
        let mut counts = vec![0usize; k];
        for &a in &assignment {
            counts[a] += 1;
        }
        if !repair_empty(embeddings, &mut centroids, &counts, &sq) {
            break;
        }
        let (a, s) = assign(embeddings, &centroids, k);
        assignment = a;
        sq = s;
        objective = sq.iter().sum();
        history.push(objective);
    }
    let mut counts = vec![0usize; k];
    for &a in &assignment {
        counts[a] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(LcgError::Data(format!(
            "cluster {empty} stays empty; the data has fewer than k={k} distinct points"
        )));
    }

    Ok(ClusterModel {
        k,
        dim: embeddings.dim(),
        seed: params.seed,
        centroids,
        distance: sq.iter().map(|d| d.sqrt()).collect(),
        assignment,
        objective,
        iterations_run: iterations,
        objective_history: history,
    })
}

const CENTROID_MAGIC: &[u8; 4] = b"LCGC";

/// Writes assignment as a little-endian u32 array.
pub fn write_assignment(assignment: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = assignment.iter().flat_map(|&a| (a as u32).to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| LcgError::io(path, e))
}

pub fn read_assignment(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| LcgError::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(LcgError::Format {
            path: path.into(),
            reason: "length is not a multiple of 4".into(),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect())
}

/// `"LCGC" | u32 version | u32 k | u32 dim | k*dim f32`, little-endian.
pub fn write_centroids(model: &ClusterModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(16 + model.centroids.len() * 4);
    out.extend_from_slice(CENTROID_MAGIC);
    out.extend_from_slice(&1u32.to_le_bytes());
    out.extend_from_slice(&(model.k as u32).to_le_bytes());
    out.extend_from_slice(&(model.dim as u32).to_le_bytes());
    for v in &model.centroids {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| LcgError::io(path, e))
}

/// Returns `(k, dim, centroids)`.
pub fn read_centroids(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f32>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| LcgError::io(path, e))?;
    let fail = |reason: &str| LcgError::Format {
        path: path.into(),
        reason: reason.into(),
    };
    if bytes.len() < 16 || &bytes[..4] != CENTROID_MAGIC {
        return Err(fail("not a centroid file"));
    }
    let u = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    if u(4) != 1 {
        return Err(fail("unsupported centroid file version"));
    }
    let (k, dim) = (u(8), u(12));
    if bytes.len() != 16 + k * dim * 4 {
        return Err(fail("centroid payload size does not match header"));
    }
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((k, dim, data))
}
