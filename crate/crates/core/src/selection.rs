//! Scoring the non-coreset remainder and picking the low-confidence subset.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::{nb_predict, ProbabilityVector, Scorer};
use crate::clustering::ClusterModel;
use crate::corpus::Dataset;
use crate::embedding::EmbeddingMatrix;
use crate::error::{LcgError, Result};
use crate::par;

pub const DEFAULT_TAU: f64 = 0.7;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRecord {
    pub id: usize,
    pub cluster: usize,
    pub probabilities: ProbabilityVector,
    /// Max entry of `probabilities`.
    pub confidence: f64,
}

impl ScoredRecord {
    pub fn new(id: usize, cluster: usize, probabilities: ProbabilityVector) -> Self {
        let confidence = probabilities.confidence();
        ScoredRecord {
            id,
            cluster,
            probabilities,
            confidence,
        }
    }
}

/// Scores every id in `remainder` (ascending order is preserved). The MLP
/// reads embedding rows, naive Bayes reads record text.
pub fn score_all(
    scorer: &Scorer,
    remainder: &[usize],
    embeddings: &EmbeddingMatrix,
    dataset: &Dataset,
    clusters: &ClusterModel,
) -> Result<Vec<ScoredRecord>> {
    if let Some(&bad) = remainder.iter().find(|&&id| id >= clusters.assignment.len()) {
        return Err(LcgError::Data(format!("record {bad} has no cluster assignment")));
    }
    let probs: Vec<Result<ProbabilityVector>> = match scorer {
        Scorer::Mlp(model) => {
            if model.dim != embeddings.dim() {
                return Err(LcgError::DimensionMismatch {
                    expected: model.dim,
                    actual: embeddings.dim(),
                });
            }
            if let Some(&bad) = remainder.iter().find(|&&id| id >= embeddings.rows()) {
                return Err(LcgError::Data(format!("record {bad} has no embedding row")));
            }
            par::map_range(remainder.len(), |i| model.forward(embeddings.row(remainder[i])))
        }
        Scorer::Nb(model) => {
            if let Some(&bad) = remainder.iter().find(|&&id| id >= dataset.len()) {
                return Err(LcgError::Data(format!("unknown record id {bad}")));
            }
            par::map_range(remainder.len(), |i| Ok(nb_predict(model, &dataset.records()[remainder[i]])))
        }
    };
    remainder
        .iter()
        .zip(probs)
        .map(|(&id, p)| Ok(ScoredRecord::new(id, clusters.assignment[id], p?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// Keep every record with confidence strictly below `tau`.
    GlobalThreshold { tau: f64 },
    /// Keep the `k` least-confident records of each cluster.
    PerClusterTopK { k: usize },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::GlobalThreshold { .. } => "threshold",
            Strategy::PerClusterTopK { .. } => "topk",
        }
    }
}

impl FromStr for Strategy {
    type Err = LcgError;

    /// `threshold[:tau]` or `topk:k`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        match (name, arg) {
            ("threshold", None) => Ok(Strategy::GlobalThreshold { tau: DEFAULT_TAU }),
            ("threshold", Some(a)) => a
                .parse()
                .map(|tau| Strategy::GlobalThreshold { tau })
                .map_err(|_| LcgError::param("tau", format!("not a number: {a:?}"))),
            ("topk", Some(a)) => a
                .parse()
                .map(|k| Strategy::PerClusterTopK { k })
                .map_err(|_| LcgError::param("k_per_cluster", format!("not an integer: {a:?}"))),
            ("topk", None) => Err(LcgError::param("k_per_cluster", "topk needs a per-cluster count")),
            _ => Err(LcgError::param("strategy", format!("unknown strategy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Ascending.
    pub selected_ids: Vec<usize>,
    pub strategy: Strategy,
    pub scores: Vec<ScoredRecord>,
}

pub fn select_gold(scores: Vec<ScoredRecord>, strategy: Strategy) -> Result<SelectionResult> {
    let mut selected: Vec<usize> = match strategy {
        Strategy::GlobalThreshold { tau } => {
            // with no scores the class count is unknown; only (0, 1] applies
            let floor = scores.first().map_or(0.0, |s| 1.0 / s.probabilities.len() as f64);
            if !(tau > floor && tau <= 1.0) {
                return Err(LcgError::param("tau", format!("must lie in ({floor}, 1], got {tau}")));
            }
            scores.iter().filter(|s| s.confidence < tau).map(|s| s.id).collect()
        }
        Strategy::PerClusterTopK { k } => {
            if k == 0 {
                return Err(LcgError::param("k_per_cluster", "must be at least 1"));
            }
            let mut order: Vec<&ScoredRecord> = scores.iter().collect();
            order.sort_by(|a, b| {
                a.cluster
                    .cmp(&b.cluster)
                    .then(a.confidence.total_cmp(&b.confidence))
                    .then(a.id.cmp(&b.id))
            });
            let mut out = Vec::new();
            let mut current = None;
            let mut taken = 0;
            for s in order {
                if current != Some(s.cluster) {
                    current = Some(s.cluster);
                    taken = 0;
                }
                if taken < k {
                    out.push(s.id);
                    taken += 1;
                }
            }
            out
        }
    };
    selected.sort_unstable();
    Ok(SelectionResult {
        selected_ids: selected,
        strategy,
        scores,
    })
}

/// Machine-readable summary of a selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub strategy: String,
    pub tau: Option<f64>,
    pub k_per_cluster: Option<usize>,
    pub scored: usize,
    pub selected: usize,
    pub coreset: usize,
    pub include_coreset: bool,
    pub written: usize,
    pub scored_per_cluster: Vec<usize>,
    pub selected_per_cluster: Vec<usize>,
}

impl SelectionResult {
    pub fn manifest(&self, k: usize, coreset_size: usize, include_coreset: bool) -> Manifest {
        let mut scored_per_cluster = vec![0; k];
        let mut selected_per_cluster = vec![0; k];
        let chosen: std::collections::HashSet<usize> = self.selected_ids.iter().copied().collect();
        for s in &self.scores {
            scored_per_cluster[s.cluster] += 1;
            if chosen.contains(&s.id) {
                selected_per_cluster[s.cluster] += 1;
            }
        }
        let (tau, k_per_cluster) = match self.strategy {
            Strategy::GlobalThreshold { tau } => (Some(tau), None),
            Strategy::PerClusterTopK { k } => (None, Some(k)),
        };
        Manifest {
            strategy: self.strategy.name().into(),
            tau,
            k_per_cluster,
            scored: self.scores.len(),
            selected: self.selected_ids.len(),
            coreset: coreset_size,
            include_coreset,
            written: self.selected_ids.len() + if include_coreset { coreset_size } else { 0 },
            scored_per_cluster,
            selected_per_cluster,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ScoreLine {
    id: usize,
    cluster: usize,
    confidence: f64,
    probabilities: Vec<f64>,
}

pub fn write_scores(scores: &[ScoredRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for s in scores {
        let line = ScoreLine {
            id: s.id,
            cluster: s.cluster,
            confidence: s.confidence,
            probabilities: s.probabilities.as_slice().to_vec(),
        };
        out.push_str(&serde_json::to_string(&line).map_err(|e| LcgError::Numeric(e.to_string()))?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| LcgError::io(path, e))
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<ScoredRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| LcgError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| LcgError::Parse {
            path: path.into(),
            line: i + 1,
            reason,
        };
        let l: ScoreLine = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        let p = ProbabilityVector::new(l.probabilities).map_err(|e| parse_err(e.to_string()))?;
        let s = ScoredRecord::new(l.id, l.cluster, p);
        if s.confidence != l.confidence {
            return Err(parse_err("confidence is not the max probability".into()));
        }
        out.push(s);
    }
    Ok(out)
}
