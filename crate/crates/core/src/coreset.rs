//! Centroid-proximal coreset selection.
//!
//! Two modes:
//! - `NearestFraction(f)`: per cluster keep the `max(1, floor(f * n_k))`
//!   records closest to the centroid.
//! - `DistancePercentile(p)`: per cluster compute the nearest-rank p-th
//!   percentile distance `gamma_k` and keep records strictly closer than it.
//!
//! Both modes keep at least one record per cluster.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterModel;
use crate::error::{LcgError, Result};

pub const DEFAULT_FRACTION: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoresetMode {
    NearestFraction(f64),
    DistancePercentile(f64),
}

impl CoresetMode {
    pub fn from_name(name: &str, parameter: f64) -> Result<Self> {
        let mode = match name {
            "nearest_fraction" => CoresetMode::NearestFraction(parameter),
            "distance_percentile" => CoresetMode::DistancePercentile(parameter),
            other => {
                return Err(LcgError::param(
                    "coreset_mode",
                    format!("unknown mode {other:?} (expected nearest_fraction or distance_percentile)"),
                ))
            }
        };
        mode.validate()?;
        Ok(mode)
    }

    pub fn name(&self) -> &'static str {
        match self {
            CoresetMode::NearestFraction(_) => "nearest_fraction",
            CoresetMode::DistancePercentile(_) => "distance_percentile",
        }
    }

    pub fn parameter(&self) -> f64 {
        match *self {
            CoresetMode::NearestFraction(f) | CoresetMode::DistancePercentile(f) => f,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            CoresetMode::NearestFraction(f) if !(f > 0.0 && f <= 1.0) => {
                Err(LcgError::param("coreset_param", format!("fraction must be in (0, 1], got {f}")))
            }
            CoresetMode::DistancePercentile(p) if !(p > 0.0 && p <= 100.0) => Err(LcgError::param(
                "coreset_param",
                format!("percentile must be in (0, 100], got {p}"),
            )),
            _ => Ok(()),
        }
    }
}

impl FromStr for CoresetMode {
    type Err = LcgError;

    /// Parses `name` or `name:parameter`; a bare name uses the default parameter.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some((name, p)) => {
                let p: f64 = p
                    .parse()
                    .map_err(|_| LcgError::param("coreset_param", format!("not a number: {p:?}")))?;
                CoresetMode::from_name(name, p)
            }
            None if s == "distance_percentile" => CoresetMode::from_name(s, 90.0),
            None => CoresetMode::from_name(s, DEFAULT_FRACTION),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoresetEntry {
    pub id: usize,
    pub pseudo_label: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoreSet {
    /// Ordered by (cluster, id).
    pub entries: Vec<CoresetEntry>,
    pub mode: CoresetMode,
    /// Per-cluster thresholds, only in percentile mode.
    pub gamma_per_cluster: Option<Vec<f64>>,
    pub k: usize,
}

impl CoreSet {
    pub fn ids(&self) -> BTreeSet<usize> {
        self.entries.iter().map(|e| e.id).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Ids of all records in `0..n` that are not in the coreset, ascending.
    pub fn remainder(&self, n: usize) -> Vec<usize> {
        let core = self.ids();
        (0..n).filter(|i| !core.contains(i)).collect()
    }
}

/// Floor of `f * n`, tolerant to the product landing a hair below an integer
/// (e.g. 0.03 * 100).
fn fraction_count(f: f64, n: usize) -> usize {
    let x = f * n as f64;
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as usize
    } else {
        x.floor() as usize
    }
}

/// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value.
pub fn nearest_rank_percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p / 100.0 * n as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

pub fn select_coreset(model: &ClusterModel, mode: CoresetMode) -> Result<CoreSet> {
    mode.validate()?;
    let mut entries = Vec::new();
    let mut gammas = Vec::new();

    for (cluster, members) in model.members().into_iter().enumerate() {
        if members.is_empty() {
            return Err(LcgError::Data(format!("cluster {cluster} has no members")));
        }
        let mut by_distance = members.clone();
        by_distance.sort_by(|&a, &b| model.distance[a].total_cmp(&model.distance[b]).then(a.cmp(&b)));

        let mut chosen: Vec<usize> = match mode {
            CoresetMode::NearestFraction(f) => {
                let take = fraction_count(f, members.len()).max(1);
                by_distance[..take].to_vec()
            }
            CoresetMode::DistancePercentile(p) => {
                let sorted: Vec<f64> = by_distance.iter().map(|&i| model.distance[i]).collect();
                let gamma = nearest_rank_percentile(&sorted, p);
                gammas.push(gamma);
                let below: Vec<usize> = by_distance
                    .iter()
                    .copied()
                    .filter(|&i| model.distance[i] < gamma)
                    .collect();
                if below.is_empty() {
                    vec![by_distance[0]]
                } else {
                    below
                }
            }
        };
        chosen.sort_unstable();
        entries.extend(chosen.into_iter().map(|id| CoresetEntry {
            id,
            pseudo_label: cluster,
            distance: model.distance[id],
        }));
    }

    Ok(CoreSet {
        entries,
        mode,
        gamma_per_cluster: matches!(mode, CoresetMode::DistancePercentile(_)).then_some(gammas),
        k: model.k,
    })
}

pub fn write_coreset(coreset: &CoreSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for e in &coreset.entries {
        out.push_str(&serde_json::to_string(e).expect("plain struct serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| LcgError::io(path, e))
}

pub fn read_coreset_entries(path: impl AsRef<Path>) -> Result<Vec<CoresetEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| LcgError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| LcgError::Parse {
                path: path.into(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}
