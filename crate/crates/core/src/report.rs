//! Confidence histograms, learning-rate sweeps and the run report.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{mlp_train_examples, MlpConfig};
use crate::coreset::CoreSet;
use crate::embedding::EmbeddingMatrix;
use crate::error::{LcgError, Result};
use crate::par;
use crate::selection::{Manifest, ScoredRecord};

pub const BINS: usize = 10;
pub const DEFAULT_SWEEP_LRS: [f64; 3] = [1e-4, 1e-5, 1e-6];

/// Counts over `[0,0.1), [0.1,0.2), ..., [0.9,1.0]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfidenceHistogram {
    pub bins: [usize; BINS],
    pub total: usize,
}

impl ConfidenceHistogram {
    pub fn from_confidences(confidences: impl IntoIterator<Item = f64>) -> Self {
        let mut h = ConfidenceHistogram::default();
        for c in confidences {
            h.bins[bin_index(c)] += 1;
            h.total += 1;
        }
        h
    }

    /// One bar per bin, scaled to `width` characters.
    pub fn render(&self, width: usize) -> String {
        let max = self.bins.iter().copied().max().unwrap_or(0).max(1);
        let mut out = String::new();
        for (i, &n) in self.bins.iter().enumerate() {
            let bar = "#".repeat(n * width / max);
            let close = if i == BINS - 1 { ']' } else { ')' };
            let _ = writeln!(out, "[{:.1}, {:.1}{close} {bar:<width$} {n}", i as f64 / 10.0, (i + 1) as f64 / 10.0);
        }
        out
    }
}

pub fn bin_index(confidence: f64) -> usize {
    ((confidence * BINS as f64).floor().max(0.0) as usize).min(BINS - 1)
}

pub fn build_histogram(scores: &[ScoredRecord]) -> ConfidenceHistogram {
    ConfidenceHistogram::from_confidences(scores.iter().map(|s| s.confidence))
}

/// `(train, held_out)`, each a list of `(id, label)` pairs.
pub type Split = (Vec<(usize, usize)>, Vec<(usize, usize)>);

/// Per-class 80/20 split of the coreset.
pub fn stratified_split(coreset: &CoreSet, seed: u64) -> Result<Split> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); coreset.k];
    for e in &coreset.entries {
        by_class[e.pseudo_label].push(e.id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut held_out) = (Vec::new(), Vec::new());
    for (class, mut ids) in by_class.into_iter().enumerate() {
        if ids.len() < 2 {
            return Err(LcgError::Data(format!(
                "class {class} has {} coreset entries; a stratified split needs at least 2",
                ids.len()
            )));
        }
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let n_train = ((ids.len() as f64 * 0.8).round() as usize).clamp(1, ids.len() - 1);
        train.extend(ids[..n_train].iter().map(|&id| (id, class)));
        held_out.extend(ids[n_train..].iter().map(|&id| (id, class)));
    }
    Ok((train, held_out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lr: f64,
    pub accuracy: f64,
    pub histogram: [usize; BINS],
    pub train_size: usize,
    pub held_out_size: usize,
}

/// Trains one MLP per learning rate on the same stratified split and reports
/// held-out pseudo-label accuracy plus the confidence histogram over
/// `remainder`.
pub fn lr_sweep(
    coreset: &CoreSet,
    embeddings: &EmbeddingMatrix,
    remainder: &[usize],
    lrs: &[f64],
    base: &MlpConfig,
) -> Result<Vec<SweepRow>> {
    let (train, held_out) = stratified_split(coreset, base.seed)?;
    let mut rows = Vec::with_capacity(lrs.len());
    for &lr in lrs {
        let cfg = MlpConfig { lr, ..*base };
        let model = mlp_train_examples(embeddings, &train, coreset.k, &cfg)?.model;
        let mut correct = 0;
        for &(id, label) in &held_out {
            if model.forward(embeddings.row(id))?.argmax() == label {
                correct += 1;
            }
        }
        let confidences = par::map_range(remainder.len(), |i| {
            model.forward(embeddings.row(remainder[i])).map(|p| p.confidence())
        });
        let confidences = confidences.into_iter().collect::<Result<Vec<f64>>>()?;
        rows.push(SweepRow {
            lr,
            accuracy: correct as f64 / held_out.len() as f64,
            histogram: ConfidenceHistogram::from_confidences(confidences).bins,
            train_size: train.len(),
            held_out_size: held_out.len(),
        });
    }
    Ok(rows)
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub histogram: [usize; BINS],
    pub total: usize,
    pub sweep: Vec<SweepRow>,
    pub selection: Manifest,
}

impl Report {
    pub fn new(scores: &[ScoredRecord], sweep: Vec<SweepRow>, selection: Manifest) -> Self {
        let h = build_histogram(scores);
        Report {
            histogram: h.bins,
            total: h.total,
            sweep,
            selection,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coreset::{CoresetEntry, CoresetMode};

    #[test]
    fn empty_histogram() {
        let h = build_histogram(&[]);
        assert_eq!(h.bins, [0; 10]);
        assert_eq!(h.total, 0);
    }

    #[test]
    fn direct_binning() {
        let h = ConfidenceHistogram::from_confidences([0.05, 0.15, 0.95, 1.0]);
        assert_eq!(h.bins, [1, 1, 0, 0, 0, 0, 0, 0, 0, 2]);
        assert_eq!(h.total, 4);
    }

    #[test]
    fn boundaries() {
        assert_eq!(bin_index(0.0), 0);
        assert_eq!(bin_index(0.0999), 0);
        assert_eq!(bin_index(0.1), 1);
        assert_eq!(bin_index(1.0), 9);
    }

    #[test]
    fn render_has_ten_rows() {
        let text = ConfidenceHistogram::from_confidences([0.3, 0.35, 0.99]).render(20);
        assert_eq!(text.lines().count(), 10);
        assert!(text.lines().last().unwrap().starts_with("[0.9, 1.0]"));
    }

    fn coreset(sizes: &[usize]) -> CoreSet {
        let mut entries = Vec::new();
        let mut id = 0;
        for (label, &n) in sizes.iter().enumerate() {
            for _ in 0..n {
                entries.push(CoresetEntry {
                    id,
                    pseudo_label: label,
                    distance: 0.0,
                });
                id += 1;
            }
        }
        CoreSet {
            entries,
            mode: CoresetMode::NearestFraction(0.03),
            gamma_per_cluster: None,
            k: sizes.len(),
        }
    }

    #[test]
    fn stratified_proportions() {
        let sizes = [2, 5, 10, 13, 31];
        let (train, held) = stratified_split(&coreset(&sizes), 4).unwrap();
        for (class, &n) in sizes.iter().enumerate() {
            let t = train.iter().filter(|(_, l)| *l == class).count();
            let h = held.iter().filter(|(_, l)| *l == class).count();
            assert_eq!(t + h, n);
            assert!((t as f64 - 0.8 * n as f64).abs() <= 1.0, "class {class}: {t}/{n}");
            assert!(h >= 1);
        }
        assert_eq!(stratified_split(&coreset(&sizes), 4).unwrap().0, train);
    }

    #[test]
    fn split_needs_two_per_class() {
        assert!(stratified_split(&coreset(&[3, 1]), 0).is_err());
    }
}
