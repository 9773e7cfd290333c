//! Browser demo: 2-D blobs go through clustering, coreset picking, a small
//! MLP and threshold selection. The `Demo` methods return JSON strings for
//! the page script to draw.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use lcg_core::classifier::{mlp_train, MlpConfig, Scorer};
use lcg_core::clustering::{kmeans_fit, ClusterModel, KMeansParams};
use lcg_core::coreset::{select_coreset, CoreSet, CoresetMode};
use lcg_core::corpus::Dataset;
use lcg_core::embedding::EmbeddingMatrix;
use lcg_core::report::{ConfidenceHistogram, BINS};
use lcg_core::selection::{score_all, select_gold, ScoredRecord, Strategy};
use lcg_core::synth::gaussian_blobs;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterView {
    pub points: Vec<[f32; 2]>,
    pub assignment: Vec<usize>,
    pub centroids: Vec<[f32; 2]>,
    pub coreset: Vec<usize>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionView {
    /// Indexed by point; coreset points have no score.
    pub confidence: Vec<Option<f64>>,
    pub selected: Vec<usize>,
    pub histogram: [usize; BINS],
    pub tau: f64,
    pub epoch_losses: Vec<f64>,
    pub mean_distance_selected: Option<f64>,
    pub mean_distance_unselected: Option<f64>,
}

/// Blob centers evenly spaced on a circle of radius `spread`.
fn circle_centers(count: usize, spread: f64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / count as f64;
            vec![spread * a.cos(), spread * a.sin()]
        })
        .collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[wasm_bindgen]
pub struct Demo {
    points: EmbeddingMatrix,
    clusters: Option<(ClusterModel, CoreSet)>,
    scores: Vec<ScoredRecord>,
    epoch_losses: Vec<f64>,
}

#[wasm_bindgen]
impl Demo {
    /// `blobs` Gaussian blobs of `per_blob` points each.
    #[wasm_bindgen(constructor)]
    pub fn new(blobs: usize, per_blob: usize, sigma: f64, seed: u32) -> Result<Demo, JsError> {
        Demo::generate(blobs, per_blob, sigma, seed as u64).map_err(js)
    }

    /// K-means plus a nearest-fraction coreset. Returns a `ClusterView`.
    pub fn cluster(&mut self, k: usize, fraction: f64, seed: u32) -> Result<String, JsError> {
        self.cluster_view(k, fraction, seed as u64).map(|v| to_json(&v)).map_err(js)
    }

    /// Trains on the coreset, scores the rest and keeps confidence < tau.
    /// Returns a `SelectionView`.
    pub fn train_and_select(&mut self, hidden: usize, lr: f64, tau: f64, seed: u32) -> Result<String, JsError> {
        self.train_view(hidden, lr, tau, seed as u64).map(|v| to_json(&v)).map_err(js)
    }

    /// Re-applies the threshold to the last scores without retraining.
    pub fn reselect(&self, tau: f64) -> Result<String, JsError> {
        self.selection_view(tau).map(|v| to_json(&v)).map_err(js)
    }
}

fn to_json(v: &impl Serialize) -> String {
    serde_json::to_string(v).expect("views serialize")
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

impl Demo {
    pub fn generate(blobs: usize, per_blob: usize, sigma: f64, seed: u64) -> Result<Demo, String> {
        if blobs == 0 || per_blob == 0 || !(sigma >= 0.0 && sigma.is_finite()) {
            return Err("need at least one blob, one point and a finite sigma".into());
        }
        let data = gaussian_blobs(&circle_centers(blobs, 1.0), per_blob, sigma, seed);
        Ok(Demo {
            points: data.points,
            clusters: None,
            scores: Vec::new(),
            epoch_losses: Vec::new(),
        })
    }

    pub fn cluster_view(&mut self, k: usize, fraction: f64, seed: u64) -> Result<ClusterView, String> {
        let model = kmeans_fit(&self.points, &KMeansParams::new(k, seed)).map_err(err)?;
        let core = select_coreset(&model, CoresetMode::NearestFraction(fraction)).map_err(err)?;
        let view = ClusterView {
            points: (0..self.points.rows()).map(|i| [self.points.row(i)[0], self.points.row(i)[1]]).collect(),
            assignment: model.assignment.clone(),
            centroids: (0..k).map(|c| [model.centroid(c)[0], model.centroid(c)[1]]).collect(),
            coreset: core.ids().into_iter().collect(),
            objective: model.objective,
            iterations: model.iterations_run,
        };
        self.clusters = Some((model, core));
        self.scores.clear();
        self.epoch_losses.clear();
        Ok(view)
    }

    pub fn train_view(&mut self, hidden: usize, lr: f64, tau: f64, seed: u64) -> Result<SelectionView, String> {
        let (model, core) = self.clusters.as_ref().ok_or("run cluster first")?;
        let cfg = MlpConfig {
            hidden,
            lr,
            seed,
            ..MlpConfig::default()
        };
        let trained = mlp_train(core, &self.points, model.k, &cfg).map_err(err)?;
        // the MLP reads embedding rows only; record text is never used
        let placeholder = Dataset::from_records((0..self.points.rows()).map(|_| ("point", "", ""))).map_err(err)?;
        let remainder = core.remainder(self.points.rows());
        self.scores = score_all(&Scorer::Mlp(trained.model), &remainder, &self.points, &placeholder, model).map_err(err)?;
        self.epoch_losses = trained.epoch_losses;
        self.selection_view(tau)
    }

    pub fn selection_view(&self, tau: f64) -> Result<SelectionView, String> {
        let (model, _) = self.clusters.as_ref().ok_or("run cluster first")?;
        if self.scores.is_empty() {
            return Err("train first".into());
        }
        let result = select_gold(self.scores.clone(), Strategy::GlobalThreshold { tau }).map_err(err)?;
        let mut confidence = vec![None; self.points.rows()];
        for s in &self.scores {
            confidence[s.id] = Some(s.confidence);
        }
        let chosen: std::collections::HashSet<usize> = result.selected_ids.iter().copied().collect();
        let dist = |pick: bool| {
            mean(self.scores.iter().filter(|s| chosen.contains(&s.id) == pick).map(|s| model.distance[s.id]))
        };
        Ok(SelectionView {
            confidence,
            histogram: ConfidenceHistogram::from_confidences(self.scores.iter().map(|s| s.confidence)).bins,
            tau,
            epoch_losses: self.epoch_losses.clone(),
            mean_distance_selected: dist(true),
            mean_distance_unselected: dist(false),
            selected: result.selected_ids,
        })
    }
}
