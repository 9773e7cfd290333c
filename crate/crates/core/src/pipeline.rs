//! End-to-end pipeline. Every stage reads its inputs from, and writes its
//! outputs to, the configured output directory, so running the stages one by
//! one produces exactly the same files as [`run`].
//!
//! ```text
//! embed    -> embeddings.lcge
//! cluster  -> clusters.json, assignment.u32, centroids.bin
//! coreset  -> coreset.jsonl
//! train    -> model.bin, train.json
//! score    -> scores.jsonl
//! select   -> subset.jsonl, selection.json
//! sweep    -> sweep.json            (optional)
//! report   -> report.json
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{mlp_train, nb_train, MlpConfig, Scorer};
use crate::clustering::{
    kmeans_fit, read_assignment, read_centroids, write_assignment, write_centroids, ClusterModel, ClusterReport,
    KMeansParams,
};
use crate::config::{ClassifierKind, Config, Provider};
use crate::corpus::{load_dataset, write_subset, Dataset};
use crate::coreset::{read_coreset_entries, select_coreset, write_coreset, CoreSet};
use crate::embedding::{hashing_embed, l2_normalize, load_embeddings, write_lcge, EmbeddingMatrix};
use crate::error::{LcgError, Result};
use crate::report::{lr_sweep, Report, SweepRow};
use crate::selection::{read_scores, score_all, select_gold, write_scores, Manifest};

pub const EMBEDDINGS: &str = "embeddings.lcge";
pub const CLUSTERS: &str = "clusters.json";
pub const ASSIGNMENT: &str = "assignment.u32";
pub const CENTROIDS: &str = "centroids.bin";
pub const CORESET: &str = "coreset.jsonl";
pub const MODEL: &str = "model.bin";
pub const TRAIN_LOG: &str = "train.json";
pub const SCORES: &str = "scores.jsonl";
pub const SUBSET: &str = "subset.jsonl";
pub const SELECTION: &str = "selection.json";
pub const SWEEP: &str = "sweep.json";
pub const REPORT: &str = "report.json";
pub const INCOMPLETE: &str = "INCOMPLETE";

const ARTIFACTS: &[&str] = &[
    EMBEDDINGS, CLUSTERS, ASSIGNMENT, CENTROIDS, CORESET, MODEL, TRAIN_LOG, SCORES, SUBSET, SELECTION, SWEEP, REPORT,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Embed,
    Cluster,
    Coreset,
    Train,
    Score,
    Select,
    Sweep,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Embed => "embed",
            Stage::Cluster => "cluster",
            Stage::Coreset => "coreset",
            Stage::Train => "train",
            Stage::Score => "score",
            Stage::Select => "select",
            Stage::Sweep => "sweep",
            Stage::Report => "report",
        }
    }
}

/// Runs one stage, attaching the stage name to any error.
pub fn run_stage(stage: Stage, config: &Config) -> Result<()> {
    let ws = Workspace::open(config).map_err(|e| e.in_stage(stage.name()))?;
    let result = match stage {
        Stage::Embed => ws.embed(),
        Stage::Cluster => ws.cluster(),
        Stage::Coreset => ws.coreset(),
        Stage::Train => ws.train(),
        Stage::Score => ws.score(),
        Stage::Select => ws.select(),
        Stage::Sweep => ws.sweep(),
        Stage::Report => ws.report(),
    };
    result.map_err(|e| e.in_stage(stage.name()))
}

/// Summary returned by [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub records: usize,
    pub coreset: usize,
    pub scored: usize,
    pub selected: usize,
    pub out_dir: PathBuf,
}

/// Full pipeline. Stale artifacts are removed first; on failure an
/// `INCOMPLETE` marker naming the failed stage is left in the output directory.
pub fn run(config: &Config) -> Result<RunSummary> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir).map_err(|e| LcgError::io(&config.out_dir, e))?;
    for name in ARTIFACTS.iter().chain([&INCOMPLETE]) {
        let p = config.out_dir.join(name);
        if p.exists() {
            fs::remove_file(&p).map_err(|e| LcgError::io(&p, e))?;
        }
    }
    let marker = config.out_dir.join(INCOMPLETE);
    fs::write(&marker, "running\n").map_err(|e| LcgError::io(&marker, e))?;

    let mut stages = vec![Stage::Embed, Stage::Cluster, Stage::Coreset, Stage::Train, Stage::Score, Stage::Select];
    if config.sweep {
        stages.push(Stage::Sweep);
    }
    stages.push(Stage::Report);
    for stage in stages {
        if let Err(e) = run_stage(stage, config) {
            let _ = fs::write(&marker, format!("{}\n", e));
            return Err(e);
        }
    }
    fs::remove_file(&marker).map_err(|e| LcgError::io(&marker, e))?;

    let ws = Workspace::open(config)?;
    let manifest: Manifest = ws.read_json(SELECTION)?;
    Ok(RunSummary {
        records: ws.dataset.len(),
        coreset: manifest.coreset,
        scored: manifest.scored,
        selected: manifest.selected,
        out_dir: config.out_dir.clone(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrainLog {
    classifier: String,
    epochs_trained: usize,
    epoch_losses: Vec<f64>,
    coreset: usize,
}

struct Workspace<'a> {
    config: &'a Config,
    dataset: Dataset,
}

impl<'a> Workspace<'a> {
    fn open(config: &'a Config) -> Result<Self> {
        config.validate()?;
        fs::create_dir_all(&config.out_dir).map_err(|e| LcgError::io(&config.out_dir, e))?;
        let path = config.dataset.as_ref().expect("validated");
        let dataset = load_dataset(path, config.format)?;
        Ok(Workspace { config, dataset })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.config.out_dir.join(name)
    }

    fn require(&self, name: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if p.exists() {
            Ok(p)
        } else {
            Err(LcgError::Data(format!("{} not found; run the earlier stages first", p.display())))
        }
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| LcgError::Numeric(e.to_string()))?;
        text.push('\n');
        fs::write(&p, text).map_err(|e| LcgError::io(&p, e))
    }

    fn read_json<T: for<'de> Deserialize<'de>>(&self, name: &str) -> Result<T> {
        let p = self.require(name)?;
        let text = fs::read_to_string(&p).map_err(|e| LcgError::io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| LcgError::Format {
            path: p,
            reason: e.to_string(),
        })
    }

    fn normalized_embeddings(&self) -> Result<EmbeddingMatrix> {
        let raw = load_embeddings(self.require(EMBEDDINGS)?, &self.dataset)?;
        l2_normalize(&raw)
    }

    fn clusters(&self, embeddings: &EmbeddingMatrix) -> Result<ClusterModel> {
        let report: ClusterReport = self.read_json(CLUSTERS)?;
        let (k, dim, centroids) = read_centroids(self.require(CENTROIDS)?)?;
        if k != report.k || dim != embeddings.dim() {
            return Err(LcgError::Data("centroid file does not match clusters.json or embeddings".into()));
        }
        let model = ClusterModel::from_centroids(
            embeddings,
            centroids,
            k,
            report.seed,
            report.iterations_run,
            report.objective_history,
        )?;
        if read_assignment(self.require(ASSIGNMENT)?)? != model.assignment {
            return Err(LcgError::Data("assignment file does not match the stored centroids".into()));
        }
        Ok(model)
    }

    fn coreset_set(&self, k: usize) -> Result<CoreSet> {
        let entries = read_coreset_entries(self.require(CORESET)?)?;
        Ok(CoreSet {
            entries,
            mode: self.config.coreset()?,
            gamma_per_cluster: None,
            k,
        })
    }

    fn mlp_config(&self) -> MlpConfig {
        MlpConfig {
            hidden: self.config.hidden,
            lr: self.config.lr,
            epochs: self.config.epochs,
            batch_size: self.config.batch,
            seed: self.config.seed,
        }
    }

    fn embed(&self) -> Result<()> {
        let matrix = match self.config.provider {
            Provider::Hashing => hashing_embed(&self.dataset, self.config.dim)?,
            Provider::Lcge => {
                let p = self.config.embeddings_path.as_ref().expect("validated");
                if !p.exists() {
                    return Err(LcgError::Data(format!("embeddings file {} does not exist", p.display())));
                }
                load_embeddings(p, &self.dataset)?
            }
        };
        write_lcge(&matrix, self.dataset.source_digest(), self.path(EMBEDDINGS))
    }

    fn cluster(&self) -> Result<()> {
        let embeddings = self.normalized_embeddings()?;
        let params = KMeansParams {
            max_iter: self.config.max_iter,
            tol: self.config.tol,
            ..KMeansParams::new(self.config.k, self.config.seed)
        };
        let model = kmeans_fit(&embeddings, &params)?;
        self.write_json(CLUSTERS, &model.report())?;
        write_assignment(&model.assignment, self.path(ASSIGNMENT))?;
        write_centroids(&model, self.path(CENTROIDS))
    }

    fn coreset(&self) -> Result<()> {
        let embeddings = self.normalized_embeddings()?;
        let model = self.clusters(&embeddings)?;
        let coreset = select_coreset(&model, self.config.coreset()?)?;
        write_coreset(&coreset, self.path(CORESET))
    }

    fn train(&self) -> Result<()> {
        let embeddings = self.normalized_embeddings()?;
        let k = self.read_json::<ClusterReport>(CLUSTERS)?.k;
        let coreset = self.coreset_set(k)?;
        let (scorer, log) = match self.config.classifier {
            ClassifierKind::Mlp => {
                let outcome = mlp_train(&coreset, &embeddings, k, &self.mlp_config())?;
                let log = TrainLog {
                    classifier: "mlp".into(),
                    epochs_trained: outcome.model.epochs_trained,
                    epoch_losses: outcome.epoch_losses,
                    coreset: coreset.len(),
                };
                (Scorer::Mlp(outcome.model), log)
            }
            ClassifierKind::Mnb => {
                let model = nb_train(&coreset, &self.dataset, k, self.config.alpha)?;
                let log = TrainLog {
                    classifier: "mnb".into(),
                    epochs_trained: 1,
                    epoch_losses: vec![],
                    coreset: coreset.len(),
                };
                (Scorer::Nb(model), log)
            }
        };
        scorer.save(self.path(MODEL))?;
        self.write_json(TRAIN_LOG, &log)
    }

    fn score(&self) -> Result<()> {
        let embeddings = self.normalized_embeddings()?;
        let clusters = self.clusters(&embeddings)?;
        let coreset = self.coreset_set(clusters.k)?;
        let scorer = Scorer::load(self.require(MODEL)?)?;
        if scorer.classes() != clusters.k {
            return Err(LcgError::Data(format!(
                "model has {} classes but clustering has k={}",
                scorer.classes(),
                clusters.k
            )));
        }
        let remainder = coreset.remainder(self.dataset.len());
        let scores = score_all(&scorer, &remainder, &embeddings, &self.dataset, &clusters)?;
        write_scores(&scores, self.path(SCORES))
    }

    fn select(&self) -> Result<()> {
        let k = self.read_json::<ClusterReport>(CLUSTERS)?.k;
        let coreset = self.coreset_set(k)?;
        let scores = read_scores(self.require(SCORES)?)?;
        let core_ids = coreset.ids();
        if let Some(s) = scores.iter().find(|s| core_ids.contains(&s.id)) {
            return Err(LcgError::Data(format!("record {} is both scored and in the coreset", s.id)));
        }
        let result = select_gold(scores, self.config.selection_strategy()?)?;
        let mut ids: BTreeSet<usize> = result.selected_ids.iter().copied().collect();
        if self.config.include_coreset {
            ids.extend(&core_ids);
        }
        write_subset(&self.dataset, &ids, self.path(SUBSET))?;
        self.write_json(SELECTION, &result.manifest(k, coreset.len(), self.config.include_coreset))
    }

    fn sweep(&self) -> Result<()> {
        let embeddings = self.normalized_embeddings()?;
        let k = self.read_json::<ClusterReport>(CLUSTERS)?.k;
        let coreset = self.coreset_set(k)?;
        let remainder = coreset.remainder(self.dataset.len());
        let rows = lr_sweep(&coreset, &embeddings, &remainder, &self.config.sweep_lrs, &self.mlp_config())?;
        self.write_json(SWEEP, &rows)
    }

    fn report(&self) -> Result<()> {
        let scores = read_scores(self.require(SCORES)?)?;
        let manifest: Manifest = self.read_json(SELECTION)?;
        let sweep: Vec<SweepRow> = if self.path(SWEEP).exists() { self.read_json(SWEEP)? } else { Vec::new() };
        let report = Report::new(&scores, sweep, manifest);
        let p = self.path(REPORT);
        fs::write(&p, report.to_json()).map_err(|e| LcgError::io(&p, e))
    }
}

/// Loads the report written by a finished run.
pub fn load_report(out_dir: &Path) -> Result<Report> {
    let p = out_dir.join(REPORT);
    let text = fs::read_to_string(&p).map_err(|e| LcgError::io(&p, e))?;
    serde_json::from_str(&text).map_err(|e| LcgError::Format {
        path: p,
        reason: e.to_string(),
    })
}
