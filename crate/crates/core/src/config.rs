//! Pipeline configuration.
//!
//! The file format is plain `key = value` lines. `#` starts a comment and
//! `[section]` headers are accepted for grouping but do not namespace keys.
//! Every key can also be set from the command line with `--key value`.

use std::path::PathBuf;

use crate::classifier::{DEFAULT_ALPHA, DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS, DEFAULT_HIDDEN, DEFAULT_LR, MAX_EPOCHS};
use crate::clustering::{DEFAULT_K, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::corpus::Format;
use crate::coreset::{CoresetMode, DEFAULT_FRACTION};
use crate::embedding::DEFAULT_DIM;
use crate::error::{LcgError, Result};
use crate::report::DEFAULT_SWEEP_LRS;
use crate::selection::{Strategy, DEFAULT_TAU};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provider {
    Lcge,
    Hashing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    Mlp,
    Mnb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub dataset: Option<PathBuf>,
    pub format: Format,
    pub provider: Provider,
    pub embeddings_path: Option<PathBuf>,
    pub dim: usize,
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub coreset_mode: String,
    /// `None` picks the mode's default (0.03 or the 90th percentile).
    pub coreset_param: Option<f64>,
    pub classifier: ClassifierKind,
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub alpha: f64,
    pub strategy: String,
    pub tau: f64,
    pub k_per_cluster: Option<usize>,
    pub include_coreset: bool,
    pub sweep: bool,
    pub sweep_lrs: Vec<f64>,
    pub out_dir: PathBuf,
    /// 0 = one worker per core.
    pub threads: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            dataset: None,
            format: Format::Jsonl,
            provider: Provider::Hashing,
            embeddings_path: None,
            dim: DEFAULT_DIM,
            k: DEFAULT_K,
            seed: 0,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            coreset_mode: "nearest_fraction".into(),
            coreset_param: None,
            classifier: ClassifierKind::Mlp,
            hidden: DEFAULT_HIDDEN,
            lr: DEFAULT_LR,
            epochs: DEFAULT_EPOCHS,
            batch: DEFAULT_BATCH_SIZE,
            alpha: DEFAULT_ALPHA,
            strategy: "threshold".into(),
            tau: DEFAULT_TAU,
            k_per_cluster: None,
            include_coreset: false,
            sweep: false,
            sweep_lrs: DEFAULT_SWEEP_LRS.to_vec(),
            out_dir: PathBuf::from("lcg-out"),
            threads: 0,
        }
    }
}

pub const KEYS: &[&str] = &[
    "dataset",
    "format",
    "provider",
    "embeddings_path",
    "dim",
    "k",
    "seed",
    "max_iter",
    "tol",
    "coreset_mode",
    "coreset_param",
    "classifier",
    "hidden",
    "lr",
    "epochs",
    "batch",
    "alpha",
    "strategy",
    "tau",
    "k_per_cluster",
    "include_coreset",
    "sweep",
    "sweep_lrs",
    "out_dir",
    "threads",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| LcgError::Config(format!("{key}: cannot parse {value:?}")))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(LcgError::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

impl Config {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "dataset" => self.dataset = Some(value.into()),
            "format" => self.format = value.parse().map_err(|e: LcgError| LcgError::Config(e.to_string()))?,
            "provider" => {
                self.provider = match value {
                    "lcge" => Provider::Lcge,
                    "hashing" => Provider::Hashing,
                    _ => return Err(LcgError::Config(format!("provider: expected lcge or hashing, got {value:?}"))),
                }
            }
            "embeddings_path" => self.embeddings_path = Some(value.into()),
            "dim" => self.dim = num(key, value)?,
            "k" => self.k = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "max_iter" => self.max_iter = num(key, value)?,
            "tol" => self.tol = num(key, value)?,
            "coreset_mode" => self.coreset_mode = value.into(),
            "coreset_param" => self.coreset_param = Some(num(key, value)?),
            "classifier" => {
                self.classifier = match value {
                    "mlp" => ClassifierKind::Mlp,
                    "mnb" | "nb" => ClassifierKind::Mnb,
                    _ => return Err(LcgError::Config(format!("classifier: expected mlp or mnb, got {value:?}"))),
                }
            }
            "hidden" => self.hidden = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "batch" => self.batch = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "strategy" => self.strategy = value.into(),
            "tau" => self.tau = num(key, value)?,
            "k_per_cluster" => self.k_per_cluster = Some(num(key, value)?),
            "include_coreset" => self.include_coreset = boolean(key, value)?,
            "sweep" => self.sweep = boolean(key, value)?,
            "sweep_lrs" => {
                self.sweep_lrs = value
                    .split(',')
                    .map(|v| num(key, v.trim()))
                    .collect::<Result<Vec<f64>>>()?
            }
            "out_dir" => self.out_dir = value.into(),
            "threads" => self.threads = num(key, value)?,
            _ => return Err(LcgError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| LcgError::Config(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| LcgError::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Config::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn coreset(&self) -> Result<CoresetMode> {
        let default = if self.coreset_mode == "distance_percentile" { 90.0 } else { DEFAULT_FRACTION };
        CoresetMode::from_name(&self.coreset_mode, self.coreset_param.unwrap_or(default))
    }

    pub fn selection_strategy(&self) -> Result<Strategy> {
        match self.strategy.as_str() {
            "threshold" => Ok(Strategy::GlobalThreshold { tau: self.tau }),
            "topk" => self
                .k_per_cluster
                .map(|k| Strategy::PerClusterTopK { k })
                .ok_or_else(|| LcgError::Config("strategy=topk requires k_per_cluster".into())),
            other => Err(LcgError::Config(format!("strategy: expected threshold or topk, got {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.is_none() {
            return Err(LcgError::Config("dataset is required".into()));
        }
        if self.provider == Provider::Lcge && self.embeddings_path.is_none() {
            return Err(LcgError::Config("provider=lcge requires embeddings_path".into()));
        }
        if self.k == 0 {
            return Err(LcgError::Config("k must be positive".into()));
        }
        if self.dim < 2 {
            return Err(LcgError::Config("dim must be at least 2".into()));
        }
        if self.epochs == 0 || self.epochs > MAX_EPOCHS {
            return Err(LcgError::Config(format!("epochs must be between 1 and {MAX_EPOCHS}")));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(LcgError::Config("lr must be positive".into()));
        }
        if self.hidden == 0 || self.batch == 0 {
            return Err(LcgError::Config("hidden and batch must be positive".into()));
        }
        self.coreset()?;
        self.selection_strategy()?;
        Ok(())
    }

    /// Renders the effective configuration in the file format.
    pub fn to_text(&self) -> String {
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut lines = vec![
            format!("dataset = {}", opt(&self.dataset)),
            format!("format = {}", if self.format == Format::Jsonl { "jsonl" } else { "json-array" }),
            format!("provider = {}", if self.provider == Provider::Lcge { "lcge" } else { "hashing" }),
        ];
        if self.embeddings_path.is_some() {
            lines.push(format!("embeddings_path = {}", opt(&self.embeddings_path)));
        }
        lines.extend([
            format!("dim = {}", self.dim),
            format!("k = {}", self.k),
            format!("seed = {}", self.seed),
            format!("max_iter = {}", self.max_iter),
            format!("tol = {}", self.tol),
            format!("coreset_mode = {}", self.coreset_mode),
        ]);
        if let Some(p) = self.coreset_param {
            lines.push(format!("coreset_param = {p}"));
        }
        lines.extend([
            format!("classifier = {}", if self.classifier == ClassifierKind::Mlp { "mlp" } else { "mnb" }),
            format!("hidden = {}", self.hidden),
            format!("lr = {}", self.lr),
            format!("epochs = {}", self.epochs),
            format!("batch = {}", self.batch),
            format!("alpha = {}", self.alpha),
            format!("strategy = {}", self.strategy),
            format!("tau = {}", self.tau),
        ]);
        if let Some(k) = self.k_per_cluster {
            lines.push(format!("k_per_cluster = {k}"));
        }
        lines.extend([
            format!("include_coreset = {}", self.include_coreset),
            format!("sweep = {}", self.sweep),
            format!(
                "sweep_lrs = {}",
                self.sweep_lrs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
            ),
            format!("out_dir = {}", self.out_dir.display()),
        ]);
        lines.join("\n") + "\n"
    }
}
