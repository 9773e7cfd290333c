//! Low-confidence data selection for instruction-tuning corpora.
//!
//! The pipeline has two steps:
//!
//! 1. Embed every instruction, cluster the embeddings with K-means and keep
//!    the records nearest to each centroid as a pseudo-labeled coreset.
//! 2. Train a small, deliberately under-fit classifier on the coreset, score
//!    every remaining record and keep the ones the classifier is unsure about.
//!
//! Each step lives in its own module; [`pipeline`] wires them together and
//! persists the intermediate artifacts.

pub mod classifier;
pub mod clustering;
pub mod config;
pub mod corpus;
pub mod coreset;
pub mod embedding;
pub mod error;
pub mod par;
pub mod pipeline;
pub mod report;
pub mod selection;
pub mod synth;
pub mod text;

pub use classifier::{MlpModel, NbModel, ProbabilityVector};
pub use clustering::ClusterModel;
pub use config::Config;
pub use corpus::{Dataset, InstructionRecord};
pub use coreset::{CoreSet, CoresetMode};
pub use embedding::EmbeddingMatrix;
pub use error::{ErrorKind, LcgError, Result};
pub use report::ConfidenceHistogram;
pub use selection::{ScoredRecord, SelectionResult, Strategy};
