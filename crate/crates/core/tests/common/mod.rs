//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use lcg_core::embedding::EmbeddingMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WORDS: [&str; 20] = [
    "red", "green", "blue", "cat", "dog", "fish", "run", "jump", "swim", "one", "two", "three", "sun",
    "moon", "star", "tree", "rock", "sand", "wind", "fire",
];

/// A labeled toy corpus of space-separated lowercase words.
pub struct ToyCorpus {
    pub docs: Vec<(String, usize)>,
    pub classes: usize,
    pub queries: Vec<String>,
}

pub fn toy_corpus(seed: u64) -> ToyCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = rng.random_range(2..5);
    let vocab = rng.random_range(classes.max(3)..=WORDS.len());
    let n_docs = rng.random_range(classes..=30);
    let docs = (0..n_docs)
        .map(|i| {
            let label = if i < classes { i } else { rng.random_range(0..classes) };
            let len = rng.random_range(1..8);
            let text: Vec<&str> = (0..len).map(|_| WORDS[rng.random_range(0..vocab)]).collect();
            (text.join(" "), label)
        })
        .collect();
    let queries = (0..5)
        .map(|_| {
            let len = rng.random_range(0..6);
            (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
        })
        .collect();
    ToyCorpus { docs, classes, queries }
}

/// Bayes rule evaluated directly with products of smoothed frequencies.
pub fn brute_force_posterior(corpus: &ToyCorpus, alpha: f64, query: &str) -> Vec<f64> {
    let mut vocab: Vec<&str> = corpus.docs.iter().flat_map(|(d, _)| d.split_whitespace()).collect();
    vocab.sort();
    vocab.dedup();
    let v = vocab.len() as f64;
    let total_docs = corpus.docs.len() as f64;
    let mut joint = Vec::new();
    for c in 0..corpus.classes {
        let class_docs: Vec<&str> = corpus.docs.iter().filter(|(_, l)| *l == c).map(|(d, _)| d.as_str()).collect();
        let prior = class_docs.len() as f64 / total_docs;
        let class_tokens: Vec<&str> = class_docs.iter().flat_map(|d| d.split_whitespace()).collect();
        let mut p = prior;
        for w in query.split_whitespace() {
            if !vocab.contains(&w) {
                continue;
            }
            let count = class_tokens.iter().filter(|&&t| t == w).count() as f64;
            p *= (count + alpha) / (class_tokens.len() as f64 + alpha * v);
        }
        joint.push(p);
    }
    let z: f64 = joint.iter().sum();
    joint.into_iter().map(|p| p / z).collect()
}

/// Fraction of points whose label agrees with the truth under the best
/// relabeling (all permutations of `k` labels).
pub fn agreement_up_to_permutation(found: &[usize], truth: &[usize], k: usize) -> f64 {
    fn permutations(k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(k - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                out.push(q);
            }
        }
        out
    }
    permutations(k)
        .iter()
        .map(|perm| found.iter().zip(truth).filter(|(&f, &t)| perm[f] == t).count())
        .max()
        .unwrap() as f64
        / truth.len() as f64
}

/// Per-group mean by a plain nested loop, in f64.
pub fn naive_group_means(m: &EmbeddingMatrix, assignment: &[usize], k: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for c in 0..k {
        let mut mean = vec![0.0; m.dim()];
        let mut n = 0.0;
        for i in 0..m.rows() {
            if assignment[i] == c {
                n += 1.0;
                for j in 0..m.dim() {
                    mean[j] += m.row(i)[j] as f64;
                }
            }
        }
        out.push(mean.into_iter().map(|s| s / n).collect());
    }
    out
}

pub fn random_matrix(rows: usize, dim: usize, seed: u64) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    EmbeddingMatrix::new(data, dim).unwrap()
}

pub fn fixture_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic_2000.jsonl")
}
