//! Synthetic data with planted structure, for tests, fixtures and the demo.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::Dataset;
use crate::embedding::EmbeddingMatrix;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct Blobs {
    pub points: EmbeddingMatrix,
    /// Ground-truth blob index per point.
    pub labels: Vec<usize>,
}

/// `count` centers in `dim >= count` dimensions with every pair exactly
/// `separation` apart (scaled standard basis vectors).
pub fn equidistant_centers(count: usize, dim: usize, separation: f64) -> Vec<Vec<f64>> {
    assert!(dim >= count, "need dim >= count for equidistant centers");
    let scale = separation / std::f64::consts::SQRT_2;
    (0..count)
        .map(|i| {
            let mut c = vec![0.0; dim];
            c[i] = scale;
            c
        })
        .collect()
}

/// Isotropic Gaussian blobs, `per_blob` points around each center. Points are
/// interleaved (point i belongs to blob i % centers.len()).
pub fn gaussian_blobs(centers: &[Vec<f64>], per_blob: usize, sigma: f64, seed: u64) -> Blobs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("sigma must be finite and non-negative");
    let dim = centers[0].len();
    let mut data = Vec::with_capacity(per_blob * centers.len() * dim);
    let mut labels = Vec::with_capacity(per_blob * centers.len());
    for _ in 0..per_blob {
        for (label, c) in centers.iter().enumerate() {
            data.extend(c.iter().map(|&x| (x + noise.sample(&mut rng)) as f32));
            labels.push(label);
        }
    }
    Blobs {
        points: EmbeddingMatrix::new(data, dim).expect("finite blob data"),
        labels,
    }
}

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ne", "su", "ta", "ri", "po", "ve", "da", "gu", "zo", "ba", "fe", "hi", "ju",
    "ra", "se", "to", "wu", "ny", "qe", "xi", "yo",
];

const SHARED: [&str; 16] = [
    "please", "explain", "write", "describe", "give", "list", "the", "a", "of", "and", "short",
    "simple", "example", "how", "what", "why",
];

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(2..4);
    (0..n).map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())]).collect()
}

/// Instruction corpus with `topics` planted topics. Each topic owns a small
/// vocabulary; every record draws most of its words from one topic, a few
/// shared filler words, and with probability `mix` some words from a second
/// topic, which makes it ambiguous.
pub fn topic_corpus(records: usize, topics: usize, mix: f64, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab: Vec<Vec<String>> = (0..topics)
        .map(|t| (0..30).map(|i| format!("{}{}", pseudo_word(&mut rng), (t * 30 + i) % 7)).collect())
        .collect();
    let mut items = Vec::with_capacity(records);
    for r in 0..records {
        let topic = r % topics;
        let mut words: Vec<&str> = Vec::new();
        for _ in 0..rng.random_range(1..4) {
            words.push(SHARED[rng.random_range(0..SHARED.len())]);
        }
        for _ in 0..rng.random_range(5..10) {
            words.push(&vocab[topic][rng.random_range(0..30)]);
        }
        if rng.random::<f64>() < mix {
            let other = (topic + rng.random_range(1..topics.max(2))) % topics;
            for _ in 0..rng.random_range(2..6) {
                words.push(&vocab[other][rng.random_range(0..30)]);
            }
        }
        let instruction = words.join(" ");
        let input = if rng.random::<f64>() < 0.3 {
            (0..3).map(|_| vocab[topic][rng.random_range(0..30)].as_str()).collect::<Vec<_>>().join(" ")
        } else {
            String::new()
        };
        let output = format!("answer about topic {topic}: {}", vocab[topic][rng.random_range(0..30)]);
        items.push((instruction, input, output));
    }
    Dataset::from_records(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centers_are_equidistant() {
        let c = equidistant_centers(3, 5, 1.0);
        for i in 0..3 {
            for j in i + 1..3 {
                let d: f64 = c[i].iter().zip(&c[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!((d - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn blobs_are_deterministic() {
        let c = equidistant_centers(2, 2, 1.0);
        let a = gaussian_blobs(&c, 10, 0.1, 3);
        let b = gaussian_blobs(&c, 10, 0.1, 3);
        assert_eq!(a.points, b.points);
        assert_eq!(a.labels.len(), 20);
    }

    #[test]
    fn corpus_shape() {
        let ds = topic_corpus(50, 5, 0.2, 1).unwrap();
        assert_eq!(ds.len(), 50);
        assert!(ds.records().iter().all(|r| !r.instruction.trim().is_empty()));
        let again = topic_corpus(50, 5, 0.2, 1).unwrap();
        assert_eq!(ds.source_digest(), again.source_digest());
    }
}
