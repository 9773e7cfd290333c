//! Confidence scorers trained on the pseudo-labeled coreset.
//!
//! [`MlpModel`] is a one-hidden-layer GELU network over embeddings;
//! [`NbModel`] is multinomial naive Bayes over token counts. Both produce a
//! [`ProbabilityVector`] per record.

mod mlp;
mod nb;

use std::fs;
use std::path::Path;

pub use mlp::{
    mlp_train, mlp_train_examples, MlpConfig, MlpModel, MlpParams, TrainOutcome, DEFAULT_BATCH_SIZE,
    DEFAULT_EPOCHS, DEFAULT_HIDDEN, DEFAULT_LR, MAX_EPOCHS,
};
pub use nb::{nb_predict, nb_train, nb_train_texts, NbModel, DEFAULT_ALPHA};

use crate::error::{LcgError, Result};

/// Exact GELU: `x * Phi(x)` with the standard normal CDF written through erf.
pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

pub fn gelu_derivative(x: f64) -> f64 {
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    normal_cdf(x) + x * pdf
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    /// Wraps `p` after checking it lies on the simplex (within 1e-6).
    pub fn new(p: Vec<f64>) -> Result<Self> {
        let sum: f64 = p.iter().sum();
        if p.is_empty() || p.iter().any(|v| !(0.0..=1.0).contains(v)) || (sum - 1.0).abs() > 1e-6 {
            return Err(LcgError::Numeric(format!("not a probability vector: {p:?}")));
        }
        Ok(ProbabilityVector(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Max-probability confidence.
    pub fn confidence(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the largest entry (lowest index on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate() {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> ProbabilityVector {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    ProbabilityVector(exps.into_iter().map(|e| e / total).collect())
}

/// `ln(sum(exp(v)))`, computed stably.
pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + v.iter().map(|&z| (z - max).exp()).sum::<f64>().ln()
}

/// Either trained scorer, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Scorer {
    Mlp(MlpModel),
    Nb(NbModel),
}

impl Scorer {
    pub fn classes(&self) -> usize {
        match self {
            Scorer::Mlp(m) => m.classes,
            Scorer::Nb(m) => m.classes(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            Scorer::Mlp(m) => m.to_bytes(),
            Scorer::Nb(m) => m.to_bytes(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| LcgError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| LcgError::io(path, e))?;
        let fail = |reason: String| LcgError::Format {
            path: path.into(),
            reason,
        };
        match bytes.get(..4) {
            Some(b"LCGM") => MlpModel::from_bytes(&bytes).map(Scorer::Mlp).map_err(fail),
            Some(b"LCGN") => NbModel::from_bytes(&bytes).map(Scorer::Nb).map_err(fail),
            _ => Err(fail("unknown model magic".into())),
        }
    }
}

/// Little-endian cursor used by the model decoders.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or("truncated model file")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f32s(&mut self, n: usize) -> std::result::Result<Vec<f32>, String> {
        Ok(self
            .take(n.checked_mul(4).ok_or("size overflow")?)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub(crate) fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        Ok(self
            .take(n.checked_mul(8).ok_or("size overflow")?)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub(crate) fn finish(&self) -> std::result::Result<(), String> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err("trailing bytes after model payload".into())
        }
    }
}
