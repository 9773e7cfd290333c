use std::collections::BTreeMap;

use super::{log_sum_exp, ProbabilityVector, Reader};
use crate::corpus::{Dataset, InstructionRecord};
use crate::coreset::CoreSet;
use crate::error::{LcgError, Result};
use crate::text::tokenize;

pub const DEFAULT_ALPHA: f64 = 1.0;

/// Multinomial naive Bayes with additive smoothing, over raw token counts.
#[derive(Debug, Clone, PartialEq)]
pub struct NbModel {
    pub class_log_prior: Vec<f64>,
    /// K x V, row-major.
    pub token_log_likelihood: Vec<f64>,
    /// Token -> column. Columns follow sorted token order.
    pub vocabulary: BTreeMap<String, usize>,
    pub alpha: f64,
}

impl NbModel {
    pub fn classes(&self) -> usize {
        self.class_log_prior.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn predict_text(&self, text: &str) -> ProbabilityVector {
        let v = self.vocab_size();
        let mut scores = self.class_log_prior.clone();
        for token in tokenize(text) {
            if let Some(&col) = self.vocabulary.get(&token) {
                for (c, s) in scores.iter_mut().enumerate() {
                    *s += self.token_log_likelihood[c * v + col];
                }
            }
        }
        let lse = log_sum_exp(&scores);
        ProbabilityVector(scores.into_iter().map(|s| (s - lse).exp()).collect())
    }

    /// `"LCGN" | u32 version | u32 classes | u32 vocab | f64 alpha |
    /// K f64 log priors | K*V f64 log likelihoods | V x (u32 len, utf8)`,
    /// little-endian. Vocabulary strings are written in column order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"LCGN");
        for v in [1, self.classes(), self.vocab_size()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.alpha.to_le_bytes());
        for v in self.class_log_prior.iter().chain(&self.token_log_likelihood) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let mut by_col: Vec<&str> = vec![""; self.vocab_size()];
        for (t, &c) in &self.vocabulary {
            by_col[c] = t;
        }
        for t in by_col {
            out.extend_from_slice(&(t.len() as u32).to_le_bytes());
            out.extend_from_slice(t.as_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != b"LCGN" {
            return Err("bad magic".into());
        }
        if r.u32()? != 1 {
            return Err("unsupported model version".into());
        }
        let (k, v) = (r.u32()? as usize, r.u32()? as usize);
        let alpha = r.f64s(1)?[0];
        let class_log_prior = r.f64s(k)?;
        let token_log_likelihood = r.f64s(k.checked_mul(v).ok_or("size overflow")?)?;
        let mut vocabulary = BTreeMap::new();
        for col in 0..v {
            let len = r.u32()? as usize;
            let token = std::str::from_utf8(r.take(len)?).map_err(|e| e.to_string())?;
            vocabulary.insert(token.to_owned(), col);
        }
        r.finish()?;
        if vocabulary.len() != v {
            return Err("duplicate vocabulary entry".into());
        }
        Ok(NbModel {
            class_log_prior,
            token_log_likelihood,
            vocabulary,
            alpha,
        })
    }
}

pub fn nb_train(coreset: &CoreSet, dataset: &Dataset, k: usize, alpha: f64) -> Result<NbModel> {
    let mut docs = Vec::with_capacity(coreset.len());
    for e in &coreset.entries {
        let record = dataset
            .get(e.id)
            .ok_or_else(|| LcgError::Data(format!("coreset id {} not in dataset", e.id)))?;
        docs.push((record.prompt_text(), e.pseudo_label));
    }
    nb_train_texts(docs.iter().map(|(t, l)| (t.as_str(), *l)), k, alpha)
}

/// Trains on `(text, label)` pairs.
pub fn nb_train_texts<'a>(docs: impl IntoIterator<Item = (&'a str, usize)>, k: usize, alpha: f64) -> Result<NbModel> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(LcgError::param("alpha", format!("must be positive, got {alpha}")));
    }
    let mut doc_counts = vec![0usize; k];
    let mut token_counts: Vec<BTreeMap<String, u64>> = vec![BTreeMap::new(); k];
    let mut vocabulary: BTreeMap<String, usize> = BTreeMap::new();
    for (text, label) in docs {
        if label >= k {
            return Err(LcgError::Data(format!("label {label} out of range for k={k}")));
        }
        doc_counts[label] += 1;
        for t in tokenize(text) {
            vocabulary.entry(t.clone()).or_insert(0);
            *token_counts[label].entry(t).or_insert(0) += 1;
        }
    }
    if let Some(missing) = doc_counts.iter().position(|&c| c == 0) {
        return Err(LcgError::Data(format!("class {missing} has no training examples")));
    }
    for (col, c) in vocabulary.values_mut().enumerate() {
        *c = col;
    }

    let total_docs: usize = doc_counts.iter().sum();
    let class_log_prior = doc_counts.iter().map(|&c| (c as f64 / total_docs as f64).ln()).collect();
    let v = vocabulary.len();
    let mut token_log_likelihood = vec![0.0; k * v];
    for (c, counts) in token_counts.iter().enumerate() {
        let total: u64 = counts.values().sum();
        let denom = (total as f64 + alpha * v as f64).ln();
        for (token, &col) in &vocabulary {
            let n = counts.get(token).copied().unwrap_or(0) as f64;
            token_log_likelihood[c * v + col] = (n + alpha).ln() - denom;
        }
    }
    Ok(NbModel {
        class_log_prior,
        token_log_likelihood,
        vocabulary,
        alpha,
    })
}

pub fn nb_predict(model: &NbModel, record: &InstructionRecord) -> ProbabilityVector {
    model.predict_text(&record.prompt_text())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seen_token_favors_its_class() {
        let m = nb_train_texts([("apple", 0), ("banana", 1)], 2, 1.0).unwrap();
        let p = m.predict_text("apple");
        // P(apple|0) = 2/3, P(apple|1) = 1/3, equal priors
        assert!((p.as_slice()[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!(p.as_slice()[0] > 0.5);
    }

    #[test]
    fn no_evidence_gives_priors() {
        let m = nb_train_texts([("a b", 0), ("c", 1), ("d", 1)], 2, 1.0).unwrap();
        for text in ["", "zzz unseen", "!!"] {
            let p = m.predict_text(text);
            assert!((p.as_slice()[0] - 1.0 / 3.0).abs() < 1e-15);
            assert!((p.as_slice()[1] - 2.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn balanced_priors_are_uniform() {
        let m = nb_train_texts([("a", 0), ("b", 1), ("c", 2)], 3, 1.0).unwrap();
        for lp in &m.class_log_prior {
            assert!((lp.exp() - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn likelihood_rows_normalized() {
        let m = nb_train_texts([("a a b", 0), ("b c", 1), ("c d e", 1)], 2, 0.5).unwrap();
        let v = m.vocab_size();
        for c in 0..2 {
            let s: f64 = m.token_log_likelihood[c * v..(c + 1) * v].iter().map(|l| l.exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn repeated_tokens_multiply() {
        let m = nb_train_texts([("x", 0), ("y", 1)], 2, 1.0).unwrap();
        // P(x|0)=2/3, P(x|1)=1/3; with tf=2 the ratio squares: 4/9 vs 1/9
        let p = m.predict_text("x x");
        assert!((p.as_slice()[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn missing_class_and_alpha() {
        assert!(nb_train_texts([("x", 0)], 2, 1.0).is_err());
        assert!(nb_train_texts([("x", 0)], 1, 0.0).is_err());
    }

    #[test]
    fn binary_round_trip() {
        let m = nb_train_texts([("héllo world", 0), ("other words here", 1)], 2, 1.0).unwrap();
        let back = NbModel::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
    }
}
