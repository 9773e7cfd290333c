use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{gelu, gelu_derivative, log_sum_exp, softmax, ProbabilityVector, Reader};
use crate::coreset::CoreSet;
use crate::embedding::EmbeddingMatrix;
use crate::error::{LcgError, Result};

pub const DEFAULT_HIDDEN: usize = 768;
pub const DEFAULT_LR: f64 = 1e-5;
pub const DEFAULT_EPOCHS: usize = 3;
pub const DEFAULT_BATCH_SIZE: usize = 32;
/// Hard ceiling on training epochs. The scorer must stay under-fit.
pub const MAX_EPOCHS: usize = 3;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Trained network, `softmax(W2 gelu(W1 h + b1) + b2)`, stored as f32.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub dim: usize,
    pub hidden: usize,
    pub classes: usize,
    /// hidden x dim, row-major.
    pub w1: Vec<f32>,
    pub b1: Vec<f32>,
    /// classes x hidden, row-major.
    pub w2: Vec<f32>,
    pub b2: Vec<f32>,
    pub epochs_trained: usize,
}

/// f64 working copy of the parameters as one flat vector, laid out
/// `[w1 | b1 | w2 | b2]`. Training and gradient checks run on this.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub dim: usize,
    pub hidden: usize,
    pub classes: usize,
    pub theta: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(dim: usize, hidden: usize, classes: usize) -> Self {
        let n = hidden * dim + hidden + classes * hidden + classes;
        MlpParams {
            dim,
            hidden,
            classes,
            theta: vec![0.0; n],
        }
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for both layers.
    pub fn init(dim: usize, hidden: usize, classes: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(dim, hidden, classes);
        let (l1, l2) = (p.layer1_len(), p.theta.len());
        let bound1 = 1.0 / (dim as f64).sqrt();
        let bound2 = 1.0 / (hidden as f64).sqrt();
        for v in &mut p.theta[..l1] {
            *v = rng.random_range(-bound1..bound1);
        }
        for v in &mut p.theta[l1..l2] {
            *v = rng.random_range(-bound2..bound2);
        }
        p
    }

    fn layer1_len(&self) -> usize {
        self.hidden * self.dim + self.hidden
    }

    pub fn w1(&self) -> &[f64] {
        &self.theta[..self.hidden * self.dim]
    }

    pub fn b1(&self) -> &[f64] {
        &self.theta[self.hidden * self.dim..self.layer1_len()]
    }

    pub fn w2(&self) -> &[f64] {
        let s = self.layer1_len();
        &self.theta[s..s + self.classes * self.hidden]
    }

    pub fn b2(&self) -> &[f64] {
        &self.theta[self.theta.len() - self.classes..]
    }

    /// Offsets of the four parameter tensors inside `theta`.
    pub fn tensor_ranges(&self) -> [(&'static str, std::ops::Range<usize>); 4] {
        let a = self.hidden * self.dim;
        let b = a + self.hidden;
        let c = b + self.classes * self.hidden;
        [("w1", 0..a), ("b1", a..b), ("w2", b..c), ("b2", c..self.theta.len())]
    }

    fn hidden_pre(&self, h: &[f32]) -> Vec<f64> {
        let (w1, b1) = (self.w1(), self.b1());
        (0..self.hidden)
            .map(|j| {
                let row = &w1[j * self.dim..(j + 1) * self.dim];
                b1[j] + row.iter().zip(h).map(|(&w, &x)| w * f64::from(x)).sum::<f64>()
            })
            .collect()
    }

    fn logits(&self, act: &[f64]) -> Vec<f64> {
        let (w2, b2) = (self.w2(), self.b2());
        (0..self.classes)
            .map(|c| {
                let row = &w2[c * self.hidden..(c + 1) * self.hidden];
                b2[c] + row.iter().zip(act).map(|(w, a)| w * a).sum::<f64>()
            })
            .collect()
    }

    pub fn forward(&self, h: &[f32]) -> ProbabilityVector {
        let act: Vec<f64> = self.hidden_pre(h).into_iter().map(gelu).collect();
        softmax(&self.logits(&act))
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, xs: &[&[f32]], ys: &[usize]) -> f64 {
        let total: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, &y)| {
                let act: Vec<f64> = self.hidden_pre(x).into_iter().map(gelu).collect();
                let z = self.logits(&act);
                log_sum_exp(&z) - z[y]
            })
            .sum();
        total / xs.len() as f64
    }

    /// Mean cross-entropy and its gradient with respect to `theta`.
    pub fn loss_and_gradient(&self, xs: &[&[f32]], ys: &[usize]) -> (f64, Vec<f64>) {
        let (d, hd, k) = (self.dim, self.hidden, self.classes);
        let mut grad = vec![0.0; self.theta.len()];
        let [(_, gw1), (_, gb1), (_, gw2), (_, gb2)] = self.tensor_ranges();
        let w2 = self.w2();
        let mut loss = 0.0;
        let mut dz1 = vec![0.0; hd];

        for (x, &y) in xs.iter().zip(ys) {
            let pre = self.hidden_pre(x);
            let act: Vec<f64> = pre.iter().map(|&v| gelu(v)).collect();
            let z = self.logits(&act);
            let lse = log_sum_exp(&z);
            loss += lse - z[y];

            let dz2: Vec<f64> = z
                .iter()
                .enumerate()
                .map(|(c, &zc)| (zc - lse).exp() - if c == y { 1.0 } else { 0.0 })
                .collect();
            for c in 0..k {
                let g = dz2[c];
                grad[gb2.start + c] += g;
                let row = &mut grad[gw2.start + c * hd..gw2.start + (c + 1) * hd];
                for (r, a) in row.iter_mut().zip(&act) {
                    *r += g * a;
                }
            }
            for j in 0..hd {
                let da: f64 = (0..k).map(|c| w2[c * hd + j] * dz2[c]).sum();
                dz1[j] = da * gelu_derivative(pre[j]);
            }
            for j in 0..hd {
                grad[gb1.start + j] += dz1[j];
                let row = &mut grad[gw1.start + j * d..gw1.start + (j + 1) * d];
                for (r, &xv) in row.iter_mut().zip(x.iter()) {
                    *r += dz1[j] * f64::from(xv);
                }
            }
        }
        let scale = 1.0 / xs.len() as f64;
        for g in &mut grad {
            *g *= scale;
        }
        (loss * scale, grad)
    }

    pub fn to_model(&self, epochs_trained: usize) -> MlpModel {
        let f = |s: &[f64]| s.iter().map(|&v| v as f32).collect::<Vec<f32>>();
        MlpModel {
            dim: self.dim,
            hidden: self.hidden,
            classes: self.classes,
            w1: f(self.w1()),
            b1: f(self.b1()),
            w2: f(self.w2()),
            b2: f(self.b2()),
            epochs_trained,
        }
    }
}

impl MlpModel {
    pub fn to_params(&self) -> MlpParams {
        let theta = self
            .w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .map(|&v| f64::from(v))
            .collect();
        MlpParams {
            dim: self.dim,
            hidden: self.hidden,
            classes: self.classes,
            theta,
        }
    }

    pub fn forward(&self, h: &[f32]) -> Result<ProbabilityVector> {
        if h.len() != self.dim {
            return Err(LcgError::DimensionMismatch {
                expected: self.dim,
                actual: h.len(),
            });
        }
        let act: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &self.w1[j * self.dim..(j + 1) * self.dim];
                let pre = f64::from(self.b1[j])
                    + row.iter().zip(h).map(|(&w, &x)| f64::from(w) * f64::from(x)).sum::<f64>();
                gelu(pre)
            })
            .collect();
        let logits: Vec<f64> = (0..self.classes)
            .map(|c| {
                let row = &self.w2[c * self.hidden..(c + 1) * self.hidden];
                f64::from(self.b2[c]) + row.iter().zip(&act).map(|(&w, a)| f64::from(w) * a).sum::<f64>()
            })
            .collect();
        Ok(softmax(&logits))
    }

    /// `"LCGM" | u32 version | u32 dim | u32 hidden | u32 classes |
    /// u32 epochs_trained | w1 | b1 | w2 | b2`, f32 little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"LCGM");
        for v in [1, self.dim, self.hidden, self.classes, self.epochs_trained] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != b"LCGM" {
            return Err("bad magic".into());
        }
        if r.u32()? != 1 {
            return Err("unsupported model version".into());
        }
        let (dim, hidden, classes, epochs_trained) =
            (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let model = MlpModel {
            dim,
            hidden,
            classes,
            w1: r.f32s(hidden * dim)?,
            b1: r.f32s(hidden)?,
            w2: r.f32s(classes * hidden)?,
            b2: r.f32s(classes)?,
            epochs_trained,
        };
        r.finish()?;
        if model.w1.iter().chain(&model.w2).chain(&model.b1).chain(&model.b2).any(|v| !v.is_finite()) {
            return Err("non-finite parameter".into());
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpConfig {
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: DEFAULT_HIDDEN,
            lr: DEFAULT_LR,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    /// Full-training-set cross-entropy at initialization and after each epoch.
    pub epoch_losses: Vec<f64>,
}

pub fn mlp_train(coreset: &CoreSet, embeddings: &EmbeddingMatrix, k: usize, config: &MlpConfig) -> Result<TrainOutcome> {
    let examples: Vec<(usize, usize)> = coreset.entries.iter().map(|e| (e.id, e.pseudo_label)).collect();
    mlp_train_examples(embeddings, &examples, k, config)
}

/// Trains on `(row id, label)` pairs with minibatch Adam for exactly
/// `config.epochs` epochs.
pub fn mlp_train_examples(
    embeddings: &EmbeddingMatrix,
    examples: &[(usize, usize)],
    k: usize,
    config: &MlpConfig,
) -> Result<TrainOutcome> {
    if examples.is_empty() {
        return Err(LcgError::Data("training set is empty".into()));
    }
    if config.epochs == 0 || config.epochs > MAX_EPOCHS {
        return Err(LcgError::param(
            "epochs",
            format!("must be between 1 and {MAX_EPOCHS}, got {}", config.epochs),
        ));
    }
    if config.batch_size == 0 {
        return Err(LcgError::param("batch", "must be positive"));
    }
    if config.hidden == 0 {
        return Err(LcgError::param("hidden", "must be positive"));
    }
    if !(config.lr > 0.0 && config.lr.is_finite()) {
        return Err(LcgError::param("lr", format!("must be positive, got {}", config.lr)));
    }
    let mut present = vec![false; k];
    for &(id, label) in examples {
        if id >= embeddings.rows() {
            return Err(LcgError::Data(format!("record {id} has no embedding row")));
        }
        if label >= k {
            return Err(LcgError::Data(format!("label {label} out of range for k={k}")));
        }
        present[label] = true;
    }
    if let Some(missing) = present.iter().position(|p| !p) {
        return Err(LcgError::Data(format!("class {missing} has no training examples")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = MlpParams::init(embeddings.dim(), config.hidden, k, &mut rng);
    let n = params.theta.len();
    let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
    let mut step = 0i32;

    let all_x: Vec<&[f32]> = examples.iter().map(|&(id, _)| embeddings.row(id)).collect();
    let all_y: Vec<usize> = examples.iter().map(|&(_, y)| y).collect();
    let mut epoch_losses = vec![params.loss(&all_x, &all_y)];

    let mut order: Vec<usize> = (0..examples.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let xs: Vec<&[f32]> = batch.iter().map(|&i| all_x[i]).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| all_y[i]).collect();
            let (loss, grad) = params.loss_and_gradient(&xs, &ys);
            if !loss.is_finite() {
                return Err(LcgError::Numeric(format!("non-finite training loss {loss}")));
            }
            step += 1;
            let c1 = 1.0 - ADAM_BETA1.powi(step);
            let c2 = 1.0 - ADAM_BETA2.powi(step);
            for i in 0..n {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * grad[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
                params.theta[i] -= config.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
        }
        let loss = params.loss(&all_x, &all_y);
        if !loss.is_finite() {
            return Err(LcgError::Numeric(format!("non-finite training loss {loss}")));
        }
        epoch_losses.push(loss);
    }

    Ok(TrainOutcome {
        model: params.to_model(config.epochs),
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_is_uniform() {
        let model = MlpParams::zeros(4, 3, 5).to_model(0);
        let p = model.forward(&[1.0, -2.0, 0.5, 3.0]).unwrap();
        for &v in p.as_slice() {
            assert!((v - 0.2).abs() < 1e-15);
        }
        assert!(model.forward(&[1.0]).is_err());
    }

    #[test]
    fn tiny_network_by_hand() {
        // d=2, hidden=2, K=2
        let mut p = MlpParams::zeros(2, 2, 2);
        p.theta = vec![
            1.0, 0.0, 0.0, -1.0, // w1
            0.5, 0.0, // b1
            1.0, 2.0, -1.0, 0.0, // w2
            0.0, 0.25, // b2
        ];
        let h = [1.0f32, 1.0];
        // z1 = (1.5, -1); a = gelu(z1)
        let a0: f64 = 1.5 * 0.9331927987311419;
        let a1 = -1.0 * 0.15865525393145707;
        let z = [a0 + 2.0 * a1, -a0 + 0.25];
        let e = [z[0].exp(), z[1].exp()];
        let expected = [e[0] / (e[0] + e[1]), e[1] / (e[0] + e[1])];
        let got = p.to_model(0).forward(&h).unwrap();
        for (g, x) in got.as_slice().iter().zip(expected) {
            assert!((g - x).abs() < 1e-7);
        }
        let exact = p.forward(&h);
        for (g, x) in exact.as_slice().iter().zip(expected) {
            assert!((g - x).abs() < 1e-12);
        }
    }

    #[test]
    fn default_shape() {
        let p = MlpParams::zeros(384, DEFAULT_HIDDEN, 3).to_model(0);
        assert_eq!(p.w1.len(), 768 * 384);
        assert_eq!(p.w2.len(), 3 * 768);
        assert!(p.forward(&vec![0.1; 384]).is_ok());
    }

    fn two_point_data() -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()
    }

    #[test]
    fn loss_decreases_on_separable_pair() {
        let cfg = MlpConfig {
            hidden: 8,
            lr: 1e-2,
            batch_size: 2,
            seed: 11,
            ..MlpConfig::default()
        };
        let out = mlp_train_examples(&two_point_data(), &[(0, 0), (1, 1)], 2, &cfg).unwrap();
        assert_eq!(out.model.epochs_trained, 3);
        assert_eq!(out.epoch_losses.len(), 4);
        for w in out.epoch_losses.windows(2) {
            assert!(w[1] < w[0], "{:?}", out.epoch_losses);
        }
    }

    #[test]
    fn epoch_ceiling_and_parameter_checks() {
        let data = two_point_data();
        let ex = [(0, 0), (1, 1)];
        let base = MlpConfig {
            hidden: 4,
            ..MlpConfig::default()
        };
        assert!(mlp_train_examples(&data, &ex, 2, &MlpConfig { epochs: 4, ..base }).is_err());
        assert!(mlp_train_examples(&data, &ex, 2, &MlpConfig { epochs: 0, ..base }).is_err());
        assert!(mlp_train_examples(&data, &ex, 2, &MlpConfig { batch_size: 0, ..base }).is_err());
        assert!(mlp_train_examples(&data, &ex, 2, &MlpConfig { lr: -1.0, ..base }).is_err());
        let err = mlp_train_examples(&data, &[(0, 0), (1, 0)], 2, &base).unwrap_err();
        assert!(err.to_string().contains("class 1"));
        assert!(mlp_train_examples(&data, &[], 2, &base).is_err());
    }

    #[test]
    fn deterministic_for_seed() {
        let data = two_point_data();
        let cfg = MlpConfig {
            hidden: 6,
            seed: 5,
            ..MlpConfig::default()
        };
        let a = mlp_train_examples(&data, &[(0, 0), (1, 1)], 2, &cfg).unwrap();
        let b = mlp_train_examples(&data, &[(0, 0), (1, 1)], 2, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        let c = mlp_train_examples(&data, &[(0, 0), (1, 1)], 2, &MlpConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn binary_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = MlpParams::init(5, 7, 3, &mut rng).to_model(3);
        let bytes = model.to_bytes();
        assert_eq!(MlpModel::from_bytes(&bytes).unwrap(), model);
        assert!(MlpModel::from_bytes(&bytes[..bytes.len() - 2]).is_err());
    }
}
