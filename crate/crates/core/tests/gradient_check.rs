//! Backpropagation vs central finite differences on the cross-entropy loss.

use lcg_core::classifier::MlpParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-4;

/// Max relative error per tensor, `|a - n| / max(|a|, |n|)`; entries where
/// both are below 1e-10 in magnitude are compared absolutely instead.
fn check(seed: u64, dim: usize, hidden: usize, classes: usize, samples: usize) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = MlpParams::init(dim, hidden, classes, &mut rng);
    let rows: Vec<Vec<f32>> = (0..samples)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect())
        .collect();
    let xs: Vec<&[f32]> = rows.iter().map(Vec::as_slice).collect();
    let ys: Vec<usize> = (0..samples).map(|i| i % classes).collect();

    let (_, grad) = params.loss_and_gradient(&xs, &ys);
    let mut out = Vec::new();
    for (name, range) in params.tensor_ranges() {
        let mut worst: f64 = 0.0;
        for i in range {
            let mut plus = params.clone();
            plus.theta[i] += STEP;
            let mut minus = params.clone();
            minus.theta[i] -= STEP;
            let numeric = (plus.loss(&xs, &ys) - minus.loss(&xs, &ys)) / (2.0 * STEP);
            let analytic = grad[i];
            let scale = analytic.abs().max(numeric.abs());
            let err = if scale < 1e-10 { (analytic - numeric).abs() } else { (analytic - numeric).abs() / scale };
            worst = worst.max(err);
        }
        out.push((name, worst));
    }
    out
}

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..10 {
        for (name, err) in check(seed, 8, 16, 3, 10) {
            assert!(err < 1e-4, "seed {seed} tensor {name}: relative error {err:e}");
        }
    }
}

#[test]
fn loss_and_gradient_agree_on_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let params = MlpParams::init(4, 5, 2, &mut rng);
    let rows = [vec![0.1f32, -0.2, 0.3, 0.9], vec![-1.0f32, 0.5, 0.0, 0.2]];
    let xs: Vec<&[f32]> = rows.iter().map(Vec::as_slice).collect();
    let (l, _) = params.loss_and_gradient(&xs, &[0, 1]);
    assert_eq!(l, params.loss(&xs, &[0, 1]));
}
