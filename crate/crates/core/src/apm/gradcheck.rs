//! Finite-difference verification of the hand-written backward passes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::{mse, Dense, Network};
use crate::tilemap::{Grid, Window, CHANNELS};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Max relative error of a dense + sigmoid + MSE subnetwork.
    pub dense_only: f64,
    /// Max relative error over every trainable parameter of the full stack.
    pub full_stack: f64,
    /// Per-tensor maxima for the full stack.
    pub per_tensor: Vec<(String, f64)>,
    /// All gradients finite for an all-zero input batch.
    pub zero_input_finite: bool,
    pub params_checked: usize,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.dense_only.max(self.full_stack)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Random one-hot 4×4 windows, flattened.
pub fn random_window_batch(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * 16 * CHANNELS);
    for _ in 0..n {
        let cells: Vec<u8> = (0..16).map(|_| rng.random_range(0..16)).collect();
        let g = Grid::new(4, cells).expect("valid cells");
        let w = Window {
            row: 0,
            col: 0,
            cells: g.cells().try_into().expect("16 cells"),
        };
        out.extend(w.one_hot::<f64>());
    }
    out
}

fn dense_check(rng: &mut ChaCha8Rng) -> f64 {
    let inputs = 16;
    let batch = 5;
    let mut dense = Dense {
        inputs,
        outputs: 1,
        weight: (0..inputs).map(|_| rng.random_range(-0.5..0.5)).collect(),
        bias: vec![rng.random_range(-0.5..0.5)],
    };
    let x: Vec<f64> = (0..inputs * batch).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..batch).map(|_| rng.random_range(0.0..1.0)).collect();
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let loss = |d: &Dense<f64>| {
        let p: Vec<f64> = d.forward(&x).into_iter().map(sig).collect();
        mse(&p, &y).0
    };

    let p: Vec<f64> = dense.forward(&x).into_iter().map(sig).collect();
    let (_, dp) = mse(&p, &y);
    let dz: Vec<f64> = p.iter().zip(&dp).map(|(&p, &g)| g * p * (1.0 - p)).collect();
    let (_, dw, db) = dense.backward(&x, &dz);

    let mut worst: f64 = 0.0;
    for i in 0..inputs {
        let orig = dense.weight[i];
        dense.weight[i] = orig + FD_STEP;
        let up = loss(&dense);
        dense.weight[i] = orig - FD_STEP;
        let down = loss(&dense);
        dense.weight[i] = orig;
        worst = worst.max(relative_error(dw[i], (up - down) / (2.0 * FD_STEP)));
    }
    let orig = dense.bias[0];
    dense.bias[0] = orig + FD_STEP;
    let up = loss(&dense);
    dense.bias[0] = orig - FD_STEP;
    let down = loss(&dense);
    dense.bias[0] = orig;
    worst.max(relative_error(db[0], (up - down) / (2.0 * FD_STEP)))
}

fn train_loss(net: &mut Network<f64>, x: &[f64], y: &[f64]) -> f64 {
    let cache = net.forward_train(x);
    mse(&cache.predictions, y).0
}

/// Compares analytic and central-difference gradients of a network in train
/// mode. `stride` > 1 checks every stride-th entry of each tensor (always
/// including the first and last).
pub fn check_network(net: &mut Network<f64>, x: &[f64], y: &[f64], stride: usize) -> (f64, Vec<(String, f64)>, usize) {
    let cache = net.forward_train(x);
    let (_, dpred) = mse(&cache.predictions, y);
    let grads = net.backward(&cache, &dpred);
    let names = net.param_names();
    let mut per_tensor = Vec::with_capacity(names.len());
    let mut checked = 0;
    for (t, name) in names.into_iter().enumerate() {
        let len = grads[t].len();
        let mut worst: f64 = 0.0;
        let indices = (0..len).step_by(stride.max(1)).chain(std::iter::once(len - 1));
        for i in indices {
            let orig = net.params()[t][i];
            net.params_mut()[t][i] = orig + FD_STEP;
            let up = train_loss(net, x, y);
            net.params_mut()[t][i] = orig - FD_STEP;
            let down = train_loss(net, x, y);
            net.params_mut()[t][i] = orig;
            worst = worst.max(relative_error(grads[t][i], (up - down) / (2.0 * FD_STEP)));
            checked += 1;
        }
        per_tensor.push((name, worst));
    }
    let max = per_tensor.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    (max, per_tensor, checked)
}

/// Gradient check of the dense head alone and of the full window network
/// (conv, batch norm in train mode, ReLU, max pool routing, dense, sigmoid)
/// in double precision.
pub fn gradient_check(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dense_only = dense_check(&mut rng);

    let mut net = Network::<f64>::new(4, seed);
    let batch = 6;
    let x = random_window_batch(batch, &mut rng);
    let y: Vec<f64> = (0..batch).map(|_| rng.random_range(0.0..1.0)).collect();
    let (full_stack, per_tensor, params_checked) = check_network(&mut net, &x, &y, 1);

    let zeros = vec![0.0; x.len()];
    let cache = net.forward_train(&zeros);
    let (_, dpred) = mse(&cache.predictions, &y);
    let zero_input_finite = net
        .backward(&cache, &dpred)
        .iter()
        .all(|g| g.iter().all(|v| v.is_finite()))
        && cache.predictions.iter().all(|v| v.is_finite());

    GradCheckReport {
        dense_only,
        full_stack,
        per_tensor,
        zero_input_finite,
        params_checked,
    }
}
