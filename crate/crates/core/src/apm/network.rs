//! A small convolutional network with hand-written backpropagation.
//!
//! Three blocks of conv → batch norm → ReLU (→ 2×2 max pool on the first
//! two), then a dense head with a sigmoid. Tensors are NHWC; convolution
//! weights are laid out (ky, kx, in, out). The network is generic over the
//! float type so the same code runs in f32 for training and f64 for gradient
//! checks.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tilemap::CHANNELS;

pub trait Real:
    Float + FromPrimitive + ToPrimitive + AddAssign + SubAssign + MulAssign + Sum + Debug + Send + Sync + 'static
{
}
impl Real for f32 {}
impl Real for f64 {}

fn lit<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("representable constant")
}

/// Filters per block and kernel side per block.
pub const BLOCK_FILTERS: [usize; 3] = [64, 32, 16];
pub const BLOCK_KERNELS: [usize; 3] = [3, 2, 1];
pub const BLOCK_POOLS: [bool; 3] = [true, true, false];
pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;
/// The dense head starts at a tenth of the He range so an untrained model
/// predicts close to an even split.
pub const HEAD_INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(n: usize, h: usize, w: usize, c: usize) -> Self {
        Tensor {
            n,
            h,
            w,
            c,
            data: vec![T::zero(); n * h * w * c],
        }
    }

    pub fn from_data(n: usize, h: usize, w: usize, c: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), n * h * w * c, "tensor data length");
        Tensor { n, h, w, c, data }
    }

    /// (h, w, c) of one sample.
    pub fn sample_shape(&self) -> (usize, usize, usize) {
        (self.h, self.w, self.c)
    }

    fn at(&self, n: usize, y: usize, x: usize) -> usize {
        ((n * self.h + y) * self.w + x) * self.c
    }
}

fn same_padding(k: usize) -> usize {
    (k - 1) / 2
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

pub struct ConvGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dw: Vec<T>,
    pub db: Vec<T>,
}

impl<T: Real> Conv2d<T> {
    fn he_uniform(in_c: usize, out_c: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = (k * k * in_c) as f64;
        let limit = (6.0 / fan_in).sqrt();
        let weight = (0..k * k * in_c * out_c)
            .map(|_| lit(rng.random_range(-limit..limit)))
            .collect();
        Conv2d {
            in_c,
            out_c,
            k,
            weight,
            bias: vec![T::zero(); out_c],
        }
    }

    /// Stride 1, "same" padding (extra row/column of padding after, for even kernels).
    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        assert_eq!(x.c, self.in_c, "conv input channels");
        let (k, ic, oc, pad) = (self.k, self.in_c, self.out_c, same_padding(self.k));
        let mut y = Tensor::zeros(x.n, x.h, x.w, oc);
        for n in 0..x.n {
            for oy in 0..x.h {
                for ox in 0..x.w {
                    let base = y.at(n, oy, ox);
                    let out = &mut y.data[base..base + oc];
                    out.copy_from_slice(&self.bias);
                    for ky in 0..k {
                        let Some(iy) = (oy + ky).checked_sub(pad).filter(|&v| v < x.h) else {
                            continue;
                        };
                        for kx in 0..k {
                            let Some(ix) = (ox + kx).checked_sub(pad).filter(|&v| v < x.w) else {
                                continue;
                            };
                            let xi = x.at(n, iy, ix);
                            for (ci, &xv) in x.data[xi..xi + ic].iter().enumerate() {
                                // one-hot and post-ReLU inputs are mostly zero
                                if xv == T::zero() {
                                    continue;
                                }
                                let wo = ((ky * k + kx) * ic + ci) * oc;
                                for (o, &wv) in out.iter_mut().zip(&self.weight[wo..wo + oc]) {
                                    *o += xv * wv;
                                }
                            }
                        }
                    }
                }
            }
        }
        y
    }

    pub fn backward(&self, x: &Tensor<T>, dy: &Tensor<T>, need_dx: bool) -> ConvGrads<T> {
        let (k, ic, oc, pad) = (self.k, self.in_c, self.out_c, same_padding(self.k));
        let mut dw = vec![T::zero(); self.weight.len()];
        let mut db = vec![T::zero(); oc];
        let mut dx = need_dx.then(|| Tensor::zeros(x.n, x.h, x.w, ic));
        for n in 0..x.n {
            for oy in 0..x.h {
                for ox in 0..x.w {
                    let gi = dy.at(n, oy, ox);
                    let g = &dy.data[gi..gi + oc];
                    for (d, &gv) in db.iter_mut().zip(g) {
                        *d += gv;
                    }
                    for ky in 0..k {
                        let Some(iy) = (oy + ky).checked_sub(pad).filter(|&v| v < x.h) else {
                            continue;
                        };
                        for kx in 0..k {
                            let Some(ix) = (ox + kx).checked_sub(pad).filter(|&v| v < x.w) else {
                                continue;
                            };
                            let xi = x.at(n, iy, ix);
                            for ci in 0..ic {
                                let wo = ((ky * k + kx) * ic + ci) * oc;
                                let xv = x.data[xi + ci];
                                if xv != T::zero() {
                                    for (d, &gv) in dw[wo..wo + oc].iter_mut().zip(g) {
                                        *d += xv * gv;
                                    }
                                }
                                if let Some(dx) = dx.as_mut() {
                                    let s: T = self.weight[wo..wo + oc]
                                        .iter()
                                        .zip(g)
                                        .map(|(&wv, &gv)| wv * gv)
                                        .sum();
                                    dx.data[xi + ci] += s;
                                }
                            }
                        }
                    }
                }
            }
        }
        ConvGrads { dx, dw, db }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

/// Values saved by a train-mode batch-norm pass.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub batch_mean: Vec<T>,
    pub batch_var: Vec<T>,
    pub xhat: Tensor<T>,
    inv_std: Vec<T>,
}

impl<T: Real> BatchNorm<T> {
    fn new(c: usize) -> Self {
        BatchNorm {
            gamma: vec![T::one(); c],
            beta: vec![T::zero(); c],
            running_mean: vec![T::zero(); c],
            running_var: vec![T::one(); c],
        }
    }

    fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> (Tensor<T>, BnCache<T>) {
        let c = self.channels();
        let m = lit::<T>((x.data.len() / c) as f64);
        let mut mean = vec![T::zero(); c];
        for row in x.data.chunks(c) {
            for (acc, &v) in mean.iter_mut().zip(row) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v = *v / m);
        let mut var = vec![T::zero(); c];
        for row in x.data.chunks(c) {
            for ((acc, &v), &mu) in var.iter_mut().zip(row).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
        var.iter_mut().for_each(|v| *v = *v / m);
        let eps = lit::<T>(BN_EPSILON);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();

        let mut xhat = Tensor::zeros(x.n, x.h, x.w, c);
        let mut y = Tensor::zeros(x.n, x.h, x.w, c);
        for ((xr, hr), yr) in x
            .data
            .chunks(c)
            .zip(xhat.data.chunks_mut(c))
            .zip(y.data.chunks_mut(c))
        {
            for ch in 0..c {
                hr[ch] = (xr[ch] - mean[ch]) * inv_std[ch];
                yr[ch] = self.gamma[ch] * hr[ch] + self.beta[ch];
            }
        }

        let mom = lit::<T>(BN_MOMENTUM);
        for ch in 0..c {
            self.running_mean[ch] = mom * self.running_mean[ch] + (T::one() - mom) * mean[ch];
            self.running_var[ch] = mom * self.running_var[ch] + (T::one() - mom) * var[ch];
        }
        (
            y,
            BnCache {
                batch_mean: mean,
                batch_var: var,
                xhat,
                inv_std,
            },
        )
    }

    pub fn forward_infer(&self, x: &Tensor<T>) -> Tensor<T> {
        let c = self.channels();
        let eps = lit::<T>(BN_EPSILON);
        let scale: Vec<T> = (0..c)
            .map(|ch| self.gamma[ch] / (self.running_var[ch] + eps).sqrt())
            .collect();
        let mut y = x.clone();
        for row in y.data.chunks_mut(c) {
            for ch in 0..c {
                row[ch] = (row[ch] - self.running_mean[ch]) * scale[ch] + self.beta[ch];
            }
        }
        y
    }

    /// Returns (dx, dgamma, dbeta).
    pub fn backward(&self, cache: &BnCache<T>, dy: &Tensor<T>) -> (Tensor<T>, Vec<T>, Vec<T>) {
        let c = self.channels();
        let m = lit::<T>((dy.data.len() / c) as f64);
        let mut dgamma = vec![T::zero(); c];
        let mut dbeta = vec![T::zero(); c];
        for (g, h) in dy.data.chunks(c).zip(cache.xhat.data.chunks(c)) {
            for ch in 0..c {
                dbeta[ch] += g[ch];
                dgamma[ch] += g[ch] * h[ch];
            }
        }
        let mut dx = Tensor::zeros(dy.n, dy.h, dy.w, c);
        for ((d, g), h) in dx
            .data
            .chunks_mut(c)
            .zip(dy.data.chunks(c))
            .zip(cache.xhat.data.chunks(c))
        {
            for ch in 0..c {
                let k = self.gamma[ch] * cache.inv_std[ch] / m;
                d[ch] = k * (m * g[ch] - dbeta[ch] - h[ch] * dgamma[ch]);
            }
        }
        (dx, dgamma, dbeta)
    }
}

fn relu_in_place<T: Real>(t: &mut Tensor<T>) {
    t.data.iter_mut().for_each(|v| {
        if *v < T::zero() {
            *v = T::zero()
        }
    });
}

/// 2×2 max pool, stride 2, trailing odd row/column dropped. Returns the
/// pooled tensor and the flat input index that won each output.
pub fn max_pool2<T: Real>(x: &Tensor<T>) -> (Tensor<T>, Vec<usize>) {
    let (h2, w2) = (x.h / 2, x.w / 2);
    let mut y = Tensor::zeros(x.n, h2, w2, x.c);
    let mut idx = vec![0usize; y.data.len()];
    for n in 0..x.n {
        for oy in 0..h2 {
            for ox in 0..w2 {
                for ch in 0..x.c {
                    let mut best = x.at(n, 2 * oy, 2 * ox) + ch;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let cand = x.at(n, 2 * oy + dy, 2 * ox + dx) + ch;
                        if x.data[cand] > x.data[best] {
                            best = cand;
                        }
                    }
                    let o = y.at(n, oy, ox) + ch;
                    y.data[o] = x.data[best];
                    idx[o] = best;
                }
            }
        }
    }
    (y, idx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn forward(&self, x: &[T]) -> Vec<T> {
        let n = x.len() / self.inputs;
        let mut y = Vec::with_capacity(n * self.outputs);
        for row in x.chunks(self.inputs) {
            for o in 0..self.outputs {
                let mut s = self.bias[o];
                for (i, &xv) in row.iter().enumerate() {
                    s += xv * self.weight[i * self.outputs + o];
                }
                y.push(s);
            }
        }
        y
    }

    /// Returns (dx, dw, db).
    pub fn backward(&self, x: &[T], dy: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
        let mut dx = vec![T::zero(); x.len()];
        let mut dw = vec![T::zero(); self.weight.len()];
        let mut db = vec![T::zero(); self.outputs];
        for ((row, g), drow) in x
            .chunks(self.inputs)
            .zip(dy.chunks(self.outputs))
            .zip(dx.chunks_mut(self.inputs))
        {
            for o in 0..self.outputs {
                db[o] += g[o];
                for i in 0..self.inputs {
                    dw[i * self.outputs + o] += row[i] * g[o];
                    drow[i] += self.weight[i * self.outputs + o] * g[o];
                }
            }
        }
        (dx, dw, db)
    }
}

fn sigmoid<T: Real>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm<T>,
    pub pool: bool,
}

#[derive(Debug, Clone)]
pub struct BlockCache<T> {
    conv_in: Tensor<T>,
    pub bn: BnCache<T>,
    relu_out: Tensor<T>,
    pool_idx: Option<Vec<usize>>,
}

/// Everything a train-mode forward pass keeps for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    pub blocks: Vec<BlockCache<T>>,
    features: Vec<T>,
    feature_shape: (usize, usize, usize),
    pub predictions: Vec<T>,
}

/// The conv/BN/pool stack plus dense sigmoid head.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    /// Side of the square input, in tiles.
    pub input_side: usize,
    pub blocks: Vec<Block<T>>,
    pub head: Dense<T>,
}

/// Side of the feature map after the block stack.
pub fn feature_side(input_side: usize) -> usize {
    BLOCK_POOLS
        .iter()
        .fold(input_side, |s, &pool| if pool { s / 2 } else { s })
}

impl<T: Real> Network<T> {
    /// Seeded He-uniform initialisation; BN scale 1, shift 0.
    pub fn new(input_side: usize, seed: u64) -> Self {
        assert!(feature_side(input_side) >= 1, "input too small for two poolings");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut in_c = CHANNELS;
        let mut blocks = Vec::with_capacity(3);
        for b in 0..3 {
            let conv = Conv2d::he_uniform(in_c, BLOCK_FILTERS[b], BLOCK_KERNELS[b], &mut rng);
            blocks.push(Block {
                conv,
                bn: BatchNorm::new(BLOCK_FILTERS[b]),
                pool: BLOCK_POOLS[b],
            });
            in_c = BLOCK_FILTERS[b];
        }
        let fs = feature_side(input_side);
        let inputs = fs * fs * in_c;
        let limit = (6.0 / inputs as f64).sqrt() * HEAD_INIT_SCALE;
        let head = Dense {
            inputs,
            outputs: 1,
            weight: (0..inputs).map(|_| lit(rng.random_range(-limit..limit))).collect(),
            bias: vec![T::zero()],
        };
        Network {
            input_side,
            blocks,
            head,
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_side * self.input_side * CHANNELS
    }

    fn input_tensor(&self, x: &[T]) -> Tensor<T> {
        let per = self.input_len();
        assert!(x.len() % per == 0, "input length not a multiple of the sample size");
        Tensor::from_data(x.len() / per, self.input_side, self.input_side, CHANNELS, x.to_vec())
    }

    /// Inference-mode forward over a batch of flattened inputs.
    pub fn predict(&self, x: &[T]) -> Vec<T> {
        self.predict_traced(x).0
    }

    /// Inference forward that also reports every intermediate per-sample
    /// shape: each block output, the flattened features, the output.
    pub fn predict_traced(&self, x: &[T]) -> (Vec<T>, Vec<Vec<usize>>) {
        let mut shapes = Vec::new();
        let mut h = self.input_tensor(x);
        for block in &self.blocks {
            let z = block.conv.forward(&h);
            let mut a = block.bn.forward_infer(&z);
            relu_in_place(&mut a);
            h = if block.pool { max_pool2(&a).0 } else { a };
            let (hh, ww, cc) = h.sample_shape();
            shapes.push(vec![hh, ww, cc]);
        }
        shapes.push(vec![self.head.inputs]);
        let out: Vec<T> = self.head.forward(&h.data).into_iter().map(sigmoid).collect();
        shapes.push(vec![1]);
        (out, shapes)
    }

    /// Train-mode forward: BN uses batch statistics and updates its running
    /// statistics.
    pub fn forward_train(&mut self, x: &[T]) -> ForwardCache<T> {
        let mut h = self.input_tensor(x);
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &mut self.blocks {
            let z = block.conv.forward(&h);
            let (mut a, bn) = block.bn.forward_train(&z);
            relu_in_place(&mut a);
            let (out, pool_idx) = if block.pool {
                let (p, idx) = max_pool2(&a);
                (p, Some(idx))
            } else {
                (a.clone(), None)
            };
            caches.push(BlockCache {
                conv_in: h,
                bn,
                relu_out: a,
                pool_idx,
            });
            h = out;
        }
        let feature_shape = h.sample_shape();
        let predictions = self.head.forward(&h.data).into_iter().map(sigmoid).collect();
        ForwardCache {
            blocks: caches,
            features: h.data,
            feature_shape,
            predictions,
        }
    }

    /// Gradients of the loss given d(loss)/d(prediction), in
    /// [`Network::param_names`] order.
    pub fn backward(&self, cache: &ForwardCache<T>, dpred: &[T]) -> Vec<Vec<T>> {
        let dz: Vec<T> = cache
            .predictions
            .iter()
            .zip(dpred)
            .map(|(&p, &g)| g * p * (T::one() - p))
            .collect();
        let (dfeat, dw_head, db_head) = self.head.backward(&cache.features, &dz);
        let (fh, fw, fc) = cache.feature_shape;
        let mut dh = Tensor::from_data(dz.len(), fh, fw, fc, dfeat);
        let mut grads: Vec<Vec<T>> = Vec::with_capacity(4 * self.blocks.len() + 2);
        for (bi, (block, bc)) in self.blocks.iter().zip(&cache.blocks).enumerate().rev() {
            let mut da = match &bc.pool_idx {
                Some(idx) => {
                    let r = &bc.relu_out;
                    let mut up = Tensor::zeros(r.n, r.h, r.w, r.c);
                    for (&src, &g) in idx.iter().zip(&dh.data) {
                        up.data[src] += g;
                    }
                    up
                }
                None => dh,
            };
            for (g, &a) in da.data.iter_mut().zip(&bc.relu_out.data) {
                if a <= T::zero() {
                    *g = T::zero();
                }
            }
            let (dbn, dgamma, dbeta) = block.bn.backward(&bc.bn, &da);
            let cg = block.conv.backward(&bc.conv_in, &dbn, bi > 0);
            grads.push(dbeta);
            grads.push(dgamma);
            grads.push(cg.db);
            grads.push(cg.dw);
            dh = cg.dx.unwrap_or_else(|| Tensor::zeros(0, 0, 0, 0));
        }
        grads.reverse();
        grads.push(dw_head);
        grads.push(db_head);
        grads
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for b in 0..self.blocks.len() {
            for p in ["conv.weight", "conv.bias", "bn.gamma", "bn.beta"] {
                names.push(format!("block{}.{}", b + 1, p));
            }
        }
        names.push("head.weight".into());
        names.push("head.bias".into());
        names
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        for b in &self.blocks {
            let c = &b.conv;
            shapes.push(vec![c.k, c.k, c.in_c, c.out_c]);
            shapes.push(vec![c.out_c]);
            shapes.push(vec![c.out_c]);
            shapes.push(vec![c.out_c]);
        }
        shapes.push(vec![self.head.inputs, self.head.outputs]);
        shapes.push(vec![self.head.outputs]);
        shapes
    }

    pub fn params(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for b in &self.blocks {
            out.extend([&b.conv.weight[..], &b.conv.bias, &b.bn.gamma, &b.bn.beta]);
        }
        out.push(&self.head.weight);
        out.push(&self.head.bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.conv.weight);
            out.push(&mut b.conv.bias);
            out.push(&mut b.bn.gamma);
            out.push(&mut b.bn.beta);
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    /// Running means and variances, block by block.
    pub fn bn_state(&self) -> Vec<&[T]> {
        self.blocks
            .iter()
            .flat_map(|b| [&b.bn.running_mean[..], &b.bn.running_var[..]])
            .collect()
    }

    pub fn bn_state_mut(&mut self) -> Vec<&mut [T]> {
        self.blocks
            .iter_mut()
            .flat_map(|b| [&mut b.bn.running_mean[..], &mut b.bn.running_var[..]])
            .collect()
    }

    /// Number of trainable parameters.
    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_params(&mut self) {
        for p in self.params_mut() {
            p.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params()
            .iter()
            .chain(self.bn_state().iter())
            .all(|p| p.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        let conv = |v: &[T]| -> Vec<U> { v.iter().map(|x| U::from_f64(x.to_f64().unwrap()).unwrap()).collect() };
        Network {
            input_side: self.input_side,
            blocks: self
                .blocks
                .iter()
                .map(|b| Block {
                    conv: Conv2d {
                        in_c: b.conv.in_c,
                        out_c: b.conv.out_c,
                        k: b.conv.k,
                        weight: conv(&b.conv.weight),
                        bias: conv(&b.conv.bias),
                    },
                    bn: BatchNorm {
                        gamma: conv(&b.bn.gamma),
                        beta: conv(&b.bn.beta),
                        running_mean: conv(&b.bn.running_mean),
                        running_var: conv(&b.bn.running_var),
                    },
                    pool: b.pool,
                })
                .collect(),
            head: Dense {
                inputs: self.head.inputs,
                outputs: self.head.outputs,
                weight: conv(&self.head.weight),
                bias: conv(&self.head.bias),
            },
        }
    }
}

/// Mean squared error and its gradient with respect to the predictions.
pub fn mse<T: Real>(pred: &[T], target: &[T]) -> (T, Vec<T>) {
    let n = lit::<T>(pred.len() as f64);
    let two = lit::<T>(2.0);
    let loss = pred
        .iter()
        .zip(target)
        .map(|(&p, &y)| (p - y) * (p - y))
        .sum::<T>()
        / n;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &y)| two * (p - y) / n)
        .collect();
    (loss, grad)
}
