use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{mse, Network};
use super::ApmError;
use crate::tilemap::{grid_windows, one_hot_encode, Grid, TileMap, Window, CHANNELS, WINDOW};

/// Windows scored per inference batch.
const SCORE_CHUNK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub momentum: f32,
    pub batch_size: usize,
    pub epochs_per_update: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 32,
            epochs_per_update: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ApmError> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 {
            return Err(ApmError::BadConfig(format!("{self:?}")));
        }
        Ok(())
    }
}

/// One window labelled with the vote share of the map it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingSample {
    pub window: Window,
    pub y: f32,
}

/// Final vote counts of one pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub votes_a: u32,
    pub votes_b: u32,
}

impl Tally {
    pub fn total(&self) -> u32 {
        self.votes_a + self.votes_b
    }

    /// (share of A, share of B); `None` without votes.
    pub fn shares(&self) -> Option<(f32, f32)> {
        let t = self.total();
        (t > 0).then(|| (self.votes_a as f32 / t as f32, self.votes_b as f32 / t as f32))
    }
}

/// Every window of each map becomes a sample labelled with that map's share
/// of the votes; A's samples come first.
pub fn build_training_set(tally: Tally, a: &TileMap, b: &TileMap) -> Result<Vec<TrainingSample>, ApmError> {
    let (ya, yb) = tally.shares().ok_or(ApmError::EmptyPoll)?;
    Ok(map_samples(&a.grid, ya)
        .chain(map_samples(&b.grid, yb))
        .collect())
}

pub fn map_samples(grid: &Grid, y: f32) -> impl Iterator<Item = TrainingSample> {
    grid_windows(grid)
        .into_iter()
        .map(move |window| TrainingSample { window, y })
}

/// The aesthetic prediction model: scores 4×4 one-hot windows; a map's
/// fitness is the mean over its windows.
#[derive(Debug, Clone, PartialEq)]
pub struct ApmModel {
    pub tileset_id: String,
    pub version: u64,
    pub seed: u64,
    pub trained_pairings: u64,
    pub net: Network<f32>,
}

pub fn build_apm(tileset_id: &str, seed: u64) -> ApmModel {
    ApmModel {
        tileset_id: tileset_id.to_string(),
        version: 0,
        seed,
        trained_pairings: 0,
        net: Network::new(WINDOW, seed),
    }
}

impl ApmModel {
    /// Inference-mode prediction for one one-hot window.
    pub fn forward_window(&self, window: &[f32]) -> Result<f32, ApmError> {
        let expect = WINDOW * WINDOW * CHANNELS;
        if window.len() != expect {
            return Err(ApmError::ShapeMismatch {
                expected: expect,
                got: window.len(),
            });
        }
        Ok(self.net.predict(window)[0])
    }

    pub fn score_windows(&self, windows: &[Window]) -> Vec<f32> {
        let per = WINDOW * WINDOW * CHANNELS;
        let mut out = Vec::with_capacity(windows.len());
        let mut buf = vec![0.0f32; SCORE_CHUNK.min(windows.len()) * per];
        for chunk in windows.chunks(SCORE_CHUNK) {
            let x = &mut buf[..chunk.len() * per];
            for (w, dst) in chunk.iter().zip(x.chunks_mut(per)) {
                w.write_one_hot(dst);
            }
            out.extend(self.net.predict(x));
        }
        out
    }

    /// Mean window score; no tileset check.
    pub fn score_grid(&self, grid: &Grid) -> f64 {
        let scores = self.score_windows(&grid_windows(grid));
        scores.iter().map(|&s| f64::from(s)).sum::<f64>() / scores.len() as f64
    }

    pub fn score_map(&self, map: &TileMap) -> Result<f64, ApmError> {
        if map.tileset_id != self.tileset_id {
            return Err(ApmError::TilesetMismatch(
                self.tileset_id.clone(),
                map.tileset_id.clone(),
            ));
        }
        Ok(self.score_grid(&map.grid))
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }
}

/// Returns a trained copy with the version bumped; `model` is untouched.
pub fn train_update(model: &ApmModel, samples: &[TrainingSample], cfg: &TrainConfig) -> Result<ApmModel, ApmError> {
    if samples.is_empty() {
        return Err(ApmError::EmptySamples);
    }
    let mut next = model.clone();
    let labels: Vec<f32> = samples.iter().map(|s| s.y).collect();
    fit(
        &mut next.net,
        &labels,
        |i, dst| samples[i].window.write_one_hot(dst),
        cfg,
        cfg.seed ^ model.version.wrapping_mul(0x9E37_79B9_7F4A_7C15),
    )?;
    next.version = model.version + 1;
    Ok(next)
}

/// Mini-batch SGD with momentum on mean squared error. `encode(i, dst)`
/// writes sample i's input into `dst`.
pub(crate) fn fit<F>(
    net: &mut Network<f32>,
    labels: &[f32],
    encode: F,
    cfg: &TrainConfig,
    shuffle_seed: u64,
) -> Result<f32, ApmError>
where
    F: Fn(usize, &mut [f32]),
{
    cfg.validate()?;
    let n = labels.len();
    let per = net.input_len();
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut velocity: Vec<Vec<f32>> = net.params().iter().map(|p| vec![0.0; p.len()]).collect();
    let mut x = vec![0.0f32; cfg.batch_size * per];
    let mut y = Vec::with_capacity(cfg.batch_size);
    let mut last_loss = 0.0;
    for _ in 0..cfg.epochs_per_update {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            // a lone sample would give batch norm zero variance
            if batch.len() == 1 && n > 1 {
                continue;
            }
            y.clear();
            for (slot, &i) in batch.iter().enumerate() {
                encode(i, &mut x[slot * per..(slot + 1) * per]);
                y.push(labels[i]);
            }
            let cache = net.forward_train(&x[..batch.len() * per]);
            let (loss, dpred) = mse(&cache.predictions, &y);
            if !loss.is_finite() {
                return Err(ApmError::NonFiniteLoss);
            }
            last_loss = loss;
            let grads = net.backward(&cache, &dpred);
            for ((param, grad), vel) in net.params_mut().into_iter().zip(&grads).zip(&mut velocity) {
                for ((p, &g), v) in param.iter_mut().zip(grad).zip(vel.iter_mut()) {
                    *v = cfg.momentum * *v - cfg.learning_rate * g;
                    *p += *v;
                }
            }
        }
    }
    if !net.all_finite() {
        return Err(ApmError::NonFiniteLoss);
    }
    Ok(last_loss)
}

/// Train-mode MSE of a fixed batch (used for descent checks).
pub fn batch_loss(model: &ApmModel, samples: &[TrainingSample]) -> f32 {
    let mut net = model.net.clone();
    let x: Vec<f32> = samples.iter().flat_map(|s| s.window.one_hot::<f32>()).collect();
    let y: Vec<f32> = samples.iter().map(|s| s.y).collect();
    mse(&net.forward_train(&x).predictions, &y).0
}

pub const POST_SIZES: [usize; 2] = [6, 10];

/// Fixed-input baseline: the same block stack applied to a whole map.
#[derive(Debug, Clone, PartialEq)]
pub struct PostModel {
    pub tileset_id: String,
    pub fixed_size: usize,
    pub version: u64,
    pub seed: u64,
    pub net: Network<f32>,
}

pub fn build_post_network(tileset_id: &str, fixed_size: usize, seed: u64) -> Result<PostModel, ApmError> {
    if !POST_SIZES.contains(&fixed_size) {
        return Err(ApmError::UnsupportedSize(fixed_size));
    }
    Ok(PostModel {
        tileset_id: tileset_id.to_string(),
        fixed_size,
        version: 0,
        seed,
        net: Network::new(fixed_size, seed),
    })
}

impl PostModel {
    pub fn score_grid(&self, grid: &Grid) -> Result<f64, ApmError> {
        if grid.size() != self.fixed_size {
            return Err(ApmError::SizeMismatch {
                expected: self.fixed_size,
                got: grid.size(),
            });
        }
        Ok(f64::from(self.net.predict(&one_hot_encode::<f32>(grid))[0]))
    }

    pub fn score_map(&self, map: &TileMap) -> Result<f64, ApmError> {
        if map.tileset_id != self.tileset_id {
            return Err(ApmError::TilesetMismatch(
                self.tileset_id.clone(),
                map.tileset_id.clone(),
            ));
        }
        self.score_grid(&map.grid)
    }
}

pub fn score_map_post(model: &PostModel, map: &TileMap) -> Result<f64, ApmError> {
    model.score_map(map)
}

/// Trains on whole maps labelled with vote shares.
pub fn train_post(model: &PostModel, samples: &[(Grid, f32)], cfg: &TrainConfig) -> Result<PostModel, ApmError> {
    if samples.is_empty() {
        return Err(ApmError::EmptySamples);
    }
    if let Some((g, _)) = samples.iter().find(|(g, _)| g.size() != model.fixed_size) {
        return Err(ApmError::SizeMismatch {
            expected: model.fixed_size,
            got: g.size(),
        });
    }
    let mut next = model.clone();
    let labels: Vec<f32> = samples.iter().map(|(_, y)| *y).collect();
    fit(
        &mut next.net,
        &labels,
        |i, dst| {
            let enc = one_hot_encode::<f32>(&samples[i].0);
            dst.copy_from_slice(&enc);
        },
        cfg,
        cfg.seed ^ model.version.wrapping_mul(0x9E37_79B9_7F4A_7C15),
    )?;
    next.version = model.version + 1;
    Ok(next)
}
