//! Sliding-window APM versus the fixed-input POST network on per-map vote
//! shares, for 6×6 and 10×10 maps.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ExperimentError, ExperimentReport};
use crate::apm::{build_apm, build_post_network, map_samples, train_post, train_update, TrainConfig, POST_SIZES};
use crate::corpus::{generate_user_grid, random_grid};
use crate::evolve::{mutate, EvolutionConfig};
use crate::pollhub::{HubState, PollState};
use crate::synthvoter::{simulate_grids, SynthConfig};
use crate::tilemap::{Grid, PatternLibrary, MAX_MAP_SIZE, MIN_MAP_SIZE};
use crate::util::{derive_seed, mean};

/// One closed poll with both maps and its tally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollSample {
    pub poll_id: String,
    pub a: Grid,
    pub b: Grid,
    pub votes_a: u32,
    pub votes_b: u32,
}

impl PollSample {
    /// (map, vote share) for each side; empty without votes.
    pub fn labelled(&self) -> Vec<(&Grid, f32)> {
        let total = self.votes_a + self.votes_b;
        if total == 0 {
            return Vec::new();
        }
        vec![
            (&self.a, self.votes_a as f32 / total as f32),
            (&self.b, self.votes_b as f32 / total as f32),
        ]
    }
}

/// Closed, voted polls of one tileset from a poll store.
pub fn polls_from_state(state: &HubState, tileset: &str) -> Vec<PollSample> {
    state
        .polls
        .values()
        .filter(|p| p.tileset_id == tileset && p.state != PollState::Open && p.tally().total() > 0)
        .map(|p| PollSample {
            poll_id: p.id.clone(),
            a: state.maps[&p.map_a_id].grid.clone(),
            b: state.maps[&p.map_b_id].grid.clone(),
            votes_a: p.votes_a,
            votes_b: p.votes_b,
        })
        .collect()
}

/// Synthetic poll corpus: a user-style map against a machine map made by
/// stamping corpus patterns onto noise at a random rate, both sides sized
/// uniformly in [6, 12], tallied by the synthetic voter.
pub fn simulated_polls(
    tileset: &str,
    library: &PatternLibrary,
    n: usize,
    synth: &SynthConfig,
    seed: u64,
) -> Result<Vec<PollSample>, ExperimentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut polls = Vec::with_capacity(n);
    for i in 0..n {
        let su = rng.random_range(MIN_MAP_SIZE..=MAX_MAP_SIZE);
        let user = generate_user_grid(tileset, su, &mut rng);
        let sm = rng.random_range(MIN_MAP_SIZE..=MAX_MAP_SIZE);
        let stamping = EvolutionConfig {
            block_mutation_rate: rng.random::<f64>(),
            dim_mutation_rate: 0.0,
            ..EvolutionConfig::default()
        };
        let machine = mutate(&random_grid(sm, &mut rng), library, &stamping, &mut rng)?;
        let (a, b) = if rng.random::<bool>() { (user, machine) } else { (machine, user) };
        let tally = simulate_grids(&a, &b, library, &synth.with_seed(derive_seed(seed, i as u64)));
        polls.push(PollSample {
            poll_id: format!("sim{i:04}"),
            a,
            b,
            votes_a: tally.votes_a,
            votes_b: tally.votes_b,
        });
    }
    Ok(polls)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparePostConfig {
    pub tileset: String,
    pub sizes: Vec<usize>,
    pub polls: usize,
    pub train_fraction: f64,
    pub trials: usize,
    pub min_polls: usize,
    /// User maps (label 1) and random maps (label 0) per side of pretraining.
    pub pretrain_maps: usize,
    pub apm_train: TrainConfig,
    pub post_train: TrainConfig,
    pub synth: SynthConfig,
    pub seed: u64,
}

impl Default for ComparePostConfig {
    fn default() -> Self {
        ComparePostConfig {
            tileset: "dungeon".to_string(),
            sizes: POST_SIZES.to_vec(),
            polls: 500,
            train_fraction: 0.9,
            trials: 5,
            min_polls: 20,
            pretrain_maps: 60,
            apm_train: TrainConfig::default(),
            post_train: TrainConfig {
                batch_size: 16,
                epochs_per_update: 40,
                ..TrainConfig::default()
            },
            synth: SynthConfig::default(),
            seed: 0,
        }
    }
}

/// Mean absolute errors of one size, averaged over trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeResult {
    pub size: usize,
    pub polls: usize,
    pub maps: usize,
    pub apm_mae: f64,
    pub post_mae: f64,
    pub baseline_mae: f64,
}

fn mae(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / truth.len().max(1) as f64
}

/// Runs the comparison on `polls` and returns a table with one row per
/// network and one column per map size.
pub fn compare_post(polls: &[PollSample], cfg: &ComparePostConfig) -> Result<(ExperimentReport, Vec<SizeResult>), ExperimentError> {
    let started = Instant::now();
    let mut results = Vec::new();
    for &size in &cfg.sizes {
        let mut poll_ids = BTreeSet::new();
        let mut data: Vec<(Grid, f32)> = Vec::new();
        for p in polls {
            for (g, y) in p.labelled() {
                if g.size() == size {
                    poll_ids.insert(p.poll_id.clone());
                    data.push((g.clone(), y));
                }
            }
        }
        if poll_ids.len() < cfg.min_polls {
            return Err(ExperimentError::InsufficientData {
                cell: format!("{size}x{size}"),
                found: poll_ids.len(),
                needed: cfg.min_polls,
            });
        }
        let mut apm_err = Vec::new();
        let mut post_err = Vec::new();
        let mut base_err = Vec::new();
        for trial in 0..cfg.trials {
            let tseed = derive_seed(cfg.seed, (size as u64) << 16 | trial as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(tseed);
            let mut order: Vec<usize> = (0..data.len()).collect();
            order.shuffle(&mut rng);
            let n_train = ((data.len() as f64) * cfg.train_fraction).round() as usize;
            let n_train = n_train.clamp(1, data.len() - 1);
            let (train_idx, test_idx) = order.split_at(n_train);

            let mut pre: Vec<(Grid, f32)> = Vec::with_capacity(2 * cfg.pretrain_maps);
            for _ in 0..cfg.pretrain_maps {
                pre.push((generate_user_grid(&cfg.tileset, size, &mut rng), 1.0));
                pre.push((random_grid(size, &mut rng), 0.0));
            }
            let train: Vec<(Grid, f32)> = train_idx.iter().map(|&i| data[i].clone()).collect();
            let test: Vec<&(Grid, f32)> = test_idx.iter().map(|&i| &data[i]).collect();
            let truth: Vec<f64> = test.iter().map(|(_, y)| f64::from(*y)).collect();

            let apm_cfg = TrainConfig {
                seed: derive_seed(tseed, 1),
                ..cfg.apm_train
            };
            let windows = |set: &[(Grid, f32)]| set.iter().flat_map(|(g, y)| map_samples(g, *y)).collect::<Vec<_>>();
            let apm = build_apm(&cfg.tileset, derive_seed(tseed, 2));
            let apm = train_update(&apm, &windows(&pre), &apm_cfg)?;
            let apm = train_update(&apm, &windows(&train), &apm_cfg)?;
            let apm_pred: Vec<f64> = test.iter().map(|(g, _)| apm.score_grid(g)).collect();

            let post_cfg = TrainConfig {
                seed: derive_seed(tseed, 3),
                ..cfg.post_train
            };
            let post = build_post_network(&cfg.tileset, size, derive_seed(tseed, 4))?;
            let post = train_post(&post, &pre, &post_cfg)?;
            let post = train_post(&post, &train, &post_cfg)?;
            let post_pred = test.iter().map(|(g, _)| post.score_grid(g)).collect::<Result<Vec<_>, _>>()?;

            apm_err.push(mae(&apm_pred, &truth));
            post_err.push(mae(&post_pred, &truth));
            base_err.push(mae(&vec![0.5; truth.len()], &truth));
        }
        results.push(SizeResult {
            size,
            polls: poll_ids.len(),
            maps: data.len(),
            apm_mae: mean(&apm_err).unwrap_or(f64::NAN),
            post_mae: mean(&post_err).unwrap_or(f64::NAN),
            baseline_mae: mean(&base_err).unwrap_or(f64::NAN),
        });
    }

    let columns: Vec<String> = results.iter().map(|r| format!("{0}x{0}", r.size)).collect();
    let column_refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut report = ExperimentReport::new(
        "compare-post",
        cfg.seed,
        serde_json::json!({ "compare_post": cfg, "input_polls": polls.len() }),
        &["network"],
        &column_refs,
    );
    report.push(&["APM"], results.iter().map(|r| Some(r.apm_mae)).collect());
    report.push(&["POST"], results.iter().map(|r| Some(r.post_mae)).collect());
    report.push(&["constant 0.5"], results.iter().map(|r| Some(r.baseline_mae)).collect());
    for r in &results {
        report.notes.push(format!(
            "{0}x{0}: {1} maps from {2} polls, {3} trials, mean absolute error on the held-out {4:.0}%",
            r.size,
            r.maps,
            r.polls,
            cfg.trials,
            100.0 * (1.0 - cfg.train_fraction)
        ));
    }
    report.runtime_secs = started.elapsed().as_secs_f64();
    Ok((report, results))
}
