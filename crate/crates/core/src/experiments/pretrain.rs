//! Two-phase pretraining with the synthetic voter.
//!
//! Phase 1 pairs seed-corpus maps against uniformly random maps and trains
//! once on the pooled labels. Phase 2 runs short evolution cycles in which
//! the synthetic voter judges each evolved map against a corpus map; each
//! cycle retrains on the pooled samples of all polls so far.

use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{experiment_epoch, ExperimentError, ExperimentReport};
use crate::apm::{build_apm, build_training_set, train_update, ApmModel, Tally, TrainConfig, TrainingSample};
use crate::corpus::random_map;
use crate::evolve::{evolve, ApmFitness, EvolutionConfig, RunContext};
use crate::synthvoter::{simulate_poll, SynthConfig};
use crate::tilemap::{PatternLibrary, TileMap};
use crate::util::{derive_seed, mean};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    /// User-vs-random pairings in phase 1.
    pub pairs: usize,
    /// Evolve-and-judge cycles in phase 2.
    pub cycles: usize,
    pub evolution: EvolutionConfig,
    pub train: TrainConfig,
    /// Training after each phase-2 cycle, over every sample seen so far.
    pub cycle_train: TrainConfig,
    pub synth: SynthConfig,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            pairs: 240,
            cycles: 8,
            evolution: EvolutionConfig::desk(),
            train: TrainConfig::default(),
            cycle_train: TrainConfig {
                epochs_per_update: 1,
                ..TrainConfig::default()
            },
            synth: SynthConfig::default(),
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub model: ApmModel,
    pub report: ExperimentReport,
}

/// Label statistics for one phase.
#[derive(Debug, Clone, Default)]
struct PhaseStats {
    polls: usize,
    user_share: Vec<f64>,
    other_share: Vec<f64>,
}

impl PhaseStats {
    fn means(&self) -> (Option<f64>, Option<f64>) {
        (mean(&self.user_share), mean(&self.other_share))
    }
}

/// Pretrains a fresh APM for `tileset_id` from its seed corpus.
pub fn pretrain(tileset_id: &str, corpus: &[TileMap], cfg: &PretrainConfig) -> Result<PretrainOutcome, ExperimentError> {
    let started = Instant::now();
    if corpus.is_empty() {
        return Err(ExperimentError::EmptyCorpus(tileset_id.to_string()));
    }
    cfg.synth.validate()?;
    cfg.train.validate()?;
    cfg.cycle_train.validate()?;
    cfg.evolution.validate()?;
    let library = PatternLibrary::from_grids(tileset_id, corpus.iter().map(|m| &m.grid), 2)?;
    let synth_lib = PatternLibrary::from_grids(tileset_id, corpus.iter().map(|m| &m.grid), cfg.synth.k)?;
    let now = experiment_epoch();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1));
    let mut model = build_apm(tileset_id, derive_seed(cfg.seed, 0));

    let mut phase1 = PhaseStats::default();
    let mut samples: Vec<TrainingSample> = Vec::new();
    for i in 0..cfg.pairs {
        let user = corpus.choose(&mut rng).expect("non-empty corpus");
        let random = random_map(tileset_id, &format!("pretrain-random-{i}"), now, &mut rng);
        let synth = cfg.synth.with_seed(derive_seed(cfg.seed, 1000 + i as u64));
        let user_first = rng.random::<bool>();
        let (a, b) = if user_first { (user, &random) } else { (&random, user) };
        let poll = simulate_poll(a, b, &synth_lib, &synth)?;
        let tally = Tally {
            votes_a: poll.votes_a,
            votes_b: poll.votes_b,
        };
        let Ok(batch) = build_training_set(tally, a, b) else { continue };
        let (ya, yb) = tally.shares().expect("non-empty tally");
        let (yu, yr) = if user_first { (ya, yb) } else { (yb, ya) };
        phase1.polls += 1;
        phase1.user_share.push(yu as f64);
        phase1.other_share.push(yr as f64);
        samples.extend(batch);
    }
    if !samples.is_empty() {
        let train = TrainConfig {
            seed: derive_seed(cfg.seed, 2),
            ..cfg.train
        };
        model = train_update(&model, &samples, &train)?;
        model.trained_pairings += phase1.polls as u64;
    }

    let mut phase2 = PhaseStats::default();
    for c in 0..cfg.cycles {
        let evo = EvolutionConfig {
            seed: derive_seed(cfg.seed, 10_000 + c as u64),
            ..cfg.evolution
        };
        let run = {
            let mut fitness = ApmFitness::new(&model);
            evolve(
                &mut fitness,
                &library,
                &synth_lib,
                &evo,
                RunContext {
                    tileset_id,
                    map_id: format!("pretrain-gen-{c}"),
                    model_version: Some(model.version),
                    now,
                    synth: cfg.synth,
                },
            )?
        };
        let user = corpus.choose(&mut rng).expect("non-empty corpus");
        let synth = cfg.synth.with_seed(derive_seed(cfg.seed, 20_000 + c as u64));
        let poll = simulate_poll(user, &run.map, &synth_lib, &synth)?;
        let tally = Tally {
            votes_a: poll.votes_a,
            votes_b: poll.votes_b,
        };
        let Ok(batch) = build_training_set(tally, user, &run.map) else { continue };
        samples.extend(batch);
        let (yu, yg) = tally.shares().expect("non-empty tally");
        phase2.polls += 1;
        phase2.user_share.push(yu as f64);
        phase2.other_share.push(yg as f64);
        let train = TrainConfig {
            seed: derive_seed(cfg.seed, 30_000 + c as u64),
            ..cfg.cycle_train
        };
        model = train_update(&model, &samples, &train)?;
        model.trained_pairings += 1;
    }

    let mut report = ExperimentReport::new(
        "pretrain",
        cfg.seed,
        serde_json::json!({ "tileset": tileset_id, "corpus_maps": corpus.len(), "pretrain": cfg }),
        &["phase", "opponent"],
        &["polls", "user_share", "opponent_share"],
    );
    for (name, opponent, stats) in [("1", "random", &phase1), ("2", "generated", &phase2)] {
        let (u, o) = stats.means();
        report.push(&[name, opponent], vec![Some(stats.polls as f64), u, o]);
    }
    report.notes.push(format!(
        "model {} version {} after {} pairings ({} parameters)",
        model.tileset_id,
        model.version,
        model.trained_pairings,
        model.param_count()
    ));
    report.runtime_secs = started.elapsed().as_secs_f64();
    Ok(PretrainOutcome { model, report })
}
