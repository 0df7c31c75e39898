//! Closed-loop simulation: the poll hub runs on a virtual clock with the
//! synthetic voter casting every ballot, and the generated maps' vote share
//! is tracked across cycles.

use std::path::Path;
use std::time::Instant;

use chrono::Duration;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{experiment_epoch, ExperimentError, ExperimentReport};
use crate::apm::{load_latest, save_checkpoint, ApmError, Tally, TrainConfig};
use crate::corpus::{generate_user_grid, generate_user_map};
use crate::evolve::EvolutionConfig;
use crate::pollhub::{CycleReport, Hub, HubConfig, PollRecord};
use crate::synthvoter::{simulate_grids, SynthConfig};
use crate::tilemap::{PatternLibrary, TileMap, MAX_MAP_SIZE, MIN_MAP_SIZE};
use crate::tileset::Registry;
use crate::util::{derive_seed, mean, ols_slope};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub tileset: String,
    pub cycles: usize,
    /// Fresh synthetic user submissions per cycle.
    pub user_maps_per_cycle: usize,
    pub homogeneous_chance: f64,
    pub poll_duration_secs: i64,
    pub evolution: EvolutionConfig,
    pub train: TrainConfig,
    pub replay_polls: usize,
    pub synth: SynthConfig,
    /// Size of the independent user-map pool that defines the synthetic
    /// voters' taste; 0 uses the seed corpus itself.
    pub taste_pool: usize,
    /// Cycles per row of the summary table.
    pub block: usize,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            tileset: "dungeon".to_string(),
            cycles: 200,
            user_maps_per_cycle: 1,
            homogeneous_chance: 0.10,
            poll_duration_secs: 3 * 3600,
            evolution: EvolutionConfig::desk(),
            train: TrainConfig::default(),
            replay_polls: 16,
            synth: SynthConfig::default(),
            taste_pool: 200,
            block: 20,
            seed: 0,
        }
    }
}

/// Generated-map vote share of one hybrid poll.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharePoint {
    pub cycle: usize,
    pub generated_share: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationOutcome {
    pub series: Vec<SharePoint>,
    /// Least-squares slope of generated share against cycle index.
    pub slope: Option<f64>,
    pub initial_version: u64,
    pub final_version: u64,
    pub cycles: Vec<CycleReport>,
    pub report: ExperimentReport,
}

/// Runs `cfg.cycles` cycles in a fresh hub under `work_dir`, starting from
/// the latest checkpoint under `checkpoints` and seeded with `seed_corpus`.
pub fn simulate(
    checkpoints: &Path,
    seed_corpus: &[TileMap],
    registry: &Registry,
    cfg: &SimulateConfig,
    work_dir: &Path,
) -> Result<SimulationOutcome, ExperimentError> {
    let started = Instant::now();
    let model = load_latest(checkpoints, &cfg.tileset).map_err(|e| match e {
        ApmError::MissingCheckpoint(p) => ExperimentError::MissingCheckpoint(p),
        other => other.into(),
    })?;
    let corpus: Vec<&TileMap> = seed_corpus.iter().filter(|m| m.tileset_id == cfg.tileset).collect();
    if corpus.is_empty() {
        return Err(ExperimentError::EmptyCorpus(cfg.tileset.clone()));
    }
    cfg.synth.validate()?;
    let taste = if cfg.taste_pool == 0 {
        PatternLibrary::from_grids(&cfg.tileset, corpus.iter().map(|m| &m.grid), cfg.synth.k)?
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 4));
        let pool: Vec<_> = (0..cfg.taste_pool)
            .map(|_| {
                let size = rng.random_range(MIN_MAP_SIZE..=MAX_MAP_SIZE);
                generate_user_grid(&cfg.tileset, size, &mut rng)
            })
            .collect();
        PatternLibrary::from_grids(&cfg.tileset, pool.iter(), cfg.synth.k)?
    };

    let hub_cfg = HubConfig {
        poll_duration_secs: cfg.poll_duration_secs.max(1),
        homogeneous_chance: cfg.homogeneous_chance,
        review_generated: false,
        repeat_user_maps: true,
        evolution: cfg.evolution,
        train: cfg.train,
        replay_polls: cfg.replay_polls,
        synth: cfg.synth,
        image_scale: 1,
        seed: derive_seed(cfg.seed, 1),
        admin_token: None,
    };
    let mut hub = Hub::open(work_dir, registry.clone(), hub_cfg)?;
    save_checkpoint(&hub.checkpoint_root(), &model)?;
    let mut now = experiment_epoch();
    for m in &corpus {
        hub.import_user_map(m, now)?;
    }
    let initial_version = hub.ensure_model(&cfg.tileset, now)?;

    let mut submitter = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2));
    let synth = cfg.synth;
    let vote_seed = derive_seed(cfg.seed, 3);
    let mut voters = |poll: &PollRecord, a: &TileMap, b: &TileMap| -> Tally {
        let tag = poll.id.trim_start_matches('p').parse::<u64>().unwrap_or(0);
        let p = simulate_grids(&a.grid, &b.grid, &taste, &synth.with_seed(derive_seed(vote_seed, tag)));
        Tally {
            votes_a: p.votes_a,
            votes_b: p.votes_b,
        }
    };

    let mut cycles = Vec::with_capacity(cfg.cycles);
    let mut series = Vec::new();
    for c in 0..cfg.cycles {
        for k in 0..cfg.user_maps_per_cycle {
            let fresh = generate_user_map(&cfg.tileset, &format!("sim-{c}-{k}"), Some("@synthetic"), now, &mut submitter);
            hub.import_user_map(&fresh, now)?;
        }
        let report = hub.run_cycle(&cfg.tileset, now, &mut voters)?;
        if let Some(share) = report.generated_share {
            series.push(SharePoint {
                cycle: c,
                generated_share: share,
            });
        }
        now = report.finished_at + Duration::seconds(1);
        cycles.push(report);
    }
    let final_version = hub.ensure_model(&cfg.tileset, now)?;
    let xs: Vec<f64> = series.iter().map(|p| p.cycle as f64).collect();
    let ys: Vec<f64> = series.iter().map(|p| p.generated_share).collect();
    let slope = ols_slope(&xs, &ys);

    let mut report = ExperimentReport::new(
        "simulate",
        cfg.seed,
        serde_json::json!({ "simulate": cfg }),
        &["cycles"],
        &["hybrid_polls", "generated_share"],
    );
    let block = cfg.block.max(1);
    for start in (0..cfg.cycles).step_by(block) {
        let end = (start + block).min(cfg.cycles);
        let shares: Vec<f64> = series
            .iter()
            .filter(|p| (start..end).contains(&p.cycle))
            .map(|p| p.generated_share)
            .collect();
        report.push(&[&format!("{start}-{}", end - 1)], vec![Some(shares.len() as f64), mean(&shares)]);
    }
    report.push(&["all"], vec![Some(series.len() as f64), mean(&ys)]);
    report.notes.push(match slope {
        Some(s) => format!("generated-share slope {s:+.6} per cycle"),
        None => "generated-share slope undefined (fewer than two hybrid polls)".to_string(),
    });
    report.notes.push(format!("model v{initial_version} -> v{final_version}"));
    report.runtime_secs = started.elapsed().as_secs_f64();
    Ok(SimulationOutcome {
        series,
        slope,
        initial_version,
        final_version,
        cycles,
        report,
    })
}
