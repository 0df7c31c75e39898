//! Evolves a map against the scorer with the (μ+λ) algorithm and prints the
//! per-generation best and mean fitness of each trial.
//!
//! Uses the latest checkpoint under `data/checkpoints` when present,
//! otherwise a freshly initialised scorer.
//!
//! ```text
//! cargo run --release -p aesthevo-core --example evolve_map -- [TILESET]
//! ```

use std::path::Path;

use aesthevo::apm::{build_apm, load_latest};
use aesthevo::corpus::generate_user_map;
use aesthevo::evolve::{evolve, ApmFitness, EvolutionConfig, FinalCriterion, RunContext};
use aesthevo::experiments::experiment_epoch;
use aesthevo::synthvoter::SynthConfig;
use aesthevo::PatternLibrary;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let t = std::env::args().nth(1).unwrap_or_else(|| "dungeon".to_string());
    let model = load_latest(Path::new("data/checkpoints"), &t).unwrap_or_else(|_| build_apm(&t, 0));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let now = experiment_epoch();
    let corpus: Vec<_> = (0..24).map(|i| generate_user_map(&t, &format!("c{i}"), None, now, &mut rng)).collect();
    let library = PatternLibrary::from_grids(&t, corpus.iter().map(|m| &m.grid), 2)?;
    let cfg = EvolutionConfig {
        generations: 60,
        trials: 3,
        final_criterion: FinalCriterion::EntropyAndPseudo,
        seed: 11,
        ..EvolutionConfig::desk()
    };
    let mut fitness = ApmFitness::new(&model);
    let run = evolve(
        &mut fitness,
        &library,
        &library,
        &cfg,
        RunContext {
            tileset_id: &t,
            map_id: "evolved".to_string(),
            model_version: Some(model.version),
            now,
            synth: SynthConfig::default(),
        },
    )?;
    for trial in &run.report.trials {
        println!("trial {} best {:.4} size {}", trial.trial, trial.best_fitness, trial.best_size);
        for g in trial.generations.iter().step_by(10) {
            println!("  gen {:>3} best {:.4} mean {:.4}", g.generation, g.best, g.mean);
        }
    }
    println!("selected trial {} ({:?})", run.report.selected_trial, run.report.criterion);
    for row in run.map.grid.rows() {
        println!("{}", row.iter().map(|c| format!("{c:x}")).collect::<String>());
    }
    Ok(())
}
