//! μ+λ evolution of tile maps with an APM (or any [`Fitness`]) as the
//! objective and 2×2 pattern stamping as the only mutation.

use std::collections::HashMap;

use chrono::{DateTime, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::apm::ApmModel;
use crate::synthvoter::{pseudo_score_grid, tile_entropy, SynthConfig};
use crate::tilemap::{grid_windows, Grid, Origin, PatternLibrary, TileMap, MAX_MAP_SIZE, MIN_MAP_SIZE};
use crate::tileset::TILE_COUNT;
use crate::util::derive_seed;

#[derive(Debug, Error, PartialEq)]
pub enum EvolveError {
    #[error("pattern library is empty")]
    EmptyLibrary,
    #[error("no candidates to select from")]
    EmptyCandidates,
    #[error("invalid evolution config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FinalCriterion {
    ApmOnly,
    Entropy,
    Pseudo,
    #[default]
    EntropyAndPseudo,
}

impl std::str::FromStr for FinalCriterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "apm_only" | "apm" => Ok(FinalCriterion::ApmOnly),
            "entropy" => Ok(FinalCriterion::Entropy),
            "pseudo" => Ok(FinalCriterion::Pseudo),
            "entropy_and_pseudo" => Ok(FinalCriterion::EntropyAndPseudo),
            other => Err(format!("unknown final criterion {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub mu_fraction: f64,
    pub lambda_fraction: f64,
    pub generations: usize,
    pub trials: usize,
    pub block_mutation_rate: f64,
    pub dim_mutation_rate: f64,
    pub min_size: usize,
    pub max_size: usize,
    pub final_criterion: FinalCriterion,
    /// Tile used when a map grows; set from the tileset's empty index.
    pub pad_tile: u8,
    pub seed: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            population_size: 100,
            mu_fraction: 0.10,
            lambda_fraction: 0.90,
            generations: 500,
            trials: 5,
            block_mutation_rate: 0.02,
            dim_mutation_rate: 0.001,
            min_size: MIN_MAP_SIZE,
            max_size: MAX_MAP_SIZE,
            final_criterion: FinalCriterion::EntropyAndPseudo,
            pad_tile: 0,
            seed: 0,
        }
    }
}

impl EvolutionConfig {
    /// Reduced settings for closed-loop runs on a single core.
    pub fn desk() -> Self {
        EvolutionConfig {
            population_size: 30,
            generations: 40,
            trials: 2,
            ..EvolutionConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), EvolveError> {
        let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
        let ok = self.population_size >= 10
            && (self.mu_fraction + self.lambda_fraction - 1.0).abs() < 1e-9
            && self.mu_fraction > 0.0
            && rate_ok(self.block_mutation_rate)
            && rate_ok(self.dim_mutation_rate)
            && MIN_MAP_SIZE <= self.min_size
            && self.min_size <= self.max_size
            && self.max_size <= MAX_MAP_SIZE
            && (self.pad_tile as usize) < TILE_COUNT;
        if ok {
            Ok(())
        } else {
            Err(EvolveError::BadConfig(format!("{self:?}")))
        }
    }

    pub fn elite_count(&self) -> usize {
        ((self.mu_fraction * self.population_size as f64) - 1e-9).ceil() as usize
    }

    pub fn offspring_count(&self) -> usize {
        self.population_size - self.elite_count()
    }
}

/// Anything that scores a grid; higher is better.
pub trait Fitness {
    fn evaluate(&mut self, grid: &Grid) -> f64;
}

impl<F: FnMut(&Grid) -> f64> Fitness for F {
    fn evaluate(&mut self, grid: &Grid) -> f64 {
        self(grid)
    }
}

/// Frozen-model fitness with a per-window score cache.
pub struct ApmFitness<'a> {
    model: &'a ApmModel,
    cache: HashMap<u64, f32>,
    pub windows_scored: u64,
}

/// Cache entries kept before the cache is flushed.
const WINDOW_CACHE_LIMIT: usize = 2_000_000;

impl<'a> ApmFitness<'a> {
    pub fn new(model: &'a ApmModel) -> Self {
        ApmFitness {
            model,
            cache: HashMap::new(),
            windows_scored: 0,
        }
    }
}

impl Fitness for ApmFitness<'_> {
    fn evaluate(&mut self, grid: &Grid) -> f64 {
        let windows = grid_windows(grid);
        let mut missing: Vec<_> = windows
            .iter()
            .filter(|w| !self.cache.contains_key(&w.key()))
            .copied()
            .collect();
        missing.sort_by_key(|w| w.key());
        missing.dedup_by_key(|w| w.key());
        if !missing.is_empty() {
            if self.cache.len() + missing.len() > WINDOW_CACHE_LIMIT {
                self.cache.clear();
            }
            let scores = self.model.score_windows(&missing);
            self.windows_scored += missing.len() as u64;
            for (w, s) in missing.iter().zip(scores) {
                self.cache.insert(w.key(), s);
            }
        }
        let sum: f64 = windows.iter().map(|w| f64::from(self.cache[&w.key()])).sum();
        sum / windows.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    /// Creation order within a trial; lower wins fitness ties.
    pub serial: u64,
    pub grid: Grid,
    pub fitness: Option<f64>,
}

impl Individual {
    pub fn fitness(&self) -> f64 {
        self.fitness.unwrap_or(f64::NEG_INFINITY)
    }
}

fn rank(pop: &mut [Individual]) {
    pop.sort_by(|a, b| {
        b.fitness()
            .total_cmp(&a.fitness())
            .then(a.serial.cmp(&b.serial))
    });
}

/// Uniform random population; each side drawn from the size range and each
/// cell uniform over the 16 tiles. Unevaluated.
pub fn init_population<R: Rng>(cfg: &EvolutionConfig, rng: &mut R) -> Vec<Individual> {
    (0..cfg.population_size)
        .map(|i| {
            let size = rng.random_range(cfg.min_size..=cfg.max_size);
            let cells = (0..size * size).map(|_| rng.random_range(0..TILE_COUNT as u8)).collect();
            Individual {
                serial: i as u64,
                grid: Grid::new(size, cells).expect("in-range cells"),
                fitness: None,
            }
        })
        .collect()
}

/// Stamps library patterns over k×k positions and occasionally grows or
/// shrinks the map by one (bottom/right edge).
pub fn mutate<R: Rng>(grid: &Grid, library: &PatternLibrary, cfg: &EvolutionConfig, rng: &mut R) -> Result<Grid, EvolveError> {
    if library.is_empty() {
        return Err(EvolveError::EmptyLibrary);
    }
    let k = library.k;
    let mut out = grid.clone();
    let n = out.size();
    if cfg.block_mutation_rate > 0.0 && n >= k {
        for r in 0..=n - k {
            for c in 0..=n - k {
                if rng.random::<f64>() < cfg.block_mutation_rate {
                    let block = library.entries().choose(rng).expect("non-empty library");
                    out.stamp(r, c, k, block);
                }
            }
        }
    }
    if cfg.dim_mutation_rate > 0.0 && rng.random::<f64>() < cfg.dim_mutation_rate {
        let can_grow = n < cfg.max_size;
        let can_shrink = n > cfg.min_size;
        let grow = match (can_grow, can_shrink) {
            (true, true) => rng.random::<bool>(),
            (g, _) => g,
        };
        if grow && can_grow {
            out = out.resized(n + 1, cfg.pad_tile);
        } else if !grow && can_shrink {
            out = out.resized(n - 1, cfg.pad_tile);
        }
    }
    Ok(out)
}

pub fn evaluate_all<F: Fitness + ?Sized>(pop: &mut [Individual], fitness: &mut F) {
    for ind in pop.iter_mut().filter(|i| i.fitness.is_none()) {
        ind.fitness = Some(fitness.evaluate(&ind.grid));
    }
}

/// One generation: the top ⌈μN⌉ survive unchanged and the remaining slots are
/// filled with mutants of uniformly drawn parents. `next_serial` numbers the
/// mutants.
pub fn step_generation<F: Fitness + ?Sized, R: Rng>(
    pop: &[Individual],
    fitness: &mut F,
    library: &PatternLibrary,
    cfg: &EvolutionConfig,
    next_serial: &mut u64,
    rng: &mut R,
) -> Result<Vec<Individual>, EvolveError> {
    let mut ranked = pop.to_vec();
    evaluate_all(&mut ranked, fitness);
    rank(&mut ranked);
    let elites = cfg.elite_count().min(ranked.len());
    let mut next: Vec<Individual> = ranked[..elites].to_vec();
    for _ in 0..cfg.offspring_count() {
        let parent = pop.choose(rng).expect("non-empty population");
        let grid = mutate(&parent.grid, library, cfg, rng)?;
        next.push(Individual {
            serial: *next_serial,
            grid,
            fitness: None,
        });
        *next_serial += 1;
    }
    evaluate_all(&mut next, fitness);
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub best: Individual,
    pub history: Vec<GenerationStats>,
}

fn stats(generation: usize, pop: &[Individual]) -> GenerationStats {
    let best = pop.iter().map(Individual::fitness).fold(f64::NEG_INFINITY, f64::max);
    let mean = pop.iter().map(Individual::fitness).sum::<f64>() / pop.len() as f64;
    GenerationStats { generation, best, mean }
}

/// Initialise, run `cfg.generations` steps and return the best individual.
pub fn run_trial<F: Fitness + ?Sized, R: Rng>(
    fitness: &mut F,
    library: &PatternLibrary,
    cfg: &EvolutionConfig,
    rng: &mut R,
) -> Result<(Individual, Vec<GenerationStats>), EvolveError> {
    cfg.validate()?;
    if library.is_empty() {
        return Err(EvolveError::EmptyLibrary);
    }
    let mut pop = init_population(cfg, rng);
    evaluate_all(&mut pop, fitness);
    let mut history = vec![stats(0, &pop)];
    let mut next_serial = pop.len() as u64;
    for g in 1..=cfg.generations {
        pop = step_generation(&pop, fitness, library, cfg, &mut next_serial, rng)?;
        history.push(stats(g, &pop));
    }
    rank(&mut pop);
    Ok((pop.swap_remove(0), history))
}

/// Secondary score used to pick among the trial winners.
pub fn criterion_score(
    criterion: FinalCriterion,
    candidate: &Individual,
    corpus: &PatternLibrary,
    synth: &SynthConfig,
) -> f64 {
    match criterion {
        FinalCriterion::ApmOnly => candidate.fitness(),
        FinalCriterion::Entropy => tile_entropy(&candidate.grid),
        FinalCriterion::Pseudo => pseudo_score_grid(&candidate.grid, corpus, synth).votes_value,
        FinalCriterion::EntropyAndPseudo => {
            tile_entropy(&candidate.grid) * pseudo_score_grid(&candidate.grid, corpus, synth).votes_value
        }
    }
}

/// Index of the winning candidate; ties go to the earliest.
pub fn final_selection(
    candidates: &[Individual],
    corpus: &PatternLibrary,
    criterion: FinalCriterion,
    synth: &SynthConfig,
) -> Result<usize, EvolveError> {
    if candidates.is_empty() {
        return Err(EvolveError::EmptyCandidates);
    }
    let synth = synth.noiseless();
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, c) in candidates.iter().enumerate() {
        let s = criterion_score(criterion, c, corpus, &synth);
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub best_fitness: f64,
    pub best_size: usize,
    pub generations: Vec<GenerationStats>,
}

/// JSON run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionReport {
    pub tileset: String,
    pub seed: u64,
    pub criterion: FinalCriterion,
    pub model_version: Option<u64>,
    pub config: EvolutionConfig,
    pub trials: Vec<TrialReport>,
    pub selected_trial: usize,
    pub selected_map_id: String,
    pub selected_fitness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionRun {
    pub map: TileMap,
    pub fitness: f64,
    pub candidates: Vec<Individual>,
    pub report: EvolutionReport,
}

/// Metadata stamped onto the selected map.
#[derive(Debug, Clone)]
pub struct RunContext<'a> {
    pub tileset_id: &'a str,
    pub map_id: String,
    pub model_version: Option<u64>,
    pub now: DateTime<Utc>,
    pub synth: SynthConfig,
}

/// Full run: `cfg.trials` independent trials, then final selection among
/// their winners. `corpus` feeds the secondary criteria.
pub fn evolve<F: Fitness + ?Sized>(
    fitness: &mut F,
    library: &PatternLibrary,
    corpus: &PatternLibrary,
    cfg: &EvolutionConfig,
    ctx: RunContext<'_>,
) -> Result<EvolutionRun, EvolveError> {
    cfg.validate()?;
    if cfg.trials == 0 {
        return Err(EvolveError::EmptyCandidates);
    }
    let mut candidates = Vec::with_capacity(cfg.trials);
    let mut trials = Vec::with_capacity(cfg.trials);
    for t in 0..cfg.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, t as u64));
        let (best, history) = run_trial(fitness, library, cfg, &mut rng)?;
        trials.push(TrialReport {
            trial: t,
            best_fitness: best.fitness(),
            best_size: best.grid.size(),
            generations: history,
        });
        candidates.push(best);
    }
    let winner = final_selection(&candidates, corpus, cfg.final_criterion, &ctx.synth)?;
    let chosen = &candidates[winner];
    let map = TileMap::new(ctx.map_id.clone(), ctx.tileset_id, chosen.grid.clone(), Origin::Generated, ctx.now)
        .expect("evolved maps stay within size bounds")
        .with_model_version(ctx.model_version);
    let report = EvolutionReport {
        tileset: ctx.tileset_id.to_string(),
        seed: cfg.seed,
        criterion: cfg.final_criterion,
        model_version: ctx.model_version,
        config: *cfg,
        trials,
        selected_trial: winner,
        selected_map_id: ctx.map_id,
        selected_fitness: chosen.fitness(),
    };
    Ok(EvolutionRun {
        map,
        fitness: chosen.fitness(),
        candidates,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apm::build_apm;
    use crate::synthvoter::pseudo_score_grid;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn library(blocks: &[[u8; 4]]) -> PatternLibrary {
        let grids: Vec<Grid> = blocks.iter().map(|b| Grid::new(2, b.to_vec()).unwrap()).collect();
        PatternLibrary::from_grids("dungeon", grids.iter(), 2).unwrap()
    }

    fn frac_of(tile: u8) -> impl FnMut(&Grid) -> f64 {
        move |g: &Grid| g.cells().iter().filter(|&&c| c == tile).count() as f64 / g.cells().len() as f64
    }

    #[test]
    fn default_population() {
        let cfg = EvolutionConfig::default();
        let pop = init_population(&cfg, &mut rng(1));
        assert_eq!(pop.len(), 100);
        assert!(pop.iter().all(|i| (6..=12).contains(&i.grid.size())));
        assert_eq!(pop, init_population(&cfg, &mut rng(1)));
        assert_eq!(cfg.elite_count(), 10);
        assert_eq!(cfg.offspring_count(), 90);
    }

    #[test]
    fn cell_histogram_is_uniform() {
        let cfg = EvolutionConfig {
            population_size: 1300,
            ..EvolutionConfig::default()
        };
        let pop = init_population(&cfg, &mut rng(2));
        let mut hist = [0f64; 16];
        for ind in &pop {
            for &c in ind.grid.cells() {
                hist[c as usize] += 1.0;
            }
        }
        let n: f64 = hist.iter().sum();
        assert!(n >= 1e5, "{n}");
        let e = n / 16.0;
        let chi2: f64 = hist.iter().map(|o| (o - e) * (o - e) / e).sum();
        // chi-square 15 dof, alpha 0.01
        assert!(chi2 < 30.578, "{chi2}");
    }

    #[test]
    fn mutate_identity_and_full_stamp() {
        let lib = library(&[[7, 7, 7, 7]]);
        let g = init_population(&EvolutionConfig::default(), &mut rng(3))[0].grid.clone();
        let off = EvolutionConfig {
            block_mutation_rate: 0.0,
            dim_mutation_rate: 0.0,
            ..EvolutionConfig::default()
        };
        assert_eq!(mutate(&g, &lib, &off, &mut rng(4)).unwrap(), g);
        let full = EvolutionConfig {
            block_mutation_rate: 1.0,
            ..off
        };
        let m = mutate(&g, &lib, &full, &mut rng(4)).unwrap();
        assert!(m.cells().iter().all(|&c| c == 7));
        let empty = PatternLibrary::from_grids("dungeon", [&Grid::filled(1, 0)], 2).unwrap();
        assert_eq!(mutate(&g, &empty, &off, &mut rng(4)), Err(EvolveError::EmptyLibrary));
    }

    #[test]
    fn dimension_change_rate() {
        let lib = library(&[[1, 2, 3, 4]]);
        let cfg = EvolutionConfig {
            block_mutation_rate: 0.0,
            pad_tile: 9,
            ..EvolutionConfig::default()
        };
        let g = Grid::filled(9, 5);
        let mut r = rng(5);
        let mut changed = 0;
        for _ in 0..100_000 {
            let m = mutate(&g, &lib, &cfg, &mut r).unwrap();
            if m.size() != 9 {
                changed += 1;
                assert!(m.size() == 8 || m.size() == 10);
                if m.size() == 10 {
                    assert_eq!(m.get(9, 9), 9);
                    assert_eq!(m.get(0, 0), 5);
                }
            }
        }
        // binomial(1e5, 0.001): mean 100, sd ~10; 99.9% interval
        assert!((67..=133).contains(&changed), "{changed}");
    }

    #[test]
    fn size_stays_in_bounds() {
        let lib = library(&[[1, 2, 3, 4]]);
        let cfg = EvolutionConfig {
            dim_mutation_rate: 1.0,
            ..EvolutionConfig::default()
        };
        let mut r = rng(6);
        for start in [6, 12] {
            let mut g = Grid::filled(start, 0);
            for _ in 0..200 {
                g = mutate(&g, &lib, &cfg, &mut r).unwrap();
                assert!((6..=12).contains(&g.size()));
            }
        }
    }

    #[test]
    fn generation_keeps_elites() {
        let cfg = EvolutionConfig::default();
        let lib = library(&[[3, 3, 3, 3], [0, 1, 2, 3]]);
        let mut fit = frac_of(3);
        let mut pop = init_population(&cfg, &mut rng(7));
        evaluate_all(&mut pop, &mut fit);
        let mut serial = pop.len() as u64;
        let mut r = rng(8);
        let mut best = stats(0, &pop).best;
        for _ in 0..20 {
            let next = step_generation(&pop, &mut fit, &lib, &cfg, &mut serial, &mut r).unwrap();
            assert_eq!(next.len(), 100);
            assert_eq!(next.iter().filter(|i| i.serial < serial - 90).count(), 10);
            let b = stats(0, &next).best;
            assert!(b >= best);
            best = b;
            pop = next;
        }
    }

    #[test]
    fn zero_rates_only_clone() {
        let cfg = EvolutionConfig {
            block_mutation_rate: 0.0,
            dim_mutation_rate: 0.0,
            ..EvolutionConfig::default()
        };
        let lib = library(&[[3, 3, 3, 3]]);
        let mut fit = frac_of(3);
        let mut pop = init_population(&cfg, &mut rng(9));
        evaluate_all(&mut pop, &mut fit);
        let mut serial = 100;
        let next = step_generation(&pop, &mut fit, &lib, &cfg, &mut serial, &mut rng(10)).unwrap();
        let mut pool: Vec<u64> = pop.iter().map(|i| i.fitness().to_bits()).collect();
        pool.sort();
        for ind in &next {
            assert!(pool.binary_search(&ind.fitness().to_bits()).is_ok());
        }
    }

    #[test]
    fn ties_prefer_lower_serial() {
        let mut pop: Vec<Individual> = (0..4)
            .map(|s| Individual {
                serial: 10 - s,
                grid: Grid::filled(6, 0),
                fitness: Some(0.5),
            })
            .collect();
        rank(&mut pop);
        assert_eq!(pop[0].serial, 7);
    }

    #[test]
    fn zero_generations_returns_initial_best() {
        let cfg = EvolutionConfig {
            generations: 0,
            ..EvolutionConfig::default()
        };
        let lib = library(&[[3, 3, 3, 3]]);
        let mut fit = frac_of(3);
        let (best, hist) = run_trial(&mut fit, &lib, &cfg, &mut rng(11)).unwrap();
        let mut init = init_population(&cfg, &mut rng(11));
        evaluate_all(&mut init, &mut frac_of(3));
        rank(&mut init);
        assert_eq!(best, init[0]);
        assert_eq!(hist.len(), 1);
    }

    #[test]
    fn planted_optimum_is_found() {
        let cfg = EvolutionConfig {
            generations: 200,
            ..EvolutionConfig::default()
        };
        let lib = library(&[[3, 3, 3, 3]]);
        for seed in 0..5 {
            let mut fit = frac_of(3);
            let (best, hist) = run_trial(&mut fit, &lib, &cfg, &mut rng(100 + seed)).unwrap();
            assert!(best.fitness() > 0.95, "seed {seed}: {}", best.fitness());
            assert!(hist.windows(2).all(|w| w[1].best >= w[0].best));
        }
    }

    #[test]
    fn trial_is_deterministic() {
        let cfg = EvolutionConfig {
            generations: 15,
            ..EvolutionConfig::default()
        };
        let model = build_apm("dungeon", 3);
        let lib = library(&[[3, 3, 3, 3], [1, 2, 1, 2]]);
        let a = run_trial(&mut ApmFitness::new(&model), &lib, &cfg, &mut rng(12)).unwrap();
        let b = run_trial(&mut ApmFitness::new(&model), &lib, &cfg, &mut rng(12)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cached_fitness_equals_model_score() {
        let model = build_apm("dungeon", 5);
        let mut fit = ApmFitness::new(&model);
        for ind in init_population(&EvolutionConfig::default(), &mut rng(13)).iter().take(10) {
            let direct = model.score_grid(&ind.grid);
            assert!((fit.evaluate(&ind.grid) - direct).abs() < 1e-9);
            assert!((fit.evaluate(&ind.grid) - direct).abs() < 1e-9);
        }
    }

    fn cand(grid: Grid, fitness: f64) -> Individual {
        Individual {
            serial: 0,
            grid,
            fitness: Some(fitness),
        }
    }

    #[test]
    fn selection_criteria() {
        let corpus = library(&[[0, 1, 2, 3], [4, 5, 6, 7]]);
        let synth = SynthConfig::default();
        let flat = cand(Grid::filled(6, 2), 0.9);
        let mixed = cand(Grid::new(6, (0..36).map(|i| (i % 8) as u8).collect()).unwrap(), 0.4);
        let only = [flat.clone()];
        for c in [
            FinalCriterion::ApmOnly,
            FinalCriterion::Entropy,
            FinalCriterion::Pseudo,
            FinalCriterion::EntropyAndPseudo,
        ] {
            assert_eq!(final_selection(&only, &corpus, c, &synth), Ok(0));
        }
        let both = [flat, mixed];
        assert_eq!(final_selection(&both, &corpus, FinalCriterion::ApmOnly, &synth), Ok(0));
        assert_eq!(final_selection(&both, &corpus, FinalCriterion::Entropy, &synth), Ok(1));
        assert_eq!(
            final_selection(&[], &corpus, FinalCriterion::Entropy, &synth),
            Err(EvolveError::EmptyCandidates)
        );
        let tie = [cand(Grid::filled(6, 1), 0.5), cand(Grid::filled(6, 2), 0.5)];
        assert_eq!(final_selection(&tie, &corpus, FinalCriterion::ApmOnly, &synth), Ok(0));
    }

    #[test]
    fn entropy_and_pseudo_matches_brute_force() {
        let corpus = library(&[[0, 1, 2, 3], [4, 5, 6, 7], [3, 3, 3, 3]]);
        let synth = SynthConfig::default();
        let pop = init_population(&EvolutionConfig::default(), &mut rng(14));
        let cands: Vec<Individual> = pop.into_iter().take(8).collect();
        let brute = cands
            .iter()
            .map(|c| {
                let mut h = [0f64; 16];
                c.grid.cells().iter().for_each(|&t| h[t as usize] += 1.0);
                let n = c.grid.cells().len() as f64;
                let ent = -h.iter().filter(|&&x| x > 0.0).map(|x| (x / n) * (x / n).ln()).sum::<f64>() / 16f64.ln();
                ent * pseudo_score_grid(&c.grid, &corpus, &synth.noiseless()).votes_value
            })
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, s)| if s > acc.1 { (i, s) } else { acc })
            .0;
        assert_eq!(
            final_selection(&cands, &corpus, FinalCriterion::EntropyAndPseudo, &synth),
            Ok(brute)
        );
    }

    #[test]
    fn selection_is_scale_invariant() {
        let corpus = library(&[[0, 1, 2, 3]]);
        let synth = SynthConfig::default();
        let pop = init_population(&EvolutionConfig::default(), &mut rng(15));
        let base: Vec<Individual> = pop.iter().take(5).enumerate().map(|(i, p)| cand(p.grid.clone(), 0.1 * i as f64 % 0.35)).collect();
        let scaled: Vec<Individual> = base.iter().map(|c| cand(c.grid.clone(), c.fitness() * 7.5)).collect();
        assert_eq!(
            final_selection(&base, &corpus, FinalCriterion::ApmOnly, &synth),
            final_selection(&scaled, &corpus, FinalCriterion::ApmOnly, &synth)
        );
        let many = SynthConfig {
            voters_per_poll: 280,
            ..synth
        };
        assert_eq!(
            final_selection(&base, &corpus, FinalCriterion::Pseudo, &synth),
            final_selection(&base, &corpus, FinalCriterion::Pseudo, &many)
        );
    }

    #[test]
    fn run_report_serialises() {
        let cfg = EvolutionConfig {
            generations: 3,
            trials: 2,
            population_size: 10,
            ..EvolutionConfig::default()
        };
        let lib = library(&[[3, 3, 3, 3]]);
        let mut fit = frac_of(3);
        let ctx = RunContext {
            tileset_id: "dungeon",
            map_id: "m000001".into(),
            model_version: Some(4),
            now: "2022-05-02T09:00:00Z".parse().unwrap(),
            synth: SynthConfig::default(),
        };
        let run = evolve(&mut fit, &lib, &lib, &cfg, ctx).unwrap();
        assert_eq!(run.map.origin, Origin::Generated);
        assert_eq!(run.map.model_version, Some(4));
        assert_eq!(run.report.trials.len(), 2);
        assert_eq!(run.report.trials[0].generations.len(), 4);
        let json = serde_json::to_string(&run.report).unwrap();
        let back: EvolutionReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, run.report);
        assert!(json.contains("\"entropy_and_pseudo\""));
    }
}
