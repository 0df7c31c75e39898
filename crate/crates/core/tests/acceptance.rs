//! Acceptance run. Prints one PASS/FAIL line per criterion. With
//! `ACCEPTANCE_STRICT=1` it exits nonzero when any selected criterion fails.
//!
//! ```text
//! cargo test --release -p aesthevo-core --test acceptance            # all
//! cargo test --release -p aesthevo-core --test acceptance -- 3 7     # a subset
//! ```

#[path = "support/poll_model.rs"]
mod poll_model;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use aesthevo::apm::{build_apm, gradient_check, save_checkpoint, ApmModel};
use aesthevo::corpus::load_map_dir;
use aesthevo::evolve::{evaluate_all, init_population, run_trial, step_generation, ApmFitness, EvolutionConfig};
use aesthevo::experiments::{
    compare_post, pretrain, simulate, simulated_polls, validate, ComparePostConfig, PretrainConfig, SimulateConfig,
    ValidateConfig, ValidationStage,
};
use aesthevo::synthvoter::{pattern_kl, tile_entropy};
use aesthevo::{Grid, PatternLibrary, Registry, TileMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TILESETS: [&str; 5] = ["creatures", "crew", "dungeon", "maze", "overworld"];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

fn maps(kind: &str, tileset: &str) -> Vec<TileMap> {
    load_map_dir(&assets().join(kind).join(tileset)).expect("shipped assets")
}

/// Pretrained models shared between criteria.
#[derive(Default)]
struct Pretrained {
    models: BTreeMap<String, ApmModel>,
}

impl Pretrained {
    fn get(&mut self, tileset: &str) -> &ApmModel {
        self.models
            .entry(tileset.to_string())
            .or_insert_with(|| pretrain(tileset, &maps("corpus", tileset), &PretrainConfig::default()).expect("pretrain").model)
    }
}

fn architecture() -> Outcome {
    let model = build_apm("dungeon", 0);
    let (out, shapes) = model.net.predict_traced(&vec![0.0f32; 4 * 4 * 16]);
    let expected: Vec<Vec<usize>> = vec![vec![2, 2, 64], vec![1, 1, 32], vec![1, 1, 16], vec![16], vec![1]];
    let params = model.param_count();
    let pass = shapes == expected && out.len() == 1 && (10_000..=20_000).contains(&params);
    outcome(pass, format!("shapes {shapes:?}, {params} parameters"))
}

fn gradients() -> Outcome {
    let started = Instant::now();
    let worst = (0..3).map(|s| gradient_check(s).max_error()).fold(0.0, f64::max);
    let secs = started.elapsed().as_secs_f64();
    outcome(
        worst < 1e-4 && secs < 60.0,
        format!("max relative error {worst:.2e} over 3 seeds in {secs:.1}s"),
    )
}

fn table_one(cache: &mut Pretrained) -> Outcome {
    let started = Instant::now();
    let mut stage = ValidationStage {
        name: "pretrained".to_string(),
        models: BTreeMap::new(),
    };
    let mut curated = BTreeMap::new();
    for t in TILESETS {
        stage.models.insert(t.to_string(), cache.get(t).clone());
        curated.insert(t.to_string(), maps("curated", t));
    }
    let secs = started.elapsed().as_secs_f64();
    let report = validate(&[stage], &curated, &ValidateConfig::default()).expect("validate");
    let mut good = 0;
    let mut cells = Vec::new();
    for t in TILESETS {
        let r = report.value(&["pretrained", t], "random").unwrap_or(f64::NAN);
        let u = report.value(&["pretrained", t], "user").unwrap_or(f64::NAN);
        if r < 0.30 && u > 0.60 {
            good += 1;
        }
        cells.push(format!("{t} {r:.3}/{u:.3}"));
    }
    outcome(
        good >= 4 && secs < 15.0 * 60.0,
        format!("{good}/5 tilesets (random/curated: {}) pretrained in {secs:.0}s", cells.join(", ")),
    )
}

fn closed_loop(cache: &mut Pretrained) -> Outcome {
    let tileset = "dungeon";
    let model = cache.get(tileset).clone();
    let tmp = tempfile::tempdir().expect("tempdir");
    let checkpoints = tmp.path().join("checkpoints");
    save_checkpoint(&checkpoints, &model).expect("checkpoint");
    let corpus = maps("corpus", tileset);
    let started = Instant::now();
    let mut slopes = Vec::new();
    for seed in 0..5 {
        let cfg = SimulateConfig {
            tileset: tileset.to_string(),
            cycles: 200,
            seed,
            ..SimulateConfig::default()
        };
        let out = simulate(&checkpoints, &corpus, &Registry::builtin(), &cfg, &tmp.path().join(format!("hub{seed}")))
            .expect("simulate");
        slopes.push(out.slope.unwrap_or(f64::NAN));
    }
    let secs = started.elapsed().as_secs_f64();
    let positive = slopes.iter().filter(|s| **s > 0.0).count();
    let listed: Vec<String> = slopes.iter().map(|s| format!("{s:+.2e}")).collect();
    outcome(
        positive >= 4 && secs < 30.0 * 60.0,
        format!("{positive}/5 positive slopes [{}] in {secs:.0}s", listed.join(", ")),
    )
}

fn frac_of(tile: u8) -> impl FnMut(&Grid) -> f64 {
    move |g: &Grid| g.cells().iter().filter(|&&c| c == tile).count() as f64 / g.cells().len() as f64
}

fn evolution() -> Outcome {
    let corpus = maps("corpus", "dungeon");
    let library = PatternLibrary::from_grids("dungeon", corpus.iter().map(|m| &m.grid), 2).expect("library");
    let cfg = EvolutionConfig {
        generations: 100,
        ..EvolutionConfig::default()
    };

    // elitism under a frozen model: best never drops, elites carried verbatim
    let model = build_apm("dungeon", 4);
    let mut fitness = ApmFitness::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut pop = init_population(&cfg, &mut rng);
    evaluate_all(&mut pop, &mut fitness);
    let mut serial = pop.len() as u64;
    let mut monotone = true;
    let mut split_ok = cfg.elite_count() == 10 && cfg.offspring_count() == 90;
    for _ in 0..cfg.generations {
        let best = pop.iter().map(|i| i.fitness()).fold(f64::NEG_INFINITY, f64::max);
        let mut ranked = pop.clone();
        ranked.sort_by(|a, b| b.fitness().total_cmp(&a.fitness()).then(a.serial.cmp(&b.serial)));
        let next = step_generation(&pop, &mut fitness, &library, &cfg, &mut serial, &mut rng).expect("step");
        let next_best = next.iter().map(|i| i.fitness()).fold(f64::NEG_INFINITY, f64::max);
        monotone &= next_best >= best;
        let carried = next.iter().filter(|i| i.serial < serial - 90).count();
        split_ok &= next.len() == 100 && carried == 10 && next[..10] == ranked[..10];
        pop = next;
    }

    // planted optimum: fraction of tile 3 with a library holding only 3s
    let planted = PatternLibrary::from_grids("dungeon", [&Grid::filled(2, 3)], 2).expect("library");
    let planted_cfg = EvolutionConfig {
        generations: 200,
        ..EvolutionConfig::default()
    };
    let bests: Vec<f64> = (0..5)
        .map(|s| {
            let (best, _) = run_trial(&mut frac_of(3), &planted, &planted_cfg, &mut ChaCha8Rng::seed_from_u64(100 + s)).expect("trial");
            best.fitness()
        })
        .collect();
    let reached = bests.iter().filter(|b| **b > 0.95).count();
    let listed: Vec<String> = bests.iter().map(|b| format!("{b:.3}")).collect();
    outcome(
        monotone && split_ok && reached == 5,
        format!(
            "monotone over 100 generations: {monotone}; 10/90 split: {split_ok}; planted optimum > 0.95 in {reached}/5 [{}]",
            listed.join(", ")
        ),
    )
}

/// Histogram oracle with string keys and explicit union and normalisation.
fn brute_kl(map: &[Vec<u8>], corpus: &[Vec<Vec<u8>>], k: usize, eps: f64) -> f64 {
    fn hist(g: &[Vec<u8>], k: usize, into: &mut HashMap<String, f64>) {
        let n = g.len();
        if n < k {
            return;
        }
        for r in 0..=n - k {
            for c in 0..=n - k {
                let mut key = String::new();
                for dr in 0..k {
                    for dc in 0..k {
                        key.push_str(&format!("{},", g[r + dr][c + dc]));
                    }
                }
                *into.entry(key).or_insert(0.0) += 1.0;
            }
        }
    }
    let mut p = HashMap::new();
    hist(map, k, &mut p);
    let mut q = HashMap::new();
    for g in corpus {
        hist(g, k, &mut q);
    }
    let pt: f64 = p.values().sum();
    let qt: f64 = q.values().sum();
    let mut union: Vec<&String> = p.keys().chain(q.keys()).collect();
    union.sort();
    union.dedup();
    let mut ps: Vec<f64> = union.iter().map(|k| p.get(*k).copied().unwrap_or(0.0) / pt + eps).collect();
    let mut qs: Vec<f64> = union.iter().map(|k| q.get(*k).copied().unwrap_or(0.0) / qt + eps).collect();
    let sp: f64 = ps.iter().sum();
    let sq: f64 = qs.iter().sum();
    ps.iter_mut().for_each(|v| *v /= sp);
    qs.iter_mut().for_each(|v| *v /= sq);
    ps.iter().zip(&qs).map(|(a, b)| a * (a / b).ln()).sum()
}

fn random_grid(size: usize, alphabet: u8, rng: &mut ChaCha8Rng) -> Grid {
    Grid::new(size, (0..size * size).map(|_| rng.random_range(0..alphabet)).collect()).expect("grid")
}

fn synthetic_voter() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for k in [2usize, 3] {
        let corpus: Vec<Grid> = (0..3).map(|i| random_grid(6 + i, 4, &mut rng)).collect();
        let rows: Vec<Vec<Vec<u8>>> = corpus.iter().map(Grid::rows).collect();
        let library = PatternLibrary::from_grids("dungeon", corpus.iter(), k).expect("library");
        let mut grids = Vec::new();
        // every 2x2 grid over 3 tiles and every 3x3 grid over 2 tiles
        for code in 0..81u32 {
            grids.push(Grid::new(2, (0..4).map(|i| (code / 3u32.pow(i) % 3) as u8).collect()).expect("grid"));
        }
        for code in 0..512u32 {
            grids.push(Grid::new(3, (0..9).map(|i| (code >> i & 1) as u8).collect()).expect("grid"));
        }
        for size in 2..=5 {
            for _ in 0..200 {
                let alphabet = if rng.random::<bool>() { 4 } else { 16 };
                grids.push(random_grid(size, alphabet, &mut rng));
            }
        }
        for g in grids.iter().filter(|g| g.size() >= k) {
            let fast = pattern_kl(g, &library, eps);
            let brute = brute_kl(&g.rows(), &rows, k, eps);
            worst = worst.max((fast - brute).abs());
            checked += 1;
        }
    }
    let uniform = tile_entropy(&Grid::filled(6, 7));
    let equifrequent = tile_entropy(&Grid::new(8, (0..64).map(|i| (i % 16) as u8).collect()).expect("grid"));
    let pass = worst < 1e-9 && uniform == 0.0 && (equifrequent - 1.0).abs() < 1e-12;
    outcome(
        pass,
        format!("{checked} grids, max |KL - oracle| {worst:.1e}; entropy endpoints {uniform} and {equifrequent}"),
    )
}

fn table_two() -> Outcome {
    let cfg = ComparePostConfig::default();
    let corpus = maps("corpus", &cfg.tileset);
    let library = PatternLibrary::from_grids(&cfg.tileset, corpus.iter().map(|m| &m.grid), cfg.synth.k).expect("library");
    let polls = simulated_polls(&cfg.tileset, &library, cfg.polls, &cfg.synth, 7).expect("polls");
    let (report, sizes) = compare_post(&polls, &cfg).expect("compare");
    let layout = report.value_columns == ["6x6", "10x10"]
        && ["APM", "POST"].iter().all(|n| report.rows.iter().any(|r| r.labels[0] == *n));
    let beats = sizes.len() == 2 && sizes.iter().all(|s| s.apm_mae < s.baseline_mae && s.post_mae < s.baseline_mae);
    let cells: Vec<String> = sizes
        .iter()
        .map(|s| {
            format!(
                "{0}x{0} APM {1:.4} POST {2:.4} const {3:.4} (APM <= POST: {4})",
                s.size,
                s.apm_mae,
                s.post_mae,
                s.baseline_mae,
                s.apm_mae <= s.post_mae
            )
        })
        .collect();
    outcome(layout && beats, format!("{} polls; {}", polls.len(), cells.join("; ")))
}

fn poll_engine() -> Outcome {
    match poll_model::check_random_sequences(128) {
        Ok((trained, closed)) => outcome(
            trained > 0 && closed > trained,
            format!("128 random sequences, replay byte-identical; {closed} polls closed, {trained} trained"),
        ),
        Err(e) => outcome(false, e),
    }
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: u32| selected.is_empty() || selected.contains(&n);
    let mut cache = Pretrained::default();
    let mut failed = Vec::new();
    let run = |n: u32, name: &str, f: &mut dyn FnMut() -> Outcome, failed: &mut Vec<u32>| {
        if !wanted(n) {
            return;
        }
        let started = Instant::now();
        let o = f();
        let elapsed: Duration = started.elapsed();
        println!(
            "criterion {n} {name}: {} ({:.1}s) {}",
            if o.pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            o.detail
        );
        if !o.pass {
            failed.push(n);
        }
    };
    run(1, "architecture", &mut architecture, &mut failed);
    run(2, "gradients", &mut gradients, &mut failed);
    run(3, "pretraining table", &mut || table_one(&mut cache), &mut failed);
    run(4, "closed-loop trend", &mut || closed_loop(&mut cache), &mut failed);
    run(5, "evolution properties", &mut evolution, &mut failed);
    run(6, "synthetic voter oracle", &mut synthetic_voter, &mut failed);
    run(7, "window vs fixed-input table", &mut table_two, &mut failed);
    run(8, "poll engine", &mut poll_engine, &mut failed);
    if failed.is_empty() {
        println!("acceptance: all selected criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        if std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
