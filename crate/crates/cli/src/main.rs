//! `aesthevo` operator CLI.
//!
//! Every subcommand prints a text table and, with `--out`, writes the same
//! result as JSON. Failures exit with a nonzero status.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use aesthevo::apm::checkpoint::resolve;
use aesthevo::apm::save_checkpoint;
use aesthevo::corpus::load_map_dir;
use aesthevo::evolve::{evolve, ApmFitness, EvolutionConfig, FinalCriterion, RunContext};
use aesthevo::experiments::{
    compare_post, experiment_epoch, polls_from_state, pretrain, simulate, simulated_polls, validate, ComparePostConfig,
    ExperimentReport, PretrainConfig, SimulateConfig, ValidateConfig, ValidationStage,
};
use aesthevo::pollhub::{Hub, HubConfig};
use aesthevo::render::{decode_png_rgba, render_map_png, render_pairing_png};
use aesthevo::synthvoter::SynthConfig;
use aesthevo::{Origin, PatternLibrary, Registry, TileMap};
use aesthevo_server::{ServerConfig, ADMIN_TOKEN_ENV};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "aesthevo", version, about = "Evolve tile maps against a learned aesthetic scorer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pretrain per-tileset scorers from a seed corpus and save checkpoints.
    Pretrain(PretrainArgs),
    /// Evolve one map with the latest checkpoint as fitness.
    Evolve(EvolveArgs),
    /// Run the poll service over HTTP.
    Serve(ServeArgs),
    /// Closed-loop simulation with synthetic voters.
    Simulate(SimulateArgs),
    /// Mean predicted vote share of random and curated maps per stage.
    Validate(ValidateArgs),
    /// Sliding-window scorer against a fixed-input network on one map size.
    ComparePost(ComparePostArgs),
    /// Render a map, or a pairing of two maps, to PNG.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Write the result as JSON to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Tileset packages; the built-in themes when absent.
    #[arg(long)]
    tilesets_dir: Option<PathBuf>,
}

impl Common {
    fn registry(&self) -> Result<Registry> {
        match &self.tilesets_dir {
            Some(d) => Registry::load_dir(d).with_context(|| format!("loading tilesets from {}", d.display())),
            None => Ok(Registry::builtin()),
        }
    }

    fn emit<T: Serialize>(&self, table: &str, value: &T) -> Result<()> {
        print!("{table}");
        if !table.ends_with('\n') {
            println!();
        }
        if let Some(path) = &self.out {
            write_json(path, value)?;
        }
        Ok(())
    }
}

#[derive(Debug, Args)]
struct PretrainArgs {
    #[command(flatten)]
    common: Common,
    /// Tilesets to pretrain; all registry tilesets when omitted.
    #[arg(long = "tileset")]
    tilesets: Vec<String>,
    /// Seed corpus root with one `<tileset>/` directory of map JSON each.
    #[arg(long, default_value = "assets/corpus")]
    corpus: PathBuf,
    #[arg(long, default_value = "data/checkpoints")]
    checkpoints: PathBuf,
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    cycles: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Debug, Args)]
struct EvolveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "dungeon")]
    tileset: String,
    /// Checkpoint root, tileset directory or version directory.
    #[arg(long, default_value = "data/checkpoints")]
    checkpoints: PathBuf,
    /// Map directory whose user maps provide the mutation patterns.
    #[arg(long, default_value = "assets/corpus")]
    corpus: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// apm_only, entropy, pseudo or entropy_and_pseudo.
    #[arg(long)]
    criterion: Option<FinalCriterion>,
    /// Use the full-scale settings instead of the reduced desk settings.
    #[arg(long)]
    full: bool,
    /// Selected map JSON.
    #[arg(long)]
    map_out: Option<PathBuf>,
    /// Selected map PNG.
    #[arg(long)]
    png: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    scale: usize,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    bind: String,
    /// 0 picks a free port.
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "data/hub")]
    data_dir: PathBuf,
    #[arg(long, default_value_t = 3 * 3600)]
    poll_secs: i64,
    #[arg(long, default_value_t = 0.10)]
    homogeneous_chance: f64,
    #[arg(long, default_value_t = 50)]
    submissions_per_hour: usize,
    #[arg(long, default_value_t = 5)]
    tick_secs: u64,
    #[arg(long, default_value_t = 4)]
    image_scale: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    tilesets_dir: Option<PathBuf>,
    /// Web UI bundle served for non-API paths.
    #[arg(long)]
    static_dir: Option<PathBuf>,
    /// Checkpoint root adopted by tilesets without a model.
    #[arg(long)]
    seed_checkpoints: Option<PathBuf>,
    /// Map root imported into an empty store.
    #[arg(long)]
    seed_corpus: Option<PathBuf>,
    #[arg(long, env = ADMIN_TOKEN_ENV, hide_env_values = true)]
    admin_token: Option<String>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "dungeon")]
    tileset: String,
    #[arg(long, default_value = "data/checkpoints")]
    checkpoints: PathBuf,
    #[arg(long, default_value = "assets/corpus")]
    corpus: PathBuf,
    #[arg(long, default_value_t = 200)]
    cycles: usize,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Hub directories go here; a temporary directory when absent.
    #[arg(long)]
    work_dir: Option<PathBuf>,
    #[arg(long)]
    user_maps_per_cycle: Option<usize>,
    #[arg(long)]
    homogeneous_chance: Option<f64>,
    #[arg(long)]
    replay_polls: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f32>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    criterion: Option<FinalCriterion>,
    #[arg(long)]
    voters: Option<u32>,
    #[arg(long)]
    taste_pool: Option<usize>,
    #[arg(long)]
    block: Option<usize>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: Common,
    /// `NAME=CHECKPOINT_ROOT`, repeatable.
    #[arg(long = "stage")]
    stages: Vec<String>,
    /// Prepend a freshly initialised stage named "untrained".
    #[arg(long)]
    untrained: bool,
    #[arg(long = "tileset")]
    tilesets: Vec<String>,
    /// Curated map root with one `<tileset>/` directory each.
    #[arg(long, default_value = "assets/curated")]
    curated: PathBuf,
    #[arg(long, default_value_t = 50)]
    random_maps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ComparePostArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "dungeon")]
    tileset: String,
    /// Poll store to read closed polls from; simulated polls when absent.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Map root whose user maps seed the simulated corpus.
    #[arg(long, default_value = "assets/corpus")]
    library: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = vec![6usize, 10])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 500)]
    polls: usize,
    #[arg(long, default_value_t = 0.9)]
    train_fraction: f64,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, default_value_t = 20)]
    min_polls: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[command(flatten)]
    common: Common,
    /// Map JSON (left side of a pairing).
    #[arg(long)]
    map: PathBuf,
    /// Second map; renders a pairing when given.
    #[arg(long)]
    pair: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    scale: usize,
    /// Output PNG; defaults to the map path with a `.png` extension.
    #[arg(long)]
    png: Option<PathBuf>,
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::Evolve(a) => cmd_evolve(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Validate(a) => cmd_validate(a),
        Command::ComparePost(a) => cmd_compare_post(a),
        Command::Render(a) => cmd_render(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_map(path: &Path) -> Result<TileMap> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let map: TileMap = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    map.check_invariants().with_context(|| format!("checking {}", path.display()))?;
    Ok(map)
}

fn user_maps(root: &Path, tileset: &str) -> Result<Vec<TileMap>> {
    let dir = root.join(tileset);
    let maps = load_map_dir(&dir).with_context(|| format!("loading maps from {}", dir.display()))?;
    Ok(maps.into_iter().filter(|m| m.origin == Origin::User && m.tileset_id == tileset).collect())
}

fn tileset_list(requested: &[String], registry: &Registry) -> Result<Vec<String>> {
    if requested.is_empty() {
        return Ok(registry.ids().map(str::to_string).collect());
    }
    for t in requested {
        if !registry.contains(t) {
            bail!("unknown tileset '{t}'");
        }
    }
    Ok(requested.to_vec())
}

/// Runs `jobs` on up to `workers` threads and returns results in input order.
fn run_pool<T: Sync, R: Send>(jobs: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let r = f(&jobs[i]);
                results.lock().expect("pool results")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("pool results")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

#[derive(Debug, Serialize)]
struct PretrainResult {
    tileset: String,
    checkpoint: PathBuf,
    version: u64,
    report: ExperimentReport,
}

fn cmd_pretrain(a: PretrainArgs) -> Result<()> {
    let registry = a.common.registry()?;
    let tilesets = tileset_list(&a.tilesets, &registry)?;
    let mut cfg = PretrainConfig::default().with_seed(a.seed);
    if let Some(p) = a.pairs {
        cfg.pairs = p;
    }
    if let Some(c) = a.cycles {
        cfg.cycles = c;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs_per_update = e;
    }
    let results = run_pool(&tilesets, a.workers, |t| -> Result<PretrainResult> {
        let corpus = user_maps(&a.corpus, t)?;
        let mut evo_cfg = cfg;
        evo_cfg.evolution.pad_tile = registry.get(t)?.empty_index;
        let outcome = pretrain(t, &corpus, &evo_cfg)?;
        let dir = save_checkpoint(&a.checkpoints, &outcome.model)?;
        Ok(PretrainResult {
            tileset: t.clone(),
            checkpoint: dir,
            version: outcome.model.version,
            report: outcome.report,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut table = String::new();
    for r in &results {
        table += &format!("== {} -> {} (v{})\n", r.tileset, r.checkpoint.display(), r.version);
        table += &r.report.to_table();
    }
    a.common.emit(&table, &results)
}

#[derive(Debug, Serialize)]
struct EvolveResult {
    map: TileMap,
    report: aesthevo::evolve::EvolutionReport,
}

fn cmd_evolve(a: EvolveArgs) -> Result<()> {
    let registry = a.common.registry()?;
    let tileset = registry.get(&a.tileset)?;
    let model = resolve(&a.checkpoints, Some(&a.tileset))
        .with_context(|| format!("loading a checkpoint for {} from {}", a.tileset, a.checkpoints.display()))?;
    let corpus = user_maps(&a.corpus, &a.tileset)?;
    let synth = SynthConfig::default();
    let library = PatternLibrary::from_grids(&a.tileset, corpus.iter().map(|m| &m.grid), 2)?;
    let judge = PatternLibrary::from_grids(&a.tileset, corpus.iter().map(|m| &m.grid), synth.k)?;
    let mut cfg = if a.full { EvolutionConfig::default() } else { EvolutionConfig::desk() };
    cfg.seed = a.seed;
    cfg.pad_tile = tileset.empty_index;
    if let Some(p) = a.population {
        cfg.population_size = p;
    }
    if let Some(g) = a.generations {
        cfg.generations = g;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(c) = a.criterion {
        cfg.final_criterion = c;
    }
    let mut fitness = ApmFitness::new(&model);
    let run = evolve(
        &mut fitness,
        &library,
        &judge,
        &cfg,
        RunContext {
            tileset_id: &a.tileset,
            map_id: format!("evolved-{}-{}", a.tileset, a.seed),
            model_version: Some(model.version),
            now: experiment_epoch(),
            synth,
        },
    )?;
    if let Some(path) = &a.map_out {
        write_json(path, &run.map)?;
    }
    if let Some(path) = &a.png {
        fs::write(path, render_map_png(&run.map, &registry, a.scale)?).with_context(|| format!("writing {}", path.display()))?;
    }
    let mut table = format!(
        "tileset {} model v{} criterion {:?} seed {}\n{:>5} {:>12} {:>12} {:>6}\n",
        a.tileset, model.version, cfg.final_criterion, a.seed, "trial", "best", "final_mean", "size"
    );
    for t in &run.report.trials {
        let mean = t.generations.last().map(|g| g.mean).unwrap_or(f64::NAN);
        let mark = if t.trial == run.report.selected_trial { " *" } else { "" };
        table += &format!("{:>5} {:>12.6} {:>12.6} {:>6}{mark}\n", t.trial, t.best_fitness, mean, t.best_size);
    }
    table += &format!("selected {} fitness {:.6}\n", run.map.id, run.fitness);
    a.common.emit(
        &table,
        &EvolveResult {
            map: run.map.clone(),
            report: run.report,
        },
    )
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    let cfg = ServerConfig {
        bind: a.bind,
        port: a.port,
        data_dir: a.data_dir,
        poll_duration_secs: a.poll_secs,
        homogeneous_chance: a.homogeneous_chance,
        submissions_per_hour: a.submissions_per_hour,
        tick_secs: a.tick_secs,
        image_scale: a.image_scale,
        seed: a.seed,
        tilesets_dir: a.tilesets_dir,
        static_dir: a.static_dir,
        seed_checkpoints: a.seed_checkpoints,
        seed_corpus: a.seed_corpus,
        admin_token: a.admin_token,
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let server = aesthevo_server::start(cfg).await?;
        println!("listening on http://{}", server.addr);
        println!("port {}", server.addr.port());
        use std::io::Write;
        std::io::stdout().flush()?;
        tokio::select! {
            r = server.http => {
                r??;
            }
            r = tokio::signal::ctrl_c() => {
                r?;
                println!("shutting down");
            }
        }
        server.ticker.abort();
        Ok(())
    })
}

#[derive(Debug, Serialize)]
struct SimulateRun {
    seed: u64,
    slope: Option<f64>,
    initial_version: u64,
    final_version: u64,
    series: Vec<aesthevo::experiments::SharePoint>,
    report: ExperimentReport,
}

#[derive(Debug, Serialize)]
struct SimulateResult {
    config: SimulateConfig,
    positive_slopes: usize,
    runs: Vec<SimulateRun>,
    summary: ExperimentReport,
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let registry = a.common.registry()?;
    let tileset = registry.get(&a.tileset)?;
    let corpus = user_maps(&a.corpus, &a.tileset)?;
    let mut cfg = SimulateConfig {
        tileset: a.tileset.clone(),
        cycles: a.cycles,
        seed: a.seed,
        ..SimulateConfig::default()
    };
    cfg.evolution.pad_tile = tileset.empty_index;
    if let Some(v) = a.user_maps_per_cycle {
        cfg.user_maps_per_cycle = v;
    }
    if let Some(v) = a.homogeneous_chance {
        cfg.homogeneous_chance = v;
    }
    if let Some(v) = a.replay_polls {
        cfg.replay_polls = v;
    }
    if let Some(v) = a.epochs {
        cfg.train.epochs_per_update = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = a.population {
        cfg.evolution.population_size = v;
    }
    if let Some(v) = a.generations {
        cfg.evolution.generations = v;
    }
    if let Some(v) = a.trials {
        cfg.evolution.trials = v;
    }
    if let Some(v) = a.criterion {
        cfg.evolution.final_criterion = v;
    }
    if let Some(v) = a.voters {
        cfg.synth.voters_per_poll = v;
    }
    if let Some(v) = a.taste_pool {
        cfg.taste_pool = v;
    }
    if let Some(v) = a.block {
        cfg.block = v;
    }
    let temp = match &a.work_dir {
        Some(_) => None,
        None => Some(tempfile::tempdir()?),
    };
    let work_root = a.work_dir.clone().unwrap_or_else(|| temp.as_ref().expect("temp dir").path().to_path_buf());
    let seeds: Vec<u64> = (a.seed..a.seed + a.seeds.max(1)).collect();
    let runs = run_pool(&seeds, a.workers, |&seed| -> Result<SimulateRun> {
        let cfg = SimulateConfig { seed, ..cfg.clone() };
        let work = work_root.join(format!("{}-seed{seed}", cfg.tileset));
        if work.exists() {
            fs::remove_dir_all(&work)?;
        }
        let out = simulate(&a.checkpoints, &corpus, &registry, &cfg, &work)?;
        Ok(SimulateRun {
            seed,
            slope: out.slope,
            initial_version: out.initial_version,
            final_version: out.final_version,
            series: out.series,
            report: out.report,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut summary = ExperimentReport::new(
        "simulate-summary",
        a.seed,
        serde_json::to_value(&cfg)?,
        &["seed"],
        &["slope", "mean_generated_share", "polls"],
    );
    let mut table = String::new();
    for r in &runs {
        table += &format!("== seed {} (model v{} -> v{})\n", r.seed, r.initial_version, r.final_version);
        table += &r.report.to_table();
        let mean = (!r.series.is_empty())
            .then(|| r.series.iter().map(|p| p.generated_share).sum::<f64>() / r.series.len() as f64);
        summary.push(&[&r.seed.to_string()], vec![r.slope, mean, Some(r.series.len() as f64)]);
    }
    let positive = runs.iter().filter(|r| r.slope.is_some_and(|s| s > 0.0)).count();
    summary
        .notes
        .push(format!("positive generated-share slope in {positive} of {} seeds", runs.len()));
    table += "== summary\n";
    table += &summary.to_table();
    table += &format!("positive slopes: {positive}/{}\n", runs.len());
    a.common.emit(
        &table,
        &SimulateResult {
            config: cfg,
            positive_slopes: positive,
            runs,
            summary,
        },
    )
}

fn cmd_validate(a: ValidateArgs) -> Result<()> {
    let registry = a.common.registry()?;
    let tilesets = tileset_list(&a.tilesets, &registry)?;
    let mut stages = Vec::new();
    if a.untrained {
        stages.push(ValidationStage::untrained("untrained", tilesets.iter().map(String::as_str), a.seed));
    }
    for spec in &a.stages {
        let (name, root) = spec
            .split_once('=')
            .map(|(n, p)| (n.to_string(), PathBuf::from(p)))
            .unwrap_or_else(|| (spec.clone(), PathBuf::from(spec)));
        stages.push(ValidationStage::load(&name, &root, tilesets.iter().map(String::as_str))?);
    }
    if stages.is_empty() {
        bail!("no stages: pass --stage NAME=CHECKPOINT_ROOT or --untrained");
    }
    let mut curated = BTreeMap::new();
    for t in &tilesets {
        curated.insert(t.clone(), user_maps(&a.curated, t)?);
    }
    let report = validate(
        &stages,
        &curated,
        &ValidateConfig {
            random_maps: a.random_maps,
            seed: a.seed,
        },
    )?;
    a.common.emit(&report.to_table(), &report)
}

#[derive(Debug, Serialize)]
struct ComparePostResult {
    source: String,
    polls: usize,
    sizes: Vec<aesthevo::experiments::SizeResult>,
    report: ExperimentReport,
}

fn cmd_compare_post(a: ComparePostArgs) -> Result<()> {
    let registry = a.common.registry()?;
    registry.get(&a.tileset)?;
    let cfg = ComparePostConfig {
        tileset: a.tileset.clone(),
        sizes: a.sizes.clone(),
        polls: a.polls,
        train_fraction: a.train_fraction,
        trials: a.trials,
        min_polls: a.min_polls,
        seed: a.seed,
        ..ComparePostConfig::default()
    };
    let (source, polls) = match &a.data_dir {
        Some(dir) => {
            let hub = Hub::open(dir, registry.clone(), HubConfig::default())?;
            (format!("poll store {}", dir.display()), polls_from_state(hub.state(), &a.tileset))
        }
        None => {
            let maps = user_maps(&a.library, &a.tileset)?;
            let library = PatternLibrary::from_grids(&a.tileset, maps.iter().map(|m| &m.grid), cfg.synth.k)?;
            (
                format!("simulated from {}", a.library.join(&a.tileset).display()),
                simulated_polls(&a.tileset, &library, a.polls, &cfg.synth, a.seed)?,
            )
        }
    };
    let (report, sizes) = compare_post(&polls, &cfg)?;
    let mut table = format!("{} polls, {source}\n", polls.len());
    table += &report.to_table();
    a.common.emit(
        &table,
        &ComparePostResult {
            source,
            polls: polls.len(),
            sizes,
            report,
        },
    )
}

#[derive(Debug, Serialize)]
struct RenderResult {
    png: PathBuf,
    width: u32,
    height: u32,
    maps: Vec<String>,
}

fn cmd_render(a: RenderArgs) -> Result<()> {
    let registry = a.common.registry()?;
    let first = read_map(&a.map)?;
    let (bytes, maps) = match &a.pair {
        Some(p) => {
            let second = read_map(p)?;
            let png = render_pairing_png(&first, &second, &registry, a.scale)?;
            (png, vec![first.id.clone(), second.id.clone()])
        }
        None => (render_map_png(&first, &registry, a.scale)?, vec![first.id.clone()]),
    };
    let path = a.png.clone().unwrap_or_else(|| a.map.with_extension("png"));
    fs::write(&path, &bytes).with_context(|| format!("writing {}", path.display()))?;
    let (width, height, _) = decode_png_rgba(&bytes)?;
    let table = format!("{:<40} {:>6} {:>6}\n{:<40} {:>6} {:>6}\n", "png", "width", "height", path.display(), width, height);
    a.common.emit(
        &table,
        &RenderResult {
            png: path,
            width,
            height,
            maps,
        },
    )
}
