//! Short closed-loop run: pretrain, then pair, vote with synthetic voters,
//! train and evolve for a number of cycles, reporting generated-map share.
//!
//! ```text
//! cargo run --release -p aesthevo-core --example closed_loop -- [CYCLES]
//! ```

use std::path::Path;

use aesthevo::apm::save_checkpoint;
use aesthevo::corpus::load_map_dir;
use aesthevo::experiments::{pretrain, simulate, PretrainConfig, SimulateConfig};
use aesthevo::Registry;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cycles: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(40);
    let t = "dungeon";
    let corpus = load_map_dir(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets/corpus").join(t))?;
    let work = std::env::temp_dir().join(format!("aesthevo-loop-{}", std::process::id()));
    let checkpoints = work.join("checkpoints");
    save_checkpoint(&checkpoints, &pretrain(t, &corpus, &PretrainConfig::default())?.model)?;
    let cfg = SimulateConfig {
        cycles,
        block: 10,
        ..SimulateConfig::default()
    };
    let out = simulate(&checkpoints, &corpus, &Registry::builtin(), &cfg, &work.join("hub"))?;
    print!("{}", out.report.to_table());
    println!("model v{} -> v{}, slope {:?}", out.initial_version, out.final_version, out.slope);
    std::fs::remove_dir_all(&work)?;
    Ok(())
}
