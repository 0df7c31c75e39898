//! Writes the shipped asset tree: tileset packages, the per-tileset seed
//! corpus used for pretraining and the curated evaluation maps.
//!
//! ```text
//! cargo run --release -p aesthevo-core --example generate_assets -- [OUT_DIR]
//! ```

use std::path::PathBuf;

use aesthevo::corpus::{generate_user_map, write_map_dir};
use aesthevo::experiments::experiment_epoch;
use aesthevo::util::derive_seed;
use aesthevo::Registry;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const CORPUS_MAPS: usize = 24;
const CURATED_MAPS: usize = 20;
const SEED: u64 = 20_190_601;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("assets"));
    let registry = Registry::builtin();
    registry.write_dir(&out.join("tilesets"))?;
    let now = experiment_epoch();
    for (i, t) in registry.ids().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(SEED, i as u64));
        let corpus: Vec<_> = (0..CORPUS_MAPS)
            .map(|k| generate_user_map(t, &format!("{t}-seed-{k:02}"), Some("@corpus"), now, &mut rng))
            .collect();
        write_map_dir(&out.join("corpus").join(t), &corpus)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(SEED, 100 + i as u64));
        let curated: Vec<_> = (0..CURATED_MAPS)
            .map(|k| generate_user_map(t, &format!("{t}-curated-{k:02}"), Some("@curator"), now, &mut rng))
            .collect();
        write_map_dir(&out.join("curated").join(t), &curated)?;
        println!("{t}: {CORPUS_MAPS} corpus maps, {CURATED_MAPS} curated maps");
    }
    println!("wrote {}", out.display());
    Ok(())
}
