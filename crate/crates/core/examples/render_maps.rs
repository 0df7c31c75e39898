//! Renders a single map and an A/B pairing image to PNG files.
//!
//! ```text
//! cargo run --release -p aesthevo-core --example render_maps -- [OUT_DIR]
//! ```

use std::path::PathBuf;

use aesthevo::corpus::generate_user_map;
use aesthevo::experiments::experiment_epoch;
use aesthevo::render::{render_map_png, render_pairing_png};
use aesthevo::Registry;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    std::fs::create_dir_all(&out)?;
    let registry = Registry::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let now = experiment_epoch();
    for t in registry.ids() {
        let a = generate_user_map(t, &format!("{t}-a"), None, now, &mut rng);
        let b = generate_user_map(t, &format!("{t}-b"), None, now, &mut rng);
        let single = out.join(format!("{t}-map.png"));
        std::fs::write(&single, render_map_png(&a, &registry, 4)?)?;
        let pair = out.join(format!("{t}-pairing.png"));
        std::fs::write(&pair, render_pairing_png(&a, &b, &registry, 4)?)?;
        println!("{t}: {} and {}", single.display(), pair.display());
    }
    Ok(())
}
