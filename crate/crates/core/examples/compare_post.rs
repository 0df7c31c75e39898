//! Sliding-window scorer against the fixed-input network on a simulated
//! poll corpus, for 6×6 and 10×10 maps.
//!
//! ```text
//! cargo run --release -p aesthevo-core --example compare_post -- [POLLS]
//! ```

use std::path::Path;

use aesthevo::corpus::load_map_dir;
use aesthevo::experiments::{compare_post, simulated_polls, ComparePostConfig};
use aesthevo::PatternLibrary;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let polls: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(300);
    let cfg = ComparePostConfig {
        polls,
        trials: 2,
        ..ComparePostConfig::default()
    };
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets/corpus").join(&cfg.tileset);
    let maps = load_map_dir(&dir)?;
    let library = PatternLibrary::from_grids(&cfg.tileset, maps.iter().map(|m| &m.grid), cfg.synth.k)?;
    let sample = simulated_polls(&cfg.tileset, &library, cfg.polls, &cfg.synth, 7)?;
    let (report, sizes) = compare_post(&sample, &cfg)?;
    print!("{}", report.to_table());
    for s in sizes {
        println!("{}x{}: {} polls, {} maps", s.size, s.size, s.polls, s.maps);
    }
    Ok(())
}
