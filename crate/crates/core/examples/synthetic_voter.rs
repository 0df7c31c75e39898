//! Scores user-style and random maps with the synthetic voter (tile entropy
//! and tile-pattern KL against a corpus) and simulates polls between them.
//!
//! ```text
//! cargo run --release -p aesthevo-core --example synthetic_voter
//! ```

use aesthevo::corpus::{generate_user_map, random_map};
use aesthevo::experiments::experiment_epoch;
use aesthevo::synthvoter::{pseudo_score, simulate_poll, SynthConfig};
use aesthevo::PatternLibrary;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let t = "overworld";
    let now = experiment_epoch();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let corpus: Vec<_> = (0..24).map(|i| generate_user_map(t, &format!("c{i}"), None, now, &mut rng)).collect();
    let cfg = SynthConfig::default();
    let library = PatternLibrary::from_grids(t, corpus.iter().map(|m| &m.grid), cfg.k)?;
    println!("{:<8} {:>8} {:>8} {:>8} {:>8}", "map", "entropy", "kl", "sim", "value");
    for i in 0..4 {
        let user = generate_user_map(t, &format!("u{i}"), None, now, &mut rng);
        let random = random_map(t, &format!("r{i}"), now, &mut rng);
        for m in [&user, &random] {
            let s = pseudo_score(m, &library, &cfg)?;
            println!("{:<8} {:>8.3} {:>8.3} {:>8.3} {:>8.3}", m.id, s.entropy, s.kl, s.similarity, s.votes_value);
        }
        let poll = simulate_poll(&user, &random, &library, &cfg.with_seed(i))?;
        println!("  poll {} vs {}: {} - {}", user.id, random.id, poll.votes_a, poll.votes_b);
    }
    Ok(())
}
