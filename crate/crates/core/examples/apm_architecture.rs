//! Prints the scorer's per-layer output shapes for one 4×4 window, its
//! parameter count and the score of a map.
//!
//! ```text
//! cargo run --release -p aesthevo-core --example apm_architecture
//! ```

use aesthevo::apm::build_apm;
use aesthevo::corpus::generate_user_map;
use aesthevo::experiments::experiment_epoch;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let model = build_apm("dungeon", 0);
    let window = vec![0.0f32; 4 * 4 * 16];
    let (out, shapes) = model.net.predict_traced(&window);
    for (i, s) in shapes.iter().enumerate() {
        println!("layer {i}: {s:?}");
    }
    println!("output {:.4}", out[0]);
    println!("parameters {}", model.param_count());
    for (name, shape) in model.net.param_names().iter().zip(model.net.param_shapes()) {
        println!("  {name:<12} {shape:?}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let map = generate_user_map("dungeon", "demo", None, experiment_epoch(), &mut rng);
    println!("untrained score of a {}x{} map: {:.4}", map.size(), map.size(), model.score_grid(&map.grid));
}
