//! Walks one poll through the store: submit, evolve, pair, vote, close,
//! train, then replays the event log into a second directory.
//!
//! ```text
//! cargo run --release -p aesthevo-core --example poll_lifecycle
//! ```

use aesthevo::corpus::generate_user_grid;
use aesthevo::experiments::experiment_epoch;
use aesthevo::pollhub::{Hub, HubConfig, Side};
use aesthevo::{MapSubmission, Registry};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("aesthevo-poll-demo-{}", std::process::id()));
    let cfg = HubConfig {
        homogeneous_chance: 0.0,
        review_generated: false,
        image_scale: 2,
        ..HubConfig::default()
    };
    let mut hub = Hub::open(&dir, Registry::builtin(), cfg.clone())?;
    let mut now = experiment_epoch();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let grid = generate_user_grid("dungeon", 8, &mut rng);
    let submission = MapSubmission {
        tileset: "dungeon".to_string(),
        size: 8,
        cells: grid.rows().into_iter().map(|r| r.into_iter().map(i64::from).collect()).collect(),
        author: Some("@alice".to_string()),
    };
    let user = hub.submit_map(&submission, now)?;
    println!("submitted {}", user.id);
    hub.ensure_model("dungeon", now)?;
    let generated = hub.evolve_now("dungeon", now)?;
    println!("evolved {}", generated.id);
    let poll = hub.schedule_pairing("dungeon", now)?;
    println!("opened {} ({:?}) closing at {}", poll.id, poll.kind, poll.closes_at);
    for i in 0..7 {
        let side = if i % 3 == 0 { Side::B } else { Side::A };
        hub.cast_vote(&poll.id, &format!("voter-{i}"), side, now)?;
    }
    let hidden = hub.poll_view(&poll.id, Some("stranger"))?;
    println!("stranger sees tallies: {}", hidden.tallies.is_some());
    now = poll.closes_at;
    hub.close_poll(&poll.id, now)?;
    let outcome = hub.train_from_poll(&poll.id, now)?;
    println!("training: {outcome:?}");
    let result = hub.poll_result(&poll.id)?;
    println!("result: {}", serde_json::to_string_pretty(&result)?);

    let copy = dir.with_extension("replay");
    std::fs::create_dir_all(&copy)?;
    std::fs::copy(dir.join("events.ndjson"), copy.join("events.ndjson"))?;
    let replayed = Hub::open(&copy, Registry::builtin(), cfg)?;
    println!("replayed state equal: {}", replayed.state() == hub.state());
    std::fs::remove_dir_all(&dir)?;
    std::fs::remove_dir_all(&copy)?;
    Ok(())
}
