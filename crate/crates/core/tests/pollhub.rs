use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use aesthevo::apm::{list_versions, TrainConfig};
use aesthevo::experiments::experiment_epoch;
use aesthevo::pollhub::{Hub, HubConfig, HubError, PollKind, PollState, Side, TrainOutcome, UserSide, Winner};
use aesthevo::tilemap::{Grid, MapSubmission, Origin, TileMap};
use aesthevo::Registry;
use chrono::{DateTime, Duration, Utc};

const ADMIN: &str = "secret";

fn config() -> HubConfig {
    HubConfig {
        homogeneous_chance: 0.0,
        image_scale: 1,
        train: TrainConfig {
            epochs_per_update: 1,
            ..TrainConfig::default()
        },
        admin_token: Some(ADMIN.to_string()),
        ..HubConfig::default()
    }
}

fn submission(size: usize, tile: i64, author: Option<&str>) -> MapSubmission {
    MapSubmission {
        tileset: "dungeon".to_string(),
        size: size as i64,
        cells: (0..size)
            .map(|r| (0..size).map(|c| (tile + (r * c) as i64) % 16).collect())
            .collect(),
        author: author.map(str::to_string),
    }
}

fn generated(size: usize, now: DateTime<Utc>) -> TileMap {
    let grid = Grid::new(size, (0..size * size).map(|i| (i % 16) as u8).collect()).unwrap();
    TileMap::new("g", "dungeon", grid, Origin::Generated, now).unwrap().with_model_version(Some(0))
}

/// A hub holding one user map and one approved generated map.
fn seeded(dir: &Path) -> Hub {
    let now = experiment_epoch();
    let mut hub = Hub::open(dir, Registry::builtin(), config()).unwrap();
    hub.submit_map(&submission(8, 3, Some("@alice")), now).unwrap();
    let g = hub.add_generated(generated(8, now), now).unwrap();
    hub.approve(&g.id, ADMIN, now).unwrap();
    hub
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            let rel = path.strip_prefix(dir).unwrap().to_string_lossy().to_string();
            if rel.starts_with("checkpoints") {
                continue;
            }
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    files
}

#[test]
fn full_poll_lifecycle() {
    let tmp = tempfile::tempdir().unwrap();
    let mut hub = seeded(tmp.path());
    let now = experiment_epoch();
    let poll = hub.schedule_pairing("dungeon", now).unwrap();
    assert_eq!(poll.kind, PollKind::Hybrid);
    assert_eq!(hub.current_poll().unwrap().id, poll.id);
    assert!(hub.image_path(&poll.id).is_file());

    let before = hub.poll_view(&poll.id, Some("t1")).unwrap();
    assert!(before.tallies.is_none() && before.kind.is_none() && before.reveal.is_none());
    let json = serde_json::to_value(&before).unwrap();
    assert!(json.get("tallies").is_none() && json.get("reveal").is_none());

    let t = hub.cast_vote(&poll.id, "t1", Side::A, now).unwrap();
    assert_eq!((t.votes_a, t.votes_b), (1, 0));
    let after = hub.poll_view(&poll.id, Some("t1")).unwrap();
    assert_eq!(after.your_vote, Some(Side::A));
    assert_eq!(after.tallies.unwrap().total(), 1);
    assert!(after.reveal.is_none());
    assert!(hub.poll_view(&poll.id, Some("t2")).unwrap().tallies.is_none());

    let dup = hub.cast_vote(&poll.id, "t1", Side::B, now).unwrap_err();
    assert!(matches!(dup, HubError::AlreadyVoted(_)));
    hub.cast_vote(&poll.id, "t2", Side::A, now).unwrap();
    hub.cast_vote(&poll.id, "t3", Side::B, now).unwrap();

    let early = hub.close_poll(&poll.id, now + Duration::seconds(10)).unwrap_err();
    assert_eq!(early.code(), "NotYetClosable");
    assert!(matches!(hub.poll_result(&poll.id), Err(HubError::PollStillOpen(_))));
    let late_vote = hub.cast_vote(&poll.id, "t4", Side::A, poll.closes_at).unwrap_err();
    assert!(matches!(late_vote, HubError::PollClosed(_)));

    let closed = hub.close_poll(&poll.id, poll.closes_at).unwrap();
    assert_eq!(closed.state, PollState::Closed);
    let reveal = closed.reveal.clone().unwrap();
    let user_side = if hub.map(&closed.map_a_id).unwrap().origin == Origin::User { UserSide::A } else { UserSide::B };
    assert_eq!(reveal.user_side, user_side);
    assert_eq!(reveal.author.as_deref(), Some("@alice"));
    assert!(hub.map(&closed.map_a_id).unwrap().evaluated);
    assert!(hub.map(&closed.map_b_id).unwrap().evaluated);
    let result = hub.poll_result(&poll.id).unwrap();
    assert_eq!(result.winner, Some(Winner::A));
    assert_eq!(result.kind, Some(PollKind::Hybrid));
    assert!(matches!(hub.current_poll(), Err(HubError::NoOpenPoll)));

    assert!(matches!(
        hub.train_from_poll(&poll.id, poll.closes_at).unwrap(),
        TrainOutcome::Trained { version: 1 }
    ));
    assert_eq!(hub.poll(&poll.id).unwrap().trained_version, Some(1));
    assert_eq!(list_versions(&hub.checkpoint_root(), "dungeon").unwrap(), vec![0, 1]);
    assert!(hub.train_from_poll(&poll.id, poll.closes_at).is_err());
    assert_eq!(hub.current_model("dungeon", now).unwrap().trained_pairings, 1);
}

#[test]
fn unvoted_poll_is_skipped_and_model_unchanged() {
    let tmp = tempfile::tempdir().unwrap();
    let mut hub = seeded(tmp.path());
    let now = experiment_epoch();
    let poll = hub.schedule_pairing("dungeon", now).unwrap();
    assert!(matches!(hub.train_from_poll(&poll.id, now), Err(HubError::PollStillOpen(_))));
    hub.close_poll(&poll.id, poll.closes_at).unwrap();
    assert_eq!(hub.train_from_poll(&poll.id, poll.closes_at).unwrap(), TrainOutcome::Skipped);
    assert_eq!(hub.poll(&poll.id).unwrap().state, PollState::Skipped);
    assert!(hub.state().model_versions.get("dungeon").is_none());
}

#[test]
fn pairing_needs_two_approved_eligible_maps() {
    let tmp = tempfile::tempdir().unwrap();
    let now = experiment_epoch();
    let mut hub = Hub::open(tmp.path(), Registry::builtin(), config()).unwrap();
    hub.submit_map(&submission(6, 1, None), now).unwrap();
    let g = hub.add_generated(generated(6, now), now).unwrap();
    assert_eq!(hub.review_queue().len(), 1);
    assert_eq!(hub.schedule_pairing("dungeon", now).unwrap_err().code(), "NoEligibleMaps");
    assert!(matches!(hub.approve(&g.id, "wrong", now), Err(HubError::Unauthorized)));
    hub.approve(&g.id, ADMIN, now).unwrap();
    assert!(hub.approve(&g.id, ADMIN, now).is_err());
    hub.schedule_pairing("dungeon", now).unwrap();
    assert_eq!(hub.schedule_pairing("dungeon", now).unwrap_err().code(), "NoEligibleMaps");
    assert_eq!(hub.schedule_pairing("nowhere", now).unwrap_err().code(), "UnknownTileset");
}

#[test]
fn invalid_submissions_are_rejected_with_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let now = experiment_epoch();
    let mut hub = Hub::open(tmp.path(), Registry::builtin(), config()).unwrap();
    let small = hub.submit_map(&submission(5, 0, None), now).unwrap_err();
    assert_eq!(small.code(), "SizeOutOfRange");
    let mut bad = submission(6, 0, None);
    bad.cells[2][3] = 16;
    assert_eq!(hub.submit_map(&bad, now).unwrap_err().code(), "BadCell");
    let mut other = submission(6, 0, None);
    other.tileset = "nowhere".to_string();
    assert_eq!(hub.submit_map(&other, now).unwrap_err().code(), "UnknownTileset");
    assert_eq!(hub.state().last_seq, 0);
}

#[test]
fn tombstoned_maps_leave_pairing_and_listings() {
    let tmp = tempfile::tempdir().unwrap();
    let now = experiment_epoch();
    let mut hub = seeded(tmp.path());
    let spare = hub.submit_map(&submission(7, 5, None), now).unwrap();
    let poll = hub.schedule_pairing("dungeon", now).unwrap();
    let in_poll = poll.map_a_id.clone();
    assert!(matches!(hub.moderate_delete(&in_poll, ADMIN, now), Err(HubError::MapInOpenPoll(_))));
    assert!(matches!(hub.moderate_delete(&spare.id, "nope", now), Err(HubError::Unauthorized)));
    hub.moderate_delete(&spare.id, ADMIN, now).unwrap();
    assert!(hub.moderate_delete(&spare.id, ADMIN, now).is_err());
    assert!(hub.public_maps().all(|m| m.id != spare.id));
    assert!(hub.eligible("dungeon", Origin::User).is_empty());
    assert!(hub.map(&spare.id).is_some());
    let by_origin = &hub.stats(Some("dungeon")).global.maps_by_origin;
    assert_eq!(by_origin.get(&Origin::User), Some(&1));
}

#[test]
fn replay_rebuilds_store_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let now = experiment_epoch();
    {
        let mut hub = seeded(tmp.path());
        hub.submit_map(&submission(10, 7, Some("@bob")), now).unwrap();
        let g = hub.add_generated(generated(9, now), now).unwrap();
        hub.approve(&g.id, ADMIN, now).unwrap();
        for round in 0..2 {
            let poll = hub.schedule_pairing("dungeon", now).unwrap();
            for (i, side) in [Side::A, Side::B, Side::A].into_iter().enumerate().take(round + 2) {
                hub.cast_vote(&poll.id, &format!("tok{i}"), side, now).unwrap();
            }
            hub.close_poll(&poll.id, poll.closes_at).unwrap();
            hub.train_from_poll(&poll.id, poll.closes_at).unwrap();
        }
    }
    let before = snapshot(tmp.path());
    assert!(before.keys().any(|k| k.ends_with(".png")));
    for sub in ["maps", "polls"] {
        fs::remove_dir_all(tmp.path().join(sub)).unwrap();
    }
    fs::remove_file(tmp.path().join("index.json")).unwrap();
    let reopened = Hub::open(tmp.path(), Registry::builtin(), config()).unwrap();
    assert_eq!(snapshot(tmp.path()), before);

    let copy = tempfile::tempdir().unwrap();
    fs::copy(tmp.path().join("events.ndjson"), copy.path().join("events.ndjson")).unwrap();
    let replica = Hub::open(copy.path(), Registry::builtin(), config()).unwrap();
    assert_eq!(replica.state(), reopened.state());
    assert_eq!(snapshot(copy.path()), before);
}

#[test]
fn closed_poll_is_trained_after_restart() {
    let tmp = tempfile::tempdir().unwrap();
    let now = experiment_epoch();
    let poll_id;
    let end;
    {
        let mut hub = seeded(tmp.path());
        let poll = hub.schedule_pairing("dungeon", now).unwrap();
        hub.cast_vote(&poll.id, "v", Side::B, now).unwrap();
        hub.close_poll(&poll.id, poll.closes_at).unwrap();
        poll_id = poll.id;
        end = poll.closes_at;
    }
    let mut hub = Hub::open(tmp.path(), Registry::builtin(), config()).unwrap();
    assert_eq!(hub.poll(&poll_id).unwrap().state, PollState::Closed);
    let done = hub.resume(end).unwrap();
    assert_eq!(done, vec![(poll_id.clone(), TrainOutcome::Trained { version: 1 })]);
    assert!(hub.resume(end).unwrap().is_empty());
}

#[test]
fn corrupt_log_line_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    drop(seeded(tmp.path()));
    let log = tmp.path().join("events.ndjson");
    let mut text = fs::read_to_string(&log).unwrap();
    text.push_str("{not json\n");
    fs::write(&log, text).unwrap();
    let err = Hub::open(tmp.path(), Registry::builtin(), config()).unwrap_err();
    assert!(matches!(err, HubError::Log(msg) if msg.contains("line 4")));
}

#[test]
fn tick_closes_trains_and_reopens() {
    let tmp = tempfile::tempdir().unwrap();
    let now = experiment_epoch();
    let mut hub = seeded(tmp.path());
    hub.submit_map(&submission(9, 2, None), now).unwrap();
    let g = hub.add_generated(generated(7, now), now).unwrap();
    hub.approve(&g.id, ADMIN, now).unwrap();
    let first = hub.tick(now);
    let opened = first.opened.clone().unwrap();
    assert!(first.closed.is_empty());
    hub.cast_vote(&opened, "x", Side::A, now).unwrap();
    let later = now + Duration::seconds(hub.config().poll_duration_secs);
    let second = hub.tick(later);
    assert_eq!(second.closed, vec![opened.clone()]);
    assert_eq!(second.trained, vec![(opened.clone(), TrainOutcome::Trained { version: 1 })]);
    assert!(second.opened.is_some_and(|p| p != opened));
    assert!(second.errors.is_empty(), "{:?}", second.errors);
}

#[test]
fn stats_match_hand_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let now = experiment_epoch();
    let mut hub = Hub::open(tmp.path(), Registry::builtin(), config()).unwrap();
    // Three hybrid polls: user wins 3-1, generated wins 0-2, tie 1-1.
    let plans = [(3u32, 1u32), (0, 2), (1, 1)];
    let mut t = now;
    for (user_votes, gen_votes) in plans {
        hub.submit_map(&submission(6, 0, None), t).unwrap();
        let g = hub.add_generated(generated(10, t), t).unwrap();
        hub.approve(&g.id, ADMIN, t).unwrap();
        let poll = hub.schedule_pairing("dungeon", t).unwrap();
        let user_side = if hub.map(&poll.map_a_id).unwrap().origin == Origin::User { Side::A } else { Side::B };
        let gen_side = if user_side == Side::A { Side::B } else { Side::A };
        let mut n = 0;
        for (count, side) in [(user_votes, user_side), (gen_votes, gen_side)] {
            for _ in 0..count {
                hub.cast_vote(&poll.id, &format!("v{n}"), side, t).unwrap();
                n += 1;
            }
        }
        hub.close_poll(&poll.id, poll.closes_at).unwrap();
        hub.train_from_poll(&poll.id, poll.closes_at).unwrap();
        t = poll.closes_at + Duration::seconds(1);
    }
    let s = hub.stats(None).global;
    assert_eq!(s.closed_polls, 3);
    assert_eq!(s.hybrid_polls, 3);
    assert_eq!(s.mean_votes_per_poll, Some(8.0 / 3.0));
    assert_eq!(s.mean_map_size, Some(8.0));
    let third = 1.0 / 3.0;
    assert_eq!((s.user_win_rate, s.generated_win_rate, s.tie_rate), (Some(third), Some(third), Some(third)));
    let shares: Vec<f64> = s.user_share_series.iter().map(|p| p.user_share).collect();
    assert_eq!(shares, vec![0.75, 0.0, 0.5]);
    // Least-squares slope of (0, .75), (1, 0), (2, .5) is -0.125.
    assert!((s.user_share_slope.unwrap() + 0.125).abs() < 1e-12);
    assert_eq!(hub.stats(Some("dungeon")).tilesets.len(), 1);
}
