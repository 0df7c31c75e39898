//! Randomised event sequences against the poll store, shared by the
//! property test and the acceptance run.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use aesthevo::apm::TrainConfig;
use aesthevo::experiments::experiment_epoch;
use aesthevo::pollhub::{Hub, HubConfig, PollState, Side};
use aesthevo::tilemap::{Grid, MapSubmission, Origin, TileMap};
use aesthevo::Registry;
use chrono::Duration;
use proptest::prelude::*;
use proptest::test_runner::TestRunner;

const ADMIN: &str = "root";
const DURATION: i64 = 600;

#[derive(Debug, Clone)]
enum Op {
    Submit { size: usize, tile: u8, author: bool },
    Generate { size: usize, approve: bool },
    Approve(usize),
    Schedule,
    Vote { token: u8, side: bool },
    Advance(i64),
    Close,
    Train,
    Delete(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        2 => (6usize..=12, 0u8..16, any::<bool>()).prop_map(|(size, tile, author)| Op::Submit { size, tile, author }),
        2 => (6usize..=12, any::<bool>()).prop_map(|(size, approve)| Op::Generate { size, approve }),
        1 => (0usize..8).prop_map(Op::Approve),
        3 => Just(Op::Schedule),
        6 => (0u8..6, any::<bool>()).prop_map(|(token, side)| Op::Vote { token, side }),
        2 => (0i64..=DURATION).prop_map(Op::Advance),
        2 => Just(Op::Close),
        2 => Just(Op::Train),
        1 => (0usize..8).prop_map(Op::Delete),
    ]
}

fn config() -> HubConfig {
    HubConfig {
        poll_duration_secs: DURATION,
        homogeneous_chance: 0.3,
        image_scale: 1,
        train: TrainConfig {
            epochs_per_update: 1,
            ..TrainConfig::default()
        },
        admin_token: Some(ADMIN.to_string()),
        ..HubConfig::default()
    }
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for sub in ["maps", "polls"] {
        for entry in fs::read_dir(dir.join(sub)).unwrap() {
            let path = entry.unwrap().path();
            out.insert(format!("{sub}/{}", path.file_name().unwrap().to_string_lossy()), fs::read(&path).unwrap());
        }
    }
    out.insert("index.json".to_string(), fs::read(dir.join("index.json")).unwrap());
    out
}

fn check_invariants(hub: &Hub, before: &BTreeMap<String, (PollState, u32, u32)>) -> Result<(), TestCaseError> {
    let state = hub.state();
    for (id, poll) in &state.polls {
        let ledger = &state.ledgers[id];
        prop_assert_eq!(ledger.tally(), poll.tally(), "vote conservation in {}", id);
        if let Some(&(prev, a, b)) = before.get(id) {
            prop_assert!(prev == poll.state || prev.can_become(poll.state), "{:?} -> {:?}", prev, poll.state);
            prop_assert!(poll.votes_a >= a && poll.votes_b >= b);
            if prev != PollState::Open {
                prop_assert_eq!((poll.votes_a, poll.votes_b), (a, b), "votes after close in {}", id);
            }
        } else {
            prop_assert_eq!(poll.state, PollState::Open);
        }
        let stranger = hub.poll_view(id, Some("nobody")).unwrap();
        if poll.is_open() {
            prop_assert!(poll.reveal.is_none());
            prop_assert!(stranger.tallies.is_none() && stranger.reveal.is_none() && stranger.kind.is_none());
            for token in ledger.entries.keys() {
                let view = hub.poll_view(id, Some(token)).unwrap();
                prop_assert_eq!(view.tallies, Some(poll.tally()));
                prop_assert!(view.reveal.is_none());
            }
        } else {
            prop_assert!(poll.reveal.is_some());
            prop_assert_eq!(stranger.tallies, Some(poll.tally()));
            prop_assert_eq!(&stranger.reveal, &poll.reveal);
        }
        if poll.state == PollState::Trained {
            prop_assert!(poll.trained_version.is_some() && poll.tally().total() > 0);
        }
        if poll.state == PollState::Skipped {
            prop_assert_eq!(poll.tally().total(), 0);
        }
    }
    prop_assert!(state.open_polls().count() <= state.maps.len() / 2);
    Ok(())
}

/// Returns the number of trained and of non-open polls reached.
fn run(ops: Vec<Op>) -> Result<(usize, usize), TestCaseError> {
    let tmp = tempfile::tempdir().unwrap();
    let mut hub = Hub::open(tmp.path(), Registry::builtin(), config()).unwrap();
    let mut now = experiment_epoch();
    let mut gen_counter = 0;
    for op in ops {
        let before: BTreeMap<String, (PollState, u32, u32)> = hub
            .state()
            .polls
            .iter()
            .map(|(id, p)| (id.clone(), (p.state, p.votes_a, p.votes_b)))
            .collect();
        let snapshot = hub.state().clone();
        let map_ids: Vec<String> = hub.state().maps.keys().cloned().collect();
        let pick = |i: usize| map_ids.get(i % map_ids.len().max(1)).cloned().unwrap_or_default();
        let result: Result<(), String> = match op.clone() {
            Op::Submit { size, tile, author } => {
                let sub = MapSubmission {
                    tileset: "dungeon".to_string(),
                    size: size as i64,
                    cells: (0..size)
                        .map(|r| (0..size).map(|c| i64::from((tile as usize + r + 2 * c) as u8 % 16)).collect())
                        .collect(),
                    author: author.then(|| "@maker".to_string()),
                };
                hub.submit_map(&sub, now).map(drop).map_err(|e| e.to_string())
            }
            Op::Generate { size, approve } => {
                gen_counter += 1;
                let cells = (0..size * size).map(|i| ((i * gen_counter) % 16) as u8).collect();
                let map = TileMap::new("g", "dungeon", Grid::new(size, cells).unwrap(), Origin::Generated, now).unwrap().with_model_version(Some(0));
                match hub.add_generated(map, now) {
                    Ok(stored) if approve => hub.approve(&stored.id, ADMIN, now).map_err(|e| e.to_string()),
                    Ok(_) => Ok(()),
                    Err(e) => Err(e.to_string()),
                }
            }
            Op::Approve(i) => hub.approve(&pick(i), ADMIN, now).map_err(|e| e.to_string()),
            Op::Schedule => hub.schedule_pairing("dungeon", now).map(drop).map_err(|e| e.to_string()),
            Op::Vote { token, side } => match hub.current_poll().map(|p| p.id.clone()) {
                Ok(id) => {
                    let token = format!("tok{token}");
                    let voted = hub.state().ledgers[&id].entries.contains_key(&token);
                    let choice = if side { Side::A } else { Side::B };
                    let r = hub.cast_vote(&id, &token, choice, now);
                    if voted {
                        prop_assert!(r.is_err(), "second vote accepted");
                    }
                    r.map(drop).map_err(|e| e.to_string())
                }
                Err(e) => Err(e.to_string()),
            },
            Op::Advance(secs) => {
                now += Duration::seconds(secs);
                Ok(())
            }
            Op::Close => {
                let open = hub.state().open_polls().next().map(|p| p.id.clone());
                match open {
                    Some(id) => hub.close_poll(&id, now).map(drop).map_err(|e| e.to_string()),
                    None => Err("no open poll".to_string()),
                }
            }
            Op::Train => hub.resume(now).map(drop).map_err(|e| e.to_string()),
            Op::Delete(i) => hub.moderate_delete(&pick(i), ADMIN, now).map_err(|e| e.to_string()),
        };
        if result.is_err() && !matches!(op, Op::Generate { .. } | Op::Train) {
            prop_assert_eq!(hub.state(), &snapshot, "failed {:?} changed state", op);
        }
        check_invariants(&hub, &before)?;
    }

    let expected = files(tmp.path());
    let replica = tempfile::tempdir().unwrap();
    fs::copy(tmp.path().join("events.ndjson"), replica.path().join("events.ndjson")).unwrap();
    let reopened = Hub::open(replica.path(), Registry::builtin(), config()).unwrap();
    prop_assert_eq!(reopened.state(), hub.state());
    prop_assert_eq!(files(replica.path()), expected);
    let polls = hub.state().polls.values();
    let trained = polls.clone().filter(|p| p.state == PollState::Trained).count();
    Ok((trained, polls.filter(|p| !p.is_open()).count()))
}

/// Runs `cases` random sequences; returns totals of trained and of
/// non-open polls reached, or the first failing case.
pub fn check_random_sequences(cases: u32) -> Result<(usize, usize), String> {
    let mut runner = TestRunner::new(ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    });
    let reached = Cell::new((0usize, 0usize));
    runner
        .run(&prop::collection::vec(op(), 1..120), |ops| {
            let (trained, closed) = run(ops)?;
            let (t, c) = reached.get();
            reached.set((t + trained, c + closed));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(reached.get())
}
