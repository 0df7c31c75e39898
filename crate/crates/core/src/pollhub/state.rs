use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{HubError, PollKind, PollRecord, PollState, Reveal, Side, UserSide, VoteEntry, VoteLedger};
use crate::tilemap::{Origin, TileMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapStatus {
    PendingReview,
    Approved,
    Deleted,
}

/// One line of the event log: `{seq, ts, kind, payload}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub ts: DateTime<Utc>,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    MapAdded { map: TileMap, review: bool },
    MapApproved { map_id: String },
    MapDeleted { map_id: String },
    ModelAdopted { tileset: String, version: u64 },
    PollOpened { poll: PollRecord },
    VoteCast { poll_id: String, token: String, choice: Side },
    PollClosed { poll_id: String },
    PollTrained { poll_id: String, version: u64 },
    PollSkipped { poll_id: String },
}

/// Documents an applied event changed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum Touched {
    Map(String),
    Poll(String),
    Ledger(String),
    Image(String),
}

/// Materialised store contents. Changed only through [`HubState::apply`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HubState {
    pub maps: BTreeMap<String, TileMap>,
    pub status: BTreeMap<String, MapStatus>,
    pub polls: BTreeMap<String, PollRecord>,
    pub ledgers: BTreeMap<String, VoteLedger>,
    pub model_versions: BTreeMap<String, u64>,
    pub last_seq: u64,
    pub map_counter: u64,
    pub poll_counter: u64,
}

/// Contents of `index.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct IndexDoc {
    pub last_seq: u64,
    pub map_counter: u64,
    pub poll_counter: u64,
    pub model_versions: BTreeMap<String, u64>,
    pub status: BTreeMap<String, MapStatus>,
}

impl HubState {
    pub(crate) fn index_doc(&self) -> IndexDoc {
        IndexDoc {
            last_seq: self.last_seq,
            map_counter: self.map_counter,
            poll_counter: self.poll_counter,
            model_versions: self.model_versions.clone(),
            status: self.status.clone(),
        }
    }

    pub fn map_status(&self, id: &str) -> Option<MapStatus> {
        self.status.get(id).copied()
    }

    pub fn open_polls(&self) -> impl Iterator<Item = &PollRecord> {
        self.polls.values().filter(|p| p.is_open())
    }

    pub fn in_open_poll(&self, map_id: &str) -> bool {
        self.open_polls().any(|p| p.side_of(map_id).is_some())
    }

    fn poll(&self, id: &str) -> Result<&PollRecord, HubError> {
        self.polls.get(id).ok_or_else(|| HubError::UnknownPoll(id.to_string()))
    }

    fn map(&self, id: &str) -> Result<&TileMap, HubError> {
        self.maps.get(id).ok_or_else(|| HubError::UnknownMap(id.to_string()))
    }

    fn transition(&self, poll: &PollRecord, next: PollState) -> Result<(), HubError> {
        if poll.state.can_become(next) {
            Ok(())
        } else {
            Err(HubError::IllegalTransition(format!(
                "poll {} {:?} -> {:?}",
                poll.id, poll.state, next
            )))
        }
    }

    /// Validates `event` against the current state and, unless `dry_run`,
    /// applies it. Nothing changes when an error is returned.
    pub(crate) fn apply(&mut self, event: &Event, dry_run: bool) -> Result<Vec<Touched>, HubError> {
        if event.seq != self.last_seq + 1 {
            return Err(HubError::Log(format!(
                "expected seq {}, got {}",
                self.last_seq + 1,
                event.seq
            )));
        }
        let ts = event.ts;
        let touched = match &event.body {
            EventBody::MapAdded { map, review } => {
                if map.id.is_empty() || self.maps.contains_key(&map.id) {
                    return Err(HubError::IllegalTransition(format!("map id {:?} unusable", map.id)));
                }
                map.check_invariants()?;
                if map.evaluated {
                    return Err(HubError::IllegalTransition(format!("new map {} already evaluated", map.id)));
                }
                if dry_run {
                    return Ok(Vec::new());
                }
                let status = if *review { MapStatus::PendingReview } else { MapStatus::Approved };
                self.status.insert(map.id.clone(), status);
                self.maps.insert(map.id.clone(), map.clone());
                self.map_counter += 1;
                vec![Touched::Map(map.id.clone())]
            }
            EventBody::MapApproved { map_id } => {
                self.map(map_id)?;
                if self.status.get(map_id) != Some(&MapStatus::PendingReview) {
                    return Err(HubError::IllegalTransition(format!("map {map_id} is not awaiting review")));
                }
                if dry_run {
                    return Ok(Vec::new());
                }
                self.status.insert(map_id.clone(), MapStatus::Approved);
                Vec::new()
            }
            EventBody::MapDeleted { map_id } => {
                self.map(map_id)?;
                if self.status.get(map_id) == Some(&MapStatus::Deleted) {
                    return Err(HubError::IllegalTransition(format!("map {map_id} already deleted")));
                }
                if self.in_open_poll(map_id) {
                    return Err(HubError::MapInOpenPoll(map_id.clone()));
                }
                if dry_run {
                    return Ok(Vec::new());
                }
                self.status.insert(map_id.clone(), MapStatus::Deleted);
                Vec::new()
            }
            EventBody::ModelAdopted { tileset, version } => {
                if self.model_versions.get(tileset).is_some_and(|v| v > version) {
                    return Err(HubError::IllegalTransition(format!("model {tileset} cannot go back to v{version}")));
                }
                if dry_run {
                    return Ok(Vec::new());
                }
                self.model_versions.insert(tileset.clone(), *version);
                Vec::new()
            }
            EventBody::PollOpened { poll } => {
                self.check_new_poll(poll)?;
                if dry_run {
                    return Ok(Vec::new());
                }
                self.ledgers.insert(
                    poll.id.clone(),
                    VoteLedger {
                        poll_id: poll.id.clone(),
                        entries: BTreeMap::new(),
                    },
                );
                self.polls.insert(poll.id.clone(), poll.clone());
                self.poll_counter += 1;
                vec![
                    Touched::Poll(poll.id.clone()),
                    Touched::Ledger(poll.id.clone()),
                    Touched::Image(poll.id.clone()),
                ]
            }
            EventBody::VoteCast { poll_id, token, choice } => {
                let poll = self.poll(poll_id)?;
                if !poll.is_open() || ts >= poll.closes_at {
                    return Err(HubError::PollClosed(poll_id.clone()));
                }
                if self.ledgers.get(poll_id).is_some_and(|l| l.entries.contains_key(token)) {
                    return Err(HubError::AlreadyVoted(poll_id.clone()));
                }
                if dry_run {
                    return Ok(Vec::new());
                }
                let ledger = self.ledgers.entry(poll_id.clone()).or_default();
                ledger.poll_id = poll_id.clone();
                ledger.entries.insert(token.clone(), VoteEntry { choice: *choice, ts });
                let poll = self.polls.get_mut(poll_id).expect("checked above");
                match choice {
                    Side::A => poll.votes_a += 1,
                    Side::B => poll.votes_b += 1,
                }
                vec![Touched::Poll(poll_id.clone()), Touched::Ledger(poll_id.clone())]
            }
            EventBody::PollClosed { poll_id } => {
                let poll = self.poll(poll_id)?;
                if poll.is_open() && ts < poll.closes_at {
                    return Err(HubError::NotYetClosable(poll_id.clone()));
                }
                self.transition(poll, PollState::Closed)?;
                if dry_run {
                    return Ok(Vec::new());
                }
                let (a_id, b_id) = (poll.map_a_id.clone(), poll.map_b_id.clone());
                let reveal = self.reveal(&a_id, &b_id);
                let poll = self.polls.get_mut(poll_id).expect("checked above");
                poll.state = PollState::Closed;
                poll.reveal = Some(reveal);
                for id in [&a_id, &b_id] {
                    if let Some(m) = self.maps.get_mut(id) {
                        m.evaluated = true;
                    }
                }
                vec![Touched::Poll(poll_id.clone()), Touched::Map(a_id), Touched::Map(b_id)]
            }
            EventBody::PollTrained { poll_id, version } => {
                let poll = self.poll(poll_id)?;
                self.transition(poll, PollState::Trained)?;
                if poll.votes_a + poll.votes_b == 0 {
                    return Err(HubError::IllegalTransition(format!("poll {poll_id} has no votes to train on")));
                }
                let current = self.model_versions.get(&poll.tileset_id).copied();
                if current.map(|v| v + 1) != Some(*version) {
                    return Err(HubError::IllegalTransition(format!(
                        "model {} v{version} does not follow {current:?}",
                        poll.tileset_id
                    )));
                }
                if dry_run {
                    return Ok(Vec::new());
                }
                let tileset = poll.tileset_id.clone();
                let poll = self.polls.get_mut(poll_id).expect("checked above");
                poll.state = PollState::Trained;
                poll.trained_version = Some(*version);
                self.model_versions.insert(tileset, *version);
                vec![Touched::Poll(poll_id.clone())]
            }
            EventBody::PollSkipped { poll_id } => {
                let poll = self.poll(poll_id)?;
                self.transition(poll, PollState::Skipped)?;
                if poll.votes_a + poll.votes_b != 0 {
                    return Err(HubError::IllegalTransition(format!("poll {poll_id} has votes")));
                }
                if dry_run {
                    return Ok(Vec::new());
                }
                self.polls.get_mut(poll_id).expect("checked above").state = PollState::Skipped;
                vec![Touched::Poll(poll_id.clone())]
            }
        };
        self.last_seq = event.seq;
        Ok(touched)
    }

    fn check_new_poll(&self, poll: &PollRecord) -> Result<(), HubError> {
        let bad = |why: &str| Err(HubError::IllegalTransition(format!("poll {}: {why}", poll.id)));
        if poll.id.is_empty() || self.polls.contains_key(&poll.id) {
            return bad("id unusable");
        }
        if poll.state != PollState::Open || poll.votes_a + poll.votes_b != 0 || poll.reveal.is_some() || poll.trained_version.is_some() {
            return bad("must start open and empty");
        }
        if poll.closes_at < poll.opened_at {
            return bad("closes before it opens");
        }
        if poll.map_a_id == poll.map_b_id {
            return bad("a map cannot face itself");
        }
        let mut origins = Vec::with_capacity(2);
        for id in [&poll.map_a_id, &poll.map_b_id] {
            let map = self.map(id)?;
            if map.tileset_id != poll.tileset_id {
                return bad("map from another tileset");
            }
            if self.status.get(id) != Some(&MapStatus::Approved) {
                return bad("map not approved");
            }
            if self.in_open_poll(id) {
                return Err(HubError::MapInOpenPoll(id.clone()));
            }
            origins.push(map.origin == Origin::User);
        }
        let kind = match (origins[0], origins[1]) {
            (true, true) => PollKind::UserUser,
            (false, false) => PollKind::GenGen,
            _ => PollKind::Hybrid,
        };
        if kind != poll.kind {
            return bad("kind does not match map origins");
        }
        Ok(())
    }

    fn reveal(&self, a_id: &str, b_id: &str) -> Reveal {
        let user = |id: &str| self.maps.get(id).filter(|m| m.origin == Origin::User);
        match (user(a_id), user(b_id)) {
            (Some(a), Some(b)) => Reveal {
                user_side: UserSide::Both,
                author: a.author.clone(),
                other_author: b.author.clone(),
            },
            (Some(a), None) => Reveal {
                user_side: UserSide::A,
                author: a.author.clone(),
                other_author: None,
            },
            (None, Some(b)) => Reveal {
                user_side: UserSide::B,
                author: b.author.clone(),
                other_author: None,
            },
            (None, None) => Reveal {
                user_side: UserSide::None,
                author: None,
                other_author: None,
            },
        }
    }
}
