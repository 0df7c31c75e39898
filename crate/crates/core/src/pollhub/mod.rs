//! Poll lifecycle and learning orchestration.
//!
//! All state changes are events appended to a newline-delimited JSON log and
//! then applied to an in-memory [`HubState`]; map, poll and ledger documents
//! are materialised from that state, so replaying the log rebuilds the store
//! byte for byte.

mod hub;
mod state;
mod stats;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::apm::{ApmError, Tally};
use crate::evolve::EvolveError;
use crate::render::RenderError;
use crate::tilemap::MapError;

pub use hub::{CycleReport, EvolutionJob, Hub, HubConfig, TickReport, TrainOutcome, VoteSource};
pub use state::{Event, EventBody, HubState, MapStatus};
pub use stats::{SeriesPoint, Stats, TilesetStats};

#[derive(Debug, Error)]
pub enum HubError {
    #[error("unknown tileset '{0}'")]
    UnknownTileset(String),
    #[error("no eligible maps to pair for '{0}'")]
    NoEligibleMaps(String),
    #[error("no open poll")]
    NoOpenPoll,
    #[error("unknown poll '{0}'")]
    UnknownPoll(String),
    #[error("unknown map '{0}'")]
    UnknownMap(String),
    #[error("poll '{0}' is closed")]
    PollClosed(String),
    #[error("this session already voted in poll '{0}'")]
    AlreadyVoted(String),
    #[error("poll '{0}' cannot close before its closing time")]
    NotYetClosable(String),
    #[error("poll '{0}' is still open")]
    PollStillOpen(String),
    #[error("illegal transition: {0}")]
    IllegalTransition(String),
    #[error("unauthorized")]
    Unauthorized,
    #[error("map '{0}' is in an open poll")]
    MapInOpenPoll(String),
    #[error(transparent)]
    InvalidMap(#[from] MapError),
    #[error(transparent)]
    Apm(#[from] ApmError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("event log: {0}")]
    Log(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl HubError {
    /// Stable machine-readable name.
    pub fn code(&self) -> &'static str {
        match self {
            HubError::UnknownTileset(_) => "UnknownTileset",
            HubError::NoEligibleMaps(_) => "NoEligibleMaps",
            HubError::NoOpenPoll => "NoOpenPoll",
            HubError::UnknownPoll(_) => "UnknownPoll",
            HubError::UnknownMap(_) => "UnknownMap",
            HubError::PollClosed(_) => "PollClosed",
            HubError::AlreadyVoted(_) => "AlreadyVoted",
            HubError::NotYetClosable(_) => "NotYetClosable",
            HubError::PollStillOpen(_) => "PollStillOpen",
            HubError::IllegalTransition(_) => "IllegalTransition",
            HubError::Unauthorized => "Unauthorized",
            HubError::MapInOpenPoll(_) => "MapInOpenPoll",
            HubError::InvalidMap(e) => match e {
                MapError::UnknownTileset(_) => "UnknownTileset",
                MapError::SizeOutOfRange(_) => "SizeOutOfRange",
                MapError::BadCell(_) => "BadCell",
                _ => "InvalidMap",
            },
            HubError::Apm(_) => "ModelError",
            HubError::Evolve(_) => "EvolutionError",
            HubError::Render(_) => "RenderError",
            HubError::Log(_) => "LogError",
            HubError::Io(_) => "IoError",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PollKind {
    Hybrid,
    UserUser,
    GenGen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PollState {
    Open,
    Closed,
    Trained,
    Skipped,
}

impl PollState {
    /// Whether `self → next` is an edge of the lifecycle.
    pub fn can_become(self, next: PollState) -> bool {
        matches!(
            (self, next),
            (PollState::Open, PollState::Closed)
                | (PollState::Closed, PollState::Trained)
                | (PollState::Closed, PollState::Skipped)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl std::str::FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(Side::A),
            "B" | "b" => Ok(Side::B),
            other => Err(format!("choice must be A or B, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserSide {
    None,
    A,
    B,
    Both,
}

/// Post-close disclosure of which side was user-made and by whom.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reveal {
    pub user_side: UserSide,
    /// Author of the user map (of side A when both are user maps).
    pub author: Option<String>,
    /// Author of side B when both sides are user maps.
    pub other_author: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollRecord {
    pub id: String,
    pub tileset_id: String,
    pub map_a_id: String,
    pub map_b_id: String,
    pub kind: PollKind,
    pub opened_at: DateTime<Utc>,
    pub closes_at: DateTime<Utc>,
    pub votes_a: u32,
    pub votes_b: u32,
    pub state: PollState,
    pub reveal: Option<Reveal>,
    /// Model version produced by training on this poll.
    pub trained_version: Option<u64>,
}

impl PollRecord {
    pub fn tally(&self) -> Tally {
        Tally {
            votes_a: self.votes_a,
            votes_b: self.votes_b,
        }
    }

    pub fn is_open(&self) -> bool {
        self.state == PollState::Open
    }

    pub fn side_of(&self, map_id: &str) -> Option<Side> {
        if self.map_a_id == map_id {
            Some(Side::A)
        } else if self.map_b_id == map_id {
            Some(Side::B)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteEntry {
    pub choice: Side,
    pub ts: DateTime<Utc>,
}

/// One-vote-per-session record of a poll.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VoteLedger {
    pub poll_id: String,
    pub entries: std::collections::BTreeMap<String, VoteEntry>,
}

impl VoteLedger {
    pub fn tally(&self) -> Tally {
        let a = self.entries.values().filter(|e| e.choice == Side::A).count() as u32;
        Tally {
            votes_a: a,
            votes_b: self.entries.len() as u32 - a,
        }
    }
}

/// What a given session may see of a poll.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollView {
    pub id: String,
    pub tileset: String,
    pub map_a_id: String,
    pub map_b_id: String,
    pub opened_at: DateTime<Utc>,
    pub closes_at: DateTime<Utc>,
    pub state: PollState,
    pub image_url: String,
    /// Present once the session has voted or the poll has closed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tallies: Option<Tally>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub your_vote: Option<Side>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<PollKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reveal: Option<Reveal>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub winner: Option<Winner>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    A,
    B,
    Tie,
}

impl Winner {
    pub fn of(t: Tally) -> Winner {
        match t.votes_a.cmp(&t.votes_b) {
            std::cmp::Ordering::Greater => Winner::A,
            std::cmp::Ordering::Less => Winner::B,
            std::cmp::Ordering::Equal => Winner::Tie,
        }
    }
}

pub fn image_url(poll_id: &str) -> String {
    format!("/api/pairings/{poll_id}/image.png")
}
