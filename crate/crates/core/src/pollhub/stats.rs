use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::state::{HubState, MapStatus};
use super::{PollKind, PollRecord, PollState};
use crate::tilemap::Origin;
use crate::util::{mean, ols_slope};

/// User vote share of one closed hybrid poll.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub poll_id: String,
    pub opened_at: DateTime<Utc>,
    pub user_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TilesetStats {
    pub tileset: String,
    pub maps_by_origin: BTreeMap<Origin, usize>,
    pub mean_map_size: Option<f64>,
    pub closed_polls: usize,
    pub mean_votes_per_poll: Option<f64>,
    pub hybrid_polls: usize,
    pub user_win_rate: Option<f64>,
    pub generated_win_rate: Option<f64>,
    pub tie_rate: Option<f64>,
    pub user_share_series: Vec<SeriesPoint>,
    /// Least-squares slope of user share against poll index.
    pub user_share_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub global: TilesetStats,
    pub tilesets: Vec<TilesetStats>,
}

fn summarize(name: &str, state: &HubState, tileset: Option<&str>) -> TilesetStats {
    let in_scope = |t: &str| tileset.is_none_or(|f| f == t);
    let maps: Vec<_> = state
        .maps
        .values()
        .filter(|m| in_scope(&m.tileset_id) && state.map_status(&m.id) != Some(MapStatus::Deleted))
        .collect();
    let mut maps_by_origin = BTreeMap::new();
    for m in &maps {
        *maps_by_origin.entry(m.origin).or_insert(0) += 1;
    }
    let sizes: Vec<f64> = maps.iter().map(|m| m.size() as f64).collect();

    let mut closed: Vec<&PollRecord> = state
        .polls
        .values()
        .filter(|p| in_scope(&p.tileset_id) && p.state != PollState::Open)
        .collect();
    closed.sort_by(|a, b| a.opened_at.cmp(&b.opened_at).then(a.id.cmp(&b.id)));
    let votes: Vec<f64> = closed.iter().map(|p| p.tally().total() as f64).collect();

    let (mut user_wins, mut gen_wins, mut ties) = (0usize, 0usize, 0usize);
    let mut series = Vec::new();
    let hybrid: Vec<&&PollRecord> = closed.iter().filter(|p| p.kind == PollKind::Hybrid).collect();
    for p in &hybrid {
        let user_is_a = state.maps.get(&p.map_a_id).is_some_and(|m| m.origin == Origin::User);
        let (user, other) = if user_is_a { (p.votes_a, p.votes_b) } else { (p.votes_b, p.votes_a) };
        match user.cmp(&other) {
            std::cmp::Ordering::Greater => user_wins += 1,
            std::cmp::Ordering::Less => gen_wins += 1,
            std::cmp::Ordering::Equal => ties += 1,
        }
        if let Some((sa, sb)) = p.tally().shares() {
            series.push(SeriesPoint {
                poll_id: p.id.clone(),
                opened_at: p.opened_at,
                user_share: f64::from(if user_is_a { sa } else { sb }),
            });
        }
    }
    let rate = |n: usize| (!hybrid.is_empty()).then(|| n as f64 / hybrid.len() as f64);
    let xs: Vec<f64> = (0..series.len()).map(|i| i as f64).collect();
    let ys: Vec<f64> = series.iter().map(|s| s.user_share).collect();
    TilesetStats {
        tileset: name.to_string(),
        maps_by_origin,
        mean_map_size: mean(&sizes),
        closed_polls: closed.len(),
        mean_votes_per_poll: mean(&votes),
        hybrid_polls: hybrid.len(),
        user_win_rate: rate(user_wins),
        generated_win_rate: rate(gen_wins),
        tie_rate: rate(ties),
        user_share_slope: ols_slope(&xs, &ys),
        user_share_series: series,
    }
}

/// Per-tileset and global summaries; `filter` restricts both to one tileset.
pub(crate) fn compute_stats(state: &HubState, filter: Option<&str>) -> Stats {
    let mut ids: Vec<&str> = state.maps.values().map(|m| m.tileset_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    let tilesets = ids
        .into_iter()
        .filter(|t| filter.is_none_or(|f| f == *t))
        .map(|t| summarize(t, state, Some(t)))
        .collect();
    Stats {
        global: summarize(filter.unwrap_or("all"), state, filter),
        tilesets,
    }
}
