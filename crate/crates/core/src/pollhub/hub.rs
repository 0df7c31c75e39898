use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::state::{Event, EventBody, HubState, MapStatus, Touched};
use super::stats::{compute_stats, Stats};
use super::{image_url, HubError, PollKind, PollRecord, PollState, PollView, Side, Winner};
use crate::apm::{
    build_apm, build_training_set, list_versions, load_checkpoint, save_checkpoint, train_update, version_dir, ApmModel,
    Tally, TrainConfig,
};
use crate::evolve::{evolve, ApmFitness, EvolutionConfig, RunContext};
use crate::render::render_pairing_png;
use crate::synthvoter::SynthConfig;
use crate::tilemap::{validate_map, MapSubmission, Origin, PatternLibrary, TileMap};
use crate::tileset::Registry;
use crate::util::derive_seed;

pub const EVENT_LOG: &str = "events.ndjson";
pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubConfig {
    pub poll_duration_secs: i64,
    /// Chance that a pairing is user-vs-user or generated-vs-generated.
    pub homogeneous_chance: f64,
    /// Generated maps wait for operator approval before pairing.
    pub review_generated: bool,
    /// Let evaluated user maps be paired again once no fresh ones are left.
    pub repeat_user_maps: bool,
    pub evolution: EvolutionConfig,
    pub train: TrainConfig,
    /// Earlier trained polls of the tileset replayed with each new one.
    pub replay_polls: usize,
    pub synth: SynthConfig,
    pub image_scale: usize,
    pub seed: u64,
    #[serde(skip)]
    pub admin_token: Option<String>,
}

impl Default for HubConfig {
    fn default() -> Self {
        HubConfig {
            poll_duration_secs: 3 * 3600,
            homogeneous_chance: 0.10,
            review_generated: true,
            repeat_user_maps: false,
            evolution: EvolutionConfig::desk(),
            train: TrainConfig::default(),
            replay_polls: 0,
            synth: SynthConfig::default(),
            image_scale: 4,
            seed: 0,
            admin_token: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum TrainOutcome {
    Trained { version: u64 },
    Skipped,
}

/// Supplies the ballots of a poll, e.g. synthetic voters.
pub trait VoteSource {
    fn tally(&mut self, poll: &PollRecord, a: &TileMap, b: &TileMap) -> Tally;
}

impl<F: FnMut(&PollRecord, &TileMap, &TileMap) -> Tally> VoteSource for F {
    fn tally(&mut self, poll: &PollRecord, a: &TileMap, b: &TileMap) -> Tally {
        self(poll, a, b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub poll: PollRecord,
    /// Vote share of the generated side of a hybrid poll.
    pub generated_share: Option<f64>,
    pub outcome: TrainOutcome,
    pub evolved_map_id: Option<String>,
    pub finished_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TickReport {
    pub closed: Vec<String>,
    pub trained: Vec<(String, TrainOutcome)>,
    pub opened: Option<String>,
    /// Tilesets with no generated map waiting; run an [`EvolutionJob`].
    pub needs_evolution: Vec<String>,
    pub errors: Vec<String>,
}

/// Self-contained evolution run that can execute without the hub.
#[derive(Debug, Clone)]
pub struct EvolutionJob {
    pub tileset_id: String,
    pub model: ApmModel,
    pub library: PatternLibrary,
    pub corpus: PatternLibrary,
    pub cfg: EvolutionConfig,
    pub synth: SynthConfig,
    pub now: DateTime<Utc>,
}

impl EvolutionJob {
    /// The selected map; its id is reassigned by [`Hub::add_generated`].
    pub fn run(&self) -> Result<TileMap, HubError> {
        let mut fitness = ApmFitness::new(&self.model);
        let run = evolve(
            &mut fitness,
            &self.library,
            &self.corpus,
            &self.cfg,
            RunContext {
                tileset_id: &self.tileset_id,
                map_id: "pending".to_string(),
                model_version: Some(self.model.version),
                now: self.now,
                synth: self.synth,
            },
        )?;
        Ok(run.map)
    }
}

/// Poll store rooted at one directory:
/// `events.ndjson`, `index.json`, `maps/`, `polls/`, `checkpoints/`.
pub struct Hub {
    dir: PathBuf,
    registry: Registry,
    cfg: HubConfig,
    state: HubState,
    log: File,
    models: HashMap<(String, u64), ApmModel>,
}

impl std::fmt::Debug for Hub {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Hub")
            .field("dir", &self.dir)
            .field("last_seq", &self.state.last_seq)
            .finish()
    }
}

fn oldest_two<'a>(kind: PollKind, pool: &[&'a TileMap]) -> Option<(PollKind, &'a TileMap, &'a TileMap)> {
    (pool.len() >= 2).then(|| (kind, pool[0], pool[1]))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HubError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| HubError::Log(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

impl Hub {
    /// Opens (or creates) a store and replays its event log.
    pub fn open(dir: impl Into<PathBuf>, registry: Registry, cfg: HubConfig) -> Result<Hub, HubError> {
        let dir = dir.into();
        for sub in ["maps", "polls", "checkpoints"] {
            fs::create_dir_all(dir.join(sub))?;
        }
        let log_path = dir.join(EVENT_LOG);
        let mut state = HubState::default();
        if log_path.is_file() {
            let reader = BufReader::new(File::open(&log_path)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let event: Event =
                    serde_json::from_str(&line).map_err(|e| HubError::Log(format!("line {}: {e}", n + 1)))?;
                state.apply(&event, false)?;
            }
        }
        let log = OpenOptions::new().create(true).append(true).open(&log_path)?;
        let hub = Hub {
            dir,
            registry,
            cfg,
            state,
            log,
            models: HashMap::new(),
        };
        hub.materialize_all()?;
        Ok(hub)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn config(&self) -> &HubConfig {
        &self.cfg
    }

    pub fn state(&self) -> &HubState {
        &self.state
    }

    pub fn checkpoint_root(&self) -> PathBuf {
        self.dir.join("checkpoints")
    }

    pub fn image_path(&self, poll_id: &str) -> PathBuf {
        self.dir.join("polls").join(format!("{poll_id}.png"))
    }

    pub fn map(&self, id: &str) -> Option<&TileMap> {
        self.state.maps.get(id)
    }

    pub fn poll(&self, id: &str) -> Result<&PollRecord, HubError> {
        self.state.polls.get(id).ok_or_else(|| HubError::UnknownPoll(id.to_string()))
    }

    /// Maps that are not tombstoned.
    pub fn public_maps(&self) -> impl Iterator<Item = &TileMap> {
        self.state
            .maps
            .values()
            .filter(|m| self.state.map_status(&m.id) != Some(MapStatus::Deleted))
    }

    /// Generated maps awaiting operator approval.
    pub fn review_queue(&self) -> Vec<&TileMap> {
        self.state
            .maps
            .values()
            .filter(|m| self.state.map_status(&m.id) == Some(MapStatus::PendingReview))
            .collect()
    }

    pub fn stats(&self, tileset: Option<&str>) -> Stats {
        compute_stats(&self.state, tileset)
    }

    fn commit(&mut self, ts: DateTime<Utc>, body: EventBody) -> Result<Event, HubError> {
        let event = Event {
            seq: self.state.last_seq + 1,
            ts,
            body,
        };
        self.state.apply(&event, true)?;
        let line = serde_json::to_string(&event).map_err(|e| HubError::Log(e.to_string()))?;
        self.log.write_all(line.as_bytes())?;
        self.log.write_all(b"\n")?;
        self.log.flush()?;
        let touched = self.state.apply(&event, false)?;
        self.materialize(&touched)?;
        Ok(event)
    }

    fn materialize(&self, touched: &[Touched]) -> Result<(), HubError> {
        for t in touched {
            match t {
                Touched::Map(id) => write_json(&self.dir.join("maps").join(format!("{id}.json")), &self.state.maps[id])?,
                Touched::Poll(id) => write_json(&self.dir.join("polls").join(format!("{id}.json")), &self.state.polls[id])?,
                Touched::Ledger(id) => write_json(
                    &self.dir.join("polls").join(format!("{id}.votes.json")),
                    &self.state.ledgers[id],
                )?,
                Touched::Image(id) => {
                    let poll = &self.state.polls[id];
                    let png = render_pairing_png(
                        &self.state.maps[&poll.map_a_id],
                        &self.state.maps[&poll.map_b_id],
                        &self.registry,
                        self.cfg.image_scale,
                    )?;
                    fs::write(self.image_path(id), png)?;
                }
            }
        }
        write_json(&self.dir.join(INDEX_FILE), &self.state.index_doc())
    }

    fn materialize_all(&self) -> Result<(), HubError> {
        let mut touched: Vec<Touched> = self.state.maps.keys().map(|k| Touched::Map(k.clone())).collect();
        for id in self.state.polls.keys() {
            touched.extend([Touched::Poll(id.clone()), Touched::Ledger(id.clone())]);
            if !self.image_path(id).is_file() {
                touched.push(Touched::Image(id.clone()));
            }
        }
        self.materialize(&touched)
    }

    fn check_admin(&self, token: &str) -> Result<(), HubError> {
        match &self.cfg.admin_token {
            Some(t) if !t.is_empty() && t == token => Ok(()),
            _ => Err(HubError::Unauthorized),
        }
    }

    fn next_map_id(&self) -> String {
        format!("m{:06}", self.state.map_counter + 1)
    }

    /// Stores a validated user submission.
    pub fn submit_map(&mut self, submission: &MapSubmission, now: DateTime<Utc>) -> Result<TileMap, HubError> {
        let mut map = validate_map(submission, &self.registry, now)?;
        map.id = self.next_map_id();
        self.commit(now, EventBody::MapAdded { map: map.clone(), review: false })?;
        Ok(map)
    }

    /// Stores a user map as-is apart from a fresh id (used to seed a store).
    pub fn import_user_map(&mut self, map: &TileMap, now: DateTime<Utc>) -> Result<TileMap, HubError> {
        if map.origin != Origin::User {
            return Err(HubError::IllegalTransition(format!("map {} is not user-made", map.id)));
        }
        if !self.registry.contains(&map.tileset_id) {
            return Err(HubError::UnknownTileset(map.tileset_id.clone()));
        }
        let mut map = map.clone();
        map.id = self.next_map_id();
        map.evaluated = false;
        self.commit(now, EventBody::MapAdded { map: map.clone(), review: false })?;
        Ok(map)
    }

    /// Stores an evolved map, queued for review when configured.
    pub fn add_generated(&mut self, map: TileMap, now: DateTime<Utc>) -> Result<TileMap, HubError> {
        if map.origin != Origin::Generated {
            return Err(HubError::IllegalTransition(format!("map {} is not generated", map.id)));
        }
        let mut map = map;
        map.id = self.next_map_id();
        map.evaluated = false;
        let review = self.cfg.review_generated;
        self.commit(now, EventBody::MapAdded { map: map.clone(), review })?;
        Ok(map)
    }

    pub fn approve(&mut self, map_id: &str, token: &str, now: DateTime<Utc>) -> Result<(), HubError> {
        self.check_admin(token)?;
        self.commit(now, EventBody::MapApproved { map_id: map_id.to_string() })?;
        Ok(())
    }

    /// Tombstones a map: it leaves pairing, the pattern library and listings.
    pub fn moderate_delete(&mut self, map_id: &str, token: &str, now: DateTime<Utc>) -> Result<(), HubError> {
        self.check_admin(token)?;
        self.commit(now, EventBody::MapDeleted { map_id: map_id.to_string() })?;
        Ok(())
    }

    /// Current model version of a tileset, adopting the newest checkpoint (or
    /// an untrained model) on first use.
    pub fn ensure_model(&mut self, tileset: &str, now: DateTime<Utc>) -> Result<u64, HubError> {
        if !self.registry.contains(tileset) {
            return Err(HubError::UnknownTileset(tileset.to_string()));
        }
        if let Some(&v) = self.state.model_versions.get(tileset) {
            return Ok(v);
        }
        let root = self.checkpoint_root();
        let version = match list_versions(&root, tileset)?.pop() {
            Some(v) => v,
            None => {
                let model = build_apm(tileset, derive_seed(self.cfg.seed, 0xA9));
                save_checkpoint(&root, &model)?;
                model.version
            }
        };
        self.commit(
            now,
            EventBody::ModelAdopted {
                tileset: tileset.to_string(),
                version,
            },
        )?;
        Ok(version)
    }

    /// The model of `tileset` at `version`, from cache or disk.
    pub fn model(&mut self, tileset: &str, version: u64) -> Result<ApmModel, HubError> {
        let key = (tileset.to_string(), version);
        if let Some(m) = self.models.get(&key) {
            return Ok(m.clone());
        }
        let model = load_checkpoint(&version_dir(&self.checkpoint_root(), tileset, version))?;
        self.models.insert(key, model.clone());
        Ok(model)
    }

    pub fn current_model(&mut self, tileset: &str, now: DateTime<Utc>) -> Result<ApmModel, HubError> {
        let v = self.ensure_model(tileset, now)?;
        self.model(tileset, v)
    }

    fn paired_count(&self, map_id: &str) -> usize {
        self.state.polls.values().filter(|p| p.side_of(map_id).is_some()).count()
    }

    /// Approved, unevaluated, idle maps of one origin, oldest first.
    pub fn eligible(&self, tileset: &str, origin: Origin) -> Vec<&TileMap> {
        let mut maps: Vec<&TileMap> = self
            .state
            .maps
            .values()
            .filter(|m| {
                m.tileset_id == tileset
                    && m.origin == origin
                    && !m.evaluated
                    && self.state.map_status(&m.id) == Some(MapStatus::Approved)
                    && !self.state.in_open_poll(&m.id)
            })
            .collect();
        maps.sort_by(|a, b| a.created_at.cmp(&b.created_at).then(a.id.cmp(&b.id)));
        maps
    }

    fn user_candidates(&self, tileset: &str) -> Vec<&TileMap> {
        let fresh = self.eligible(tileset, Origin::User);
        if !fresh.is_empty() || !self.cfg.repeat_user_maps {
            return fresh;
        }
        let mut used: Vec<(&TileMap, usize)> = self
            .state
            .maps
            .values()
            .filter(|m| {
                m.tileset_id == tileset
                    && m.origin == Origin::User
                    && self.state.map_status(&m.id) == Some(MapStatus::Approved)
                    && !self.state.in_open_poll(&m.id)
            })
            .map(|m| (m, self.paired_count(&m.id)))
            .collect();
        used.sort_by(|(a, ca), (b, cb)| ca.cmp(cb).then(a.created_at.cmp(&b.created_at)).then(a.id.cmp(&b.id)));
        used.into_iter().map(|(m, _)| m).collect()
    }

    /// Opens a poll: usually the oldest eligible user map against the oldest
    /// eligible generated map, sometimes two of the same origin.
    pub fn schedule_pairing(&mut self, tileset: &str, now: DateTime<Utc>) -> Result<PollRecord, HubError> {
        if !self.registry.contains(tileset) {
            return Err(HubError::UnknownTileset(tileset.to_string()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, self.state.last_seq + 1));
        let users = self.user_candidates(tileset);
        let gens = self.eligible(tileset, Origin::Generated);
        let homogeneous = rng.random::<f64>() < self.cfg.homogeneous_chance;
        let user_first = rng.random::<bool>();
        let hybrid = (!users.is_empty() && !gens.is_empty()).then(|| (PollKind::Hybrid, users[0], gens[0]));
        let choice = if homogeneous {
            let (first, second) = if user_first {
                (oldest_two(PollKind::UserUser, &users), oldest_two(PollKind::GenGen, &gens))
            } else {
                (oldest_two(PollKind::GenGen, &gens), oldest_two(PollKind::UserUser, &users))
            };
            first.or(second).or(hybrid)
        } else {
            hybrid
        };
        let (kind, x, y) = choice.ok_or_else(|| HubError::NoEligibleMaps(tileset.to_string()))?;
        let (a, b) = if rng.random::<bool>() { (x, y) } else { (y, x) };
        let poll = PollRecord {
            id: format!("p{:06}", self.state.poll_counter + 1),
            tileset_id: tileset.to_string(),
            map_a_id: a.id.clone(),
            map_b_id: b.id.clone(),
            kind,
            opened_at: now,
            closes_at: now + Duration::seconds(self.cfg.poll_duration_secs.max(0)),
            votes_a: 0,
            votes_b: 0,
            state: PollState::Open,
            reveal: None,
            trained_version: None,
        };
        self.commit(now, EventBody::PollOpened { poll: poll.clone() })?;
        Ok(poll)
    }

    pub fn cast_vote(&mut self, poll_id: &str, token: &str, choice: Side, now: DateTime<Utc>) -> Result<Tally, HubError> {
        self.commit(
            now,
            EventBody::VoteCast {
                poll_id: poll_id.to_string(),
                token: token.to_string(),
                choice,
            },
        )?;
        Ok(self.state.polls[poll_id].tally())
    }

    pub fn close_poll(&mut self, poll_id: &str, now: DateTime<Utc>) -> Result<PollRecord, HubError> {
        self.commit(now, EventBody::PollClosed { poll_id: poll_id.to_string() })?;
        Ok(self.state.polls[poll_id].clone())
    }

    /// Trains the tileset's model on a closed poll, or skips it when nobody
    /// voted. On a training error the poll stays closed for a retry.
    pub fn train_from_poll(&mut self, poll_id: &str, now: DateTime<Utc>) -> Result<TrainOutcome, HubError> {
        let poll = self.poll(poll_id)?.clone();
        match poll.state {
            PollState::Open => return Err(HubError::PollStillOpen(poll_id.to_string())),
            PollState::Closed => {}
            other => {
                return Err(HubError::IllegalTransition(format!("poll {poll_id} is already {other:?}")));
            }
        }
        if poll.tally().total() == 0 {
            self.commit(now, EventBody::PollSkipped { poll_id: poll_id.to_string() })?;
            return Ok(TrainOutcome::Skipped);
        }
        let version = self.ensure_model(&poll.tileset_id, now)?;
        let model = self.model(&poll.tileset_id, version)?;
        let mut samples = Vec::new();
        for p in self.replay_set(&poll) {
            let a = &self.state.maps[&p.map_a_id];
            let b = &self.state.maps[&p.map_b_id];
            samples.extend(build_training_set(p.tally(), a, b)?);
        }
        let mut next = train_update(&model, &samples, &self.cfg.train)?;
        next.trained_pairings = model.trained_pairings + 1;
        save_checkpoint(&self.checkpoint_root(), &next)?;
        self.commit(
            now,
            EventBody::PollTrained {
                poll_id: poll_id.to_string(),
                version: next.version,
            },
        )?;
        let v = next.version;
        self.models.insert((poll.tileset_id.clone(), v), next);
        Ok(TrainOutcome::Trained { version: v })
    }

    /// Up to `replay_polls` most recently trained polls of the same tileset,
    /// oldest first, followed by `poll`.
    fn replay_set<'a>(&'a self, poll: &'a PollRecord) -> Vec<&'a PollRecord> {
        let mut earlier: Vec<&PollRecord> = self
            .state
            .polls
            .values()
            .filter(|p| p.tileset_id == poll.tileset_id && p.trained_version.is_some())
            .collect();
        earlier.sort_by_key(|p| p.trained_version);
        let skip = earlier.len().saturating_sub(self.cfg.replay_polls);
        let mut set: Vec<&PollRecord> = earlier.split_off(skip);
        set.push(poll);
        set
    }

    /// Trains every poll left closed, e.g. after a crash.
    pub fn resume(&mut self, now: DateTime<Utc>) -> Result<Vec<(String, TrainOutcome)>, HubError> {
        let pending: Vec<String> = self
            .state
            .polls
            .values()
            .filter(|p| p.state == PollState::Closed)
            .map(|p| p.id.clone())
            .collect();
        let mut done = Vec::with_capacity(pending.len());
        for id in pending {
            let outcome = self.train_from_poll(&id, now)?;
            done.push((id, outcome));
        }
        Ok(done)
    }

    /// Snapshot needed to evolve a map for `tileset` with the current model
    /// and the current user maps.
    pub fn prepare_evolution(&mut self, tileset: &str, now: DateTime<Utc>) -> Result<EvolutionJob, HubError> {
        let model = self.current_model(tileset, now)?;
        let grids: Vec<_> = self
            .public_maps()
            .filter(|m| m.tileset_id == tileset && m.origin == Origin::User)
            .map(|m| &m.grid)
            .collect();
        if grids.is_empty() {
            return Err(HubError::Evolve(crate::evolve::EvolveError::EmptyLibrary));
        }
        let library = PatternLibrary::from_grids(tileset, grids.iter().copied(), 2)?;
        let corpus = if self.cfg.synth.k == 2 {
            library.clone()
        } else {
            PatternLibrary::from_grids(tileset, grids.iter().copied(), self.cfg.synth.k)?
        };
        let pad = self
            .registry
            .get(tileset)
            .map(|t| t.empty_index)
            .map_err(|_| HubError::UnknownTileset(tileset.to_string()))?;
        Ok(EvolutionJob {
            tileset_id: tileset.to_string(),
            model,
            library,
            corpus,
            cfg: EvolutionConfig {
                pad_tile: pad,
                seed: derive_seed(self.cfg.seed, (1 << 40) | self.state.last_seq),
                ..self.cfg.evolution
            },
            synth: self.cfg.synth,
            now,
        })
    }

    pub fn evolve_now(&mut self, tileset: &str, now: DateTime<Utc>) -> Result<TileMap, HubError> {
        let job = self.prepare_evolution(tileset, now)?;
        let map = job.run()?;
        self.add_generated(map, now)
    }

    /// Generated maps that will be paired eventually (approved or in review).
    pub fn queued_generated(&self, tileset: &str) -> usize {
        self.state
            .maps
            .values()
            .filter(|m| {
                m.tileset_id == tileset
                    && m.origin == Origin::Generated
                    && !m.evaluated
                    && matches!(
                        self.state.map_status(&m.id),
                        Some(MapStatus::Approved | MapStatus::PendingReview)
                    )
                    && !self.state.in_open_poll(&m.id)
            })
            .count()
    }

    /// One full loop on a virtual clock: evolve if needed, pair, collect the
    /// ballots, close, train, then evolve the next map with the new model.
    pub fn run_cycle<V: VoteSource + ?Sized>(
        &mut self,
        tileset: &str,
        now: DateTime<Utc>,
        voters: &mut V,
    ) -> Result<CycleReport, HubError> {
        if self.eligible(tileset, Origin::Generated).is_empty() && self.queued_generated(tileset) == 0 {
            self.evolve_now(tileset, now)?;
        }
        let poll = self.schedule_pairing(tileset, now)?;
        let a = self.state.maps[&poll.map_a_id].clone();
        let b = self.state.maps[&poll.map_b_id].clone();
        let tally = voters.tally(&poll, &a, &b);
        for i in 0..tally.total() {
            let choice = if i < tally.votes_a { Side::A } else { Side::B };
            self.cast_vote(&poll.id, &format!("sim-{}-{i:04}", poll.id), choice, now)?;
        }
        let end = poll.closes_at;
        self.close_poll(&poll.id, end)?;
        let outcome = self.train_from_poll(&poll.id, end)?;
        let evolved = if self.queued_generated(tileset) == 0 {
            Some(self.evolve_now(tileset, end)?.id)
        } else {
            None
        };
        let poll = self.state.polls[&poll.id].clone();
        let generated_share = match (poll.kind, poll.tally().shares()) {
            (PollKind::Hybrid, Some((sa, sb))) => Some(f64::from(if a.origin == Origin::Generated { sa } else { sb })),
            _ => None,
        };
        Ok(CycleReport {
            poll,
            generated_share,
            outcome,
            evolved_map_id: evolved,
            finished_at: end,
        })
    }

    /// Periodic housekeeping for a live server: close due polls, train them,
    /// list tilesets needing a generated map, and open a poll when none is
    /// running. Evolution itself is left to the caller.
    pub fn tick(&mut self, now: DateTime<Utc>) -> TickReport {
        let mut report = TickReport::default();
        let due: Vec<String> = self
            .state
            .open_polls()
            .filter(|p| now >= p.closes_at)
            .map(|p| p.id.clone())
            .collect();
        for id in due {
            match self.close_poll(&id, now) {
                Ok(_) => report.closed.push(id),
                Err(e) => report.errors.push(format!("close {id}: {e}")),
            }
        }
        let closed: Vec<String> = self
            .state
            .polls
            .values()
            .filter(|p| p.state == PollState::Closed)
            .map(|p| p.id.clone())
            .collect();
        for id in closed {
            match self.train_from_poll(&id, now) {
                Ok(o) => report.trained.push((id, o)),
                Err(e) => report.errors.push(format!("train {id}: {e}")),
            }
        }
        let tilesets: Vec<String> = self.registry.ids().map(str::to_string).collect();
        for t in &tilesets {
            let has_users = self.public_maps().any(|m| &m.tileset_id == t && m.origin == Origin::User);
            if has_users && self.queued_generated(t) == 0 {
                report.needs_evolution.push(t.clone());
            }
        }
        if self.state.open_polls().next().is_none() && !tilesets.is_empty() {
            let start = self.state.poll_counter as usize % tilesets.len();
            for k in 0..tilesets.len() {
                let t = &tilesets[(start + k) % tilesets.len()];
                if let Ok(p) = self.schedule_pairing(t, now) {
                    report.opened = Some(p.id);
                    break;
                }
            }
        }
        report
    }

    /// The most recently opened poll that is still open.
    pub fn current_poll(&self) -> Result<&PollRecord, HubError> {
        self.state
            .open_polls()
            .max_by(|a, b| a.opened_at.cmp(&b.opened_at).then(a.id.cmp(&b.id)))
            .ok_or(HubError::NoOpenPoll)
    }

    /// What `token` may see: tallies only after voting or closing, kind and
    /// reveal only after closing.
    pub fn poll_view(&self, poll_id: &str, token: Option<&str>) -> Result<PollView, HubError> {
        let poll = self.poll(poll_id)?;
        let your_vote = token.and_then(|t| {
            self.state
                .ledgers
                .get(poll_id)
                .and_then(|l| l.entries.get(t))
                .map(|e| e.choice)
        });
        let closed = !poll.is_open();
        Ok(PollView {
            id: poll.id.clone(),
            tileset: poll.tileset_id.clone(),
            map_a_id: poll.map_a_id.clone(),
            map_b_id: poll.map_b_id.clone(),
            opened_at: poll.opened_at,
            closes_at: poll.closes_at,
            state: poll.state,
            image_url: image_url(&poll.id),
            tallies: (closed || your_vote.is_some()).then(|| poll.tally()),
            your_vote,
            kind: closed.then_some(poll.kind),
            reveal: if closed { poll.reveal.clone() } else { None },
            winner: closed.then(|| Winner::of(poll.tally())),
        })
    }

    /// Full view of a closed poll.
    pub fn poll_result(&self, poll_id: &str) -> Result<PollView, HubError> {
        let poll = self.poll(poll_id)?;
        if poll.is_open() {
            return Err(HubError::PollStillOpen(poll_id.to_string()));
        }
        self.poll_view(poll_id, None)
    }
}
