//! Map data model: square grids of tile indices, one-hot encoding, sliding
//! 4×4 windows and k×k pattern harvesting.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tileset::{Registry, TILE_COUNT};

pub const MIN_MAP_SIZE: usize = 6;
pub const MAX_MAP_SIZE: usize = 12;
/// Side of the scoring window.
pub const WINDOW: usize = 4;
/// Channels of the one-hot encoding.
pub const CHANNELS: usize = TILE_COUNT;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("unknown tileset '{0}'")]
    UnknownTileset(String),
    #[error("map size {0} outside [{MIN_MAP_SIZE}, {MAX_MAP_SIZE}]")]
    SizeOutOfRange(i64),
    #[error("bad cell: {0}")]
    BadCell(String),
    #[error("maps use different tilesets ('{0}' vs '{1}')")]
    TilesetMismatch(String, String),
    #[error("pattern corpus is empty")]
    EmptyCorpus,
    #[error("pattern size {0} not in {{2, 3, 4}}")]
    BadPatternSize(usize),
    #[error("generated maps need a model version; user maps must not carry one")]
    Provenance,
}

/// A square grid of tile indices, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Grid {
    size: usize,
    cells: Vec<u8>,
}

impl Grid {
    pub fn new(size: usize, cells: Vec<u8>) -> Result<Self, MapError> {
        if size == 0 || cells.len() != size * size {
            return Err(MapError::BadCell(format!(
                "expected {size}x{size} cells, got {}",
                cells.len()
            )));
        }
        if let Some(bad) = cells.iter().find(|&&c| c as usize >= TILE_COUNT) {
            return Err(MapError::BadCell(format!("tile index {bad} out of range")));
        }
        Ok(Grid { size, cells })
    }

    pub fn filled(size: usize, tile: u8) -> Self {
        Grid::new(size, vec![tile; size * size]).expect("tile index in range")
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self, MapError> {
        let size = rows.len();
        if rows.iter().any(|r| r.len() != size) {
            return Err(MapError::BadCell("grid is not square".into()));
        }
        Grid::new(size, rows.concat())
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.size + col]
    }

    pub fn set(&mut self, row: usize, col: usize, tile: u8) {
        debug_assert!((tile as usize) < TILE_COUNT);
        self.cells[row * self.size + col] = tile;
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.cells.chunks(self.size).map(<[u8]>::to_vec).collect()
    }

    /// Grows or shrinks anchored at the top-left; new cells take `fill`.
    pub fn resized(&self, new_size: usize, fill: u8) -> Grid {
        let mut cells = vec![fill; new_size * new_size];
        let keep = self.size.min(new_size);
        for r in 0..keep {
            for c in 0..keep {
                cells[r * new_size + c] = self.get(r, c);
            }
        }
        Grid {
            size: new_size,
            cells,
        }
    }

    /// Block of side `k` with top-left corner at (row, col), row-major.
    pub fn block(&self, row: usize, col: usize, k: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(k * k);
        for r in row..row + k {
            out.extend_from_slice(&self.cells[r * self.size + col..r * self.size + col + k]);
        }
        out
    }

    /// Writes `block` (side `k`, row-major) with top-left at (row, col).
    pub fn stamp(&mut self, row: usize, col: usize, k: usize, block: &[u8]) {
        for dr in 0..k {
            let dst = (row + dr) * self.size + col;
            self.cells[dst..dst + k].copy_from_slice(&block[dr * k..dr * k + k]);
        }
    }
}

/// Serialised as a list of rows.
impl Serialize for Grid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Grid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<u8>>::deserialize(d)?;
        Grid::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

impl AsRef<Grid> for Grid {
    fn as_ref(&self) -> &Grid {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    User,
    Generated,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MapDocument", into = "MapDocument")]
pub struct TileMap {
    pub id: String,
    pub tileset_id: String,
    pub grid: Grid,
    pub origin: Origin,
    pub author: Option<String>,
    pub created_at: DateTime<Utc>,
    pub model_version: Option<u64>,
    pub evaluated: bool,
}

impl AsRef<Grid> for TileMap {
    fn as_ref(&self) -> &Grid {
        &self.grid
    }
}

impl TileMap {
    pub fn size(&self) -> usize {
        self.grid.size()
    }

    /// A fresh unevaluated map. Enforces the size and provenance invariants.
    pub fn new(
        id: impl Into<String>,
        tileset_id: impl Into<String>,
        grid: Grid,
        origin: Origin,
        created_at: DateTime<Utc>,
    ) -> Result<Self, MapError> {
        check_size(grid.size() as i64)?;
        Ok(TileMap {
            id: id.into(),
            tileset_id: tileset_id.into(),
            grid,
            origin,
            author: None,
            created_at,
            model_version: None,
            evaluated: false,
        })
    }

    pub fn with_author(mut self, author: Option<String>) -> Self {
        self.author = normalize_author(author);
        self
    }

    pub fn with_model_version(mut self, version: Option<u64>) -> Self {
        self.model_version = version;
        self
    }

    pub fn check_invariants(&self) -> Result<(), MapError> {
        check_size(self.grid.size() as i64)?;
        match (self.origin, self.model_version) {
            (Origin::Generated, None) | (Origin::User, Some(_)) => Err(MapError::Provenance),
            _ => Ok(()),
        }
    }
}

fn check_size(size: i64) -> Result<(), MapError> {
    if size < MIN_MAP_SIZE as i64 || size > MAX_MAP_SIZE as i64 {
        Err(MapError::SizeOutOfRange(size))
    } else {
        Ok(())
    }
}

fn normalize_author(author: Option<String>) -> Option<String> {
    author
        .map(|a| a.trim().to_string())
        .filter(|a| !a.is_empty())
}

/// The stored JSON form of a map.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapDocument {
    pub id: String,
    pub tileset: String,
    pub size: i64,
    pub cells: Vec<Vec<i64>>,
    pub origin: Origin,
    pub author: Option<String>,
    pub created_at: DateTime<Utc>,
    pub model_version: Option<u64>,
    pub evaluated: bool,
}

impl From<TileMap> for MapDocument {
    fn from(m: TileMap) -> Self {
        MapDocument {
            id: m.id,
            tileset: m.tileset_id,
            size: m.grid.size() as i64,
            cells: m
                .grid
                .rows()
                .into_iter()
                .map(|r| r.into_iter().map(i64::from).collect())
                .collect(),
            origin: m.origin,
            author: m.author,
            created_at: m.created_at,
            model_version: m.model_version,
            evaluated: m.evaluated,
        }
    }
}

impl TryFrom<MapDocument> for TileMap {
    type Error = MapError;

    fn try_from(doc: MapDocument) -> Result<Self, MapError> {
        let grid = parse_cells(doc.size, &doc.cells)?;
        let map = TileMap {
            id: doc.id,
            tileset_id: doc.tileset,
            grid,
            origin: doc.origin,
            author: normalize_author(doc.author),
            created_at: doc.created_at,
            model_version: doc.model_version,
            evaluated: doc.evaluated,
        };
        map.check_invariants()?;
        Ok(map)
    }
}

/// A candidate map as submitted by a user or script.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapSubmission {
    pub tileset: String,
    pub size: i64,
    pub cells: Vec<Vec<i64>>,
    #[serde(default)]
    pub author: Option<String>,
}

fn parse_cells(size: i64, cells: &[Vec<i64>]) -> Result<Grid, MapError> {
    check_size(size)?;
    let n = size as usize;
    if cells.len() != n || cells.iter().any(|row| row.len() != n) {
        return Err(MapError::BadCell(format!("grid is not {n}x{n}")));
    }
    let mut flat = Vec::with_capacity(n * n);
    for &v in cells.iter().flatten() {
        if !(0..TILE_COUNT as i64).contains(&v) {
            return Err(MapError::BadCell(format!("tile index {v} out of range")));
        }
        flat.push(v as u8);
    }
    Grid::new(n, flat)
}

/// Checks a submission and turns it into an unevaluated user map. The id is
/// left empty for the store to assign.
pub fn validate_map(
    raw: &MapSubmission,
    registry: &Registry,
    now: DateTime<Utc>,
) -> Result<TileMap, MapError> {
    if !registry.contains(&raw.tileset) {
        return Err(MapError::UnknownTileset(raw.tileset.clone()));
    }
    let grid = parse_cells(raw.size, &raw.cells)?;
    Ok(TileMap::new("", raw.tileset.clone(), grid, Origin::User, now)?
        .with_author(raw.author.clone()))
}

/// One-hot encoding in (row, col, channel) order: `size * size * 16` values.
pub fn one_hot_encode<T: Float>(grid: &Grid) -> Vec<T> {
    let mut out = vec![T::zero(); grid.cells().len() * CHANNELS];
    for (i, &c) in grid.cells().iter().enumerate() {
        out[i * CHANNELS + c as usize] = T::one();
    }
    out
}

/// Inverse of [`one_hot_encode`] by per-cell argmax.
pub fn one_hot_decode<T: Float>(size: usize, data: &[T]) -> Grid {
    let cells = data
        .chunks(CHANNELS)
        .map(|ch| {
            ch.iter()
                .enumerate()
                .fold((0usize, T::neg_infinity()), |best, (i, &v)| {
                    if v > best.1 {
                        (i, v)
                    } else {
                        best
                    }
                })
                .0 as u8
        })
        .collect();
    Grid::new(size, cells).expect("argmax is a valid tile")
}

/// A 4×4 block of tile indices taken from a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Window {
    pub row: usize,
    pub col: usize,
    pub cells: [u8; WINDOW * WINDOW],
}

impl Window {
    /// 64-bit key: sixteen 4-bit tile indices.
    pub fn key(&self) -> u64 {
        self.cells
            .iter()
            .fold(0u64, |acc, &c| (acc << 4) | u64::from(c))
    }

    pub fn one_hot<T: Float>(&self) -> Vec<T> {
        let mut out = vec![T::zero(); WINDOW * WINDOW * CHANNELS];
        self.write_one_hot(&mut out);
        out
    }

    pub fn write_one_hot<T: Float>(&self, out: &mut [T]) {
        out.iter_mut().for_each(|v| *v = T::zero());
        for (i, &c) in self.cells.iter().enumerate() {
            out[i * CHANNELS + c as usize] = T::one();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    pub source_map_id: String,
    pub stride: usize,
    pub windows: Vec<Window>,
}

impl WindowBatch {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// All 4×4 windows at stride 1 in row-major order of their top-left corner.
pub fn grid_windows(grid: &Grid) -> Vec<Window> {
    let n = grid.size();
    if n < WINDOW {
        return Vec::new();
    }
    let mut out = Vec::with_capacity((n - WINDOW + 1).pow(2));
    for row in 0..=n - WINDOW {
        for col in 0..=n - WINDOW {
            let mut cells = [0u8; WINDOW * WINDOW];
            for dr in 0..WINDOW {
                for dc in 0..WINDOW {
                    cells[dr * WINDOW + dc] = grid.get(row + dr, col + dc);
                }
            }
            out.push(Window { row, col, cells });
        }
    }
    out
}

pub fn extract_windows(map: &TileMap) -> WindowBatch {
    WindowBatch {
        source_map_id: map.id.clone(),
        stride: 1,
        windows: grid_windows(&map.grid),
    }
}

/// Multiset of k×k tile blocks harvested at stride 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternLibrary {
    pub tileset_id: String,
    pub k: usize,
    counts: BTreeMap<Vec<u8>, u64>,
    /// Flattened multiset, used for uniform draws.
    entries: Vec<Vec<u8>>,
}

impl PatternLibrary {
    pub fn from_grids<'a, I>(tileset_id: &str, grids: I, k: usize) -> Result<Self, MapError>
    where
        I: IntoIterator<Item = &'a Grid>,
    {
        if !(2..=4).contains(&k) {
            return Err(MapError::BadPatternSize(k));
        }
        let mut counts = BTreeMap::new();
        let mut entries = Vec::new();
        let mut any = false;
        for grid in grids {
            any = true;
            let n = grid.size();
            if n < k {
                continue;
            }
            for r in 0..=n - k {
                for c in 0..=n - k {
                    let block = grid.block(r, c, k);
                    *counts.entry(block.clone()).or_insert(0) += 1;
                    entries.push(block);
                }
            }
        }
        if !any {
            return Err(MapError::EmptyCorpus);
        }
        Ok(PatternLibrary {
            tileset_id: tileset_id.to_string(),
            k,
            counts,
            entries,
        })
    }

    pub fn counts(&self) -> &BTreeMap<Vec<u8>, u64> {
        &self.counts
    }

    pub fn entries(&self) -> &[Vec<u8>] {
        &self.entries
    }

    /// Total multiplicity.
    pub fn total(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Harvests every k×k block of every map. All maps must share a tileset.
pub fn extract_patterns(maps: &[TileMap], k: usize) -> Result<PatternLibrary, MapError> {
    let first = maps.first().ok_or(MapError::EmptyCorpus)?;
    if let Some(other) = maps.iter().find(|m| m.tileset_id != first.tileset_id) {
        return Err(MapError::TilesetMismatch(
            first.tileset_id.clone(),
            other.tileset_id.clone(),
        ));
    }
    PatternLibrary::from_grids(&first.tileset_id, maps.iter().map(|m| &m.grid), k)
}
