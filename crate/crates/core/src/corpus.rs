//! Procedural stand-ins for hand-drawn maps, plus loading of map corpora.
//!
//! Each theme has its own recipe built from the shared tile roles, so maps of
//! one tileset share recognisable local structure (walls with doors, ponds,
//! paths, 2×2 objects) the way a community of human authors tends to.

use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use rand::Rng;

use crate::tilemap::{Grid, MapError, Origin, TileMap, MAX_MAP_SIZE, MIN_MAP_SIZE};
use crate::tileset::role::*;
use crate::tileset::TILE_COUNT;

/// Canvas with a record of which cells are still plain ground.
struct Sketch {
    n: usize,
    cells: Vec<u8>,
}

impl Sketch {
    fn new(n: usize) -> Self {
        Sketch {
            n,
            cells: vec![GROUND; n * n],
        }
    }

    fn get(&self, r: usize, c: usize) -> u8 {
        self.cells[r * self.n + c]
    }

    fn set(&mut self, r: usize, c: usize, t: u8) {
        self.cells[r * self.n + c] = t;
    }

    fn is_ground(&self, r: usize, c: usize) -> bool {
        matches!(self.get(r, c), GROUND | GROUND_ALT)
    }

    fn ground_patches<R: Rng>(&mut self, rng: &mut R, count: usize) {
        for _ in 0..count {
            let r0 = rng.random_range(0..self.n);
            let c0 = rng.random_range(0..self.n);
            let h = rng.random_range(1..=3);
            let w = rng.random_range(2..=4);
            for r in r0..(r0 + h).min(self.n) {
                for c in c0..(c0 + w).min(self.n) {
                    if self.get(r, c) == GROUND {
                        self.set(r, c, GROUND_ALT);
                    }
                }
            }
        }
    }

    fn rect<R: Rng>(&mut self, rng: &mut R, tile: u8, h: (usize, usize), w: (usize, usize)) {
        let n = self.n;
        let hh = rng.random_range(h.0..=h.1).min(n);
        let ww = rng.random_range(w.0..=w.1).min(n);
        let r0 = rng.random_range(0..=n - hh);
        let c0 = rng.random_range(0..=n - ww);
        for r in r0..r0 + hh {
            for c in c0..c0 + ww {
                if self.is_ground(r, c) {
                    self.set(r, c, tile);
                }
            }
        }
    }

    /// Path running across the map with one bend.
    fn path<R: Rng>(&mut self, rng: &mut R) {
        let n = self.n;
        let row = rng.random_range(1..n - 1);
        let bend = rng.random_range(1..n - 1);
        for c in 0..=bend {
            if self.is_ground(row, c) {
                self.set(row, c, PATH);
            }
        }
        let (lo, hi) = if rng.random::<bool>() { (0, row) } else { (row, n - 1) };
        for r in lo..=hi {
            if self.is_ground(r, bend) {
                self.set(r, bend, PATH);
            }
        }
    }

    /// 2×2 object on an even-aligned all-ground block.
    fn big_object_aligned<R: Rng>(&mut self, rng: &mut R) -> bool {
        let n = self.n;
        for _ in 0..20 {
            let r = 2 * rng.random_range(0..n / 2);
            let c = 2 * rng.random_range(0..n / 2);
            if r + 1 < n
                && c + 1 < n
                && self.is_ground(r, c)
                && self.is_ground(r, c + 1)
                && self.is_ground(r + 1, c)
                && self.is_ground(r + 1, c + 1)
            {
                self.set(r, c, BIG_TL);
                self.set(r, c + 1, BIG_TR);
                self.set(r + 1, c, BIG_BL);
                self.set(r + 1, c + 1, BIG_BR);
                return true;
            }
        }
        false
    }

    /// Places `count` tiles on cells whose 3×3 neighbourhood is one ground
    /// tile.
    fn isolated<R: Rng>(&mut self, rng: &mut R, tile: u8, count: usize) {
        let n = self.n;
        let mut placed = 0;
        for _ in 0..count * 20 {
            if placed == count {
                break;
            }
            let r = rng.random_range(1..n - 1);
            let c = rng.random_range(1..n - 1);
            let g = self.get(r, c);
            if !matches!(g, GROUND | GROUND_ALT) {
                continue;
            }
            let calm = self.is_ground(r - 1, c) && self.is_ground(r + 1, c) && self.is_ground(r, c - 1) && self.is_ground(r, c + 1);
            if calm {
                self.set(r, c, tile);
                placed += 1;
            }
        }
    }

    /// Each cell becomes a 2×2 block; the result is cropped to `size`.
    fn doubled(&self, size: usize) -> Sketch {
        let mut out = Sketch::new(size);
        for r in 0..size {
            for c in 0..size {
                out.set(r, c, self.get(r / 2, c / 2));
            }
        }
        out
    }

    fn scatter_in<R: Rng>(&mut self, rng: &mut R, tile: u8, count: std::ops::RangeInclusive<usize>) {
        let k = rng.random_range(count);
        self.scatter(rng, tile, k);
    }

    fn scatter<R: Rng>(&mut self, rng: &mut R, tile: u8, count: usize) {
        let n = self.n;
        let mut placed = 0;
        for _ in 0..count * 10 {
            if placed == count {
                break;
            }
            let r = rng.random_range(0..n);
            let c = rng.random_range(0..n);
            if self.is_ground(r, c) {
                self.set(r, c, tile);
                placed += 1;
            }
        }
    }

    fn finish(self) -> Grid {
        Grid::new(self.n, self.cells).expect("tiles in range")
    }
}

// Recipes run on a half-resolution sketch that is then doubled, so regions
// come out in 2×2 chunks the way tile-painting tools encourage.

fn wall_line<R: Rng>(s: &mut Sketch, rng: &mut R) {
    let m = s.n;
    let len = rng.random_range(2..=m - 1);
    let at = rng.random_range(0..m);
    let start = rng.random_range(0..=m - len);
    let vertical = rng.random::<bool>();
    for i in start..start + len {
        let (r, c) = if vertical { (i, at) } else { (at, i) };
        s.set(r, c, WALL);
    }
}

fn dungeon<R: Rng>(s: &mut Sketch, rng: &mut R) {
    s.ground_patches(rng, s.n);
    wall_line(s, rng);
    let pool = if rng.random::<bool>() { HAZARD } else { WATER };
    s.rect(rng, pool, (1, 2), (1, 2));
    s.path(rng);
    s.rect(rng, ROCK, (1, 1), (1, 2));
}

fn overworld<R: Rng>(s: &mut Sketch, rng: &mut R) {
    s.ground_patches(rng, s.n);
    s.rect(rng, WATER, (1, 2), (1, 3));
    s.path(rng);
    s.scatter_in(rng, FLOWER, 1..=2);
    s.rect(rng, ROCK, (1, 1), (1, 2));
}

fn maze<R: Rng>(s: &mut Sketch, rng: &mut R) {
    s.ground_patches(rng, s.n);
    wall_line(s, rng);
    wall_line(s, rng);
    s.path(rng);
    s.rect(rng, HAZARD, (1, 1), (1, 2));
}

fn crew<R: Rng>(s: &mut Sketch, rng: &mut R) {
    s.ground_patches(rng, s.n);
    wall_line(s, rng);
    s.path(rng);
    s.scatter_in(rng, PILLAR, 1..=2);
    s.rect(rng, WATER, (1, 1), (1, 2));
}

fn creatures<R: Rng>(s: &mut Sketch, rng: &mut R) {
    s.ground_patches(rng, s.n);
    s.rect(rng, WATER, (1, 2), (1, 2));
    s.scatter_in(rng, FLOWER, 1..=2);
    s.rect(rng, ROCK, (1, 1), (1, 2));
    s.path(rng);
}

/// Full-resolution touches: aligned 2×2 objects and single-tile details.
fn details<R: Rng>(s: &mut Sketch, tileset_id: &str, rng: &mut R) {
    let (objects, singles): (usize, &[u8]) = match tileset_id {
        "overworld" => (2, &[CHARACTER, ROCK, ITEM, DOOR]),
        "maze" => (1, &[ITEM, CHARACTER, PILLAR, DOOR, ROCK]),
        "crew" => (2, &[CHARACTER, ITEM, DOOR, HAZARD]),
        "creatures" => (2, &[CHARACTER, ITEM, HAZARD, PATH]),
        _ => (1, &[ITEM, CHARACTER, PILLAR, DOOR, ROCK]),
    };
    let scale = (s.n * s.n / 36).max(1);
    let count = rng.random_range(1..=objects * scale);
    for _ in 0..count {
        s.big_object_aligned(rng);
    }
    for &tile in singles {
        let k = rng.random_range(1..=scale + 1);
        s.isolated(rng, tile, k);
    }
}

/// A user-like map for a built-in theme; unknown ids fall back to the
/// dungeon recipe.
pub fn generate_user_grid<R: Rng>(tileset_id: &str, size: usize, rng: &mut R) -> Grid {
    let size = size.clamp(MIN_MAP_SIZE, MAX_MAP_SIZE);
    let mut half = Sketch::new(size.div_ceil(2));
    match tileset_id {
        "overworld" => overworld(&mut half, rng),
        "maze" => maze(&mut half, rng),
        "crew" => crew(&mut half, rng),
        "creatures" => creatures(&mut half, rng),
        _ => dungeon(&mut half, rng),
    }
    let mut s = half.doubled(size);
    details(&mut s, tileset_id, rng);
    s.finish()
}

/// Size drawn uniformly from the legal range.
pub fn generate_user_map<R: Rng>(tileset_id: &str, id: &str, author: Option<&str>, now: DateTime<Utc>, rng: &mut R) -> TileMap {
    let size = rng.random_range(MIN_MAP_SIZE..=MAX_MAP_SIZE);
    let grid = generate_user_grid(tileset_id, size, rng);
    TileMap::new(id, tileset_id, grid, Origin::User, now)
        .expect("generated size in range")
        .with_author(author.map(str::to_string))
}

/// Uniform random grid.
pub fn random_grid<R: Rng>(size: usize, rng: &mut R) -> Grid {
    let cells = (0..size * size).map(|_| rng.random_range(0..TILE_COUNT as u8)).collect();
    Grid::new(size, cells).expect("in range")
}

pub fn random_map<R: Rng>(tileset_id: &str, id: &str, now: DateTime<Utc>, rng: &mut R) -> TileMap {
    let size = rng.random_range(MIN_MAP_SIZE..=MAX_MAP_SIZE);
    TileMap::new(id, tileset_id, random_grid(size, rng), Origin::Random, now).expect("size in range")
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad map file {path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("map file {path}: {source}")]
    Map { path: String, source: MapError },
    #[error("no maps found in {0}")]
    Empty(String),
}

/// Every `*.json` map under `dir`, sorted by file name.
pub fn load_map_dir(dir: &Path) -> Result<Vec<TileMap>, CorpusError> {
    let io = |source| CorpusError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    let mut maps = Vec::with_capacity(paths.len());
    for p in paths {
        let path = p.display().to_string();
        let text = fs::read_to_string(&p).map_err(|source| CorpusError::Io {
            path: path.clone(),
            source,
        })?;
        let map: TileMap = serde_json::from_str(&text).map_err(|source| CorpusError::Json {
            path: path.clone(),
            source,
        })?;
        map.check_invariants().map_err(|source| CorpusError::Map { path, source })?;
        maps.push(map);
    }
    if maps.is_empty() {
        return Err(CorpusError::Empty(dir.display().to_string()));
    }
    Ok(maps)
}

pub fn write_map_dir(dir: &Path, maps: &[TileMap]) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io {
        path: dir.display().to_string(),
        source,
    };
    fs::create_dir_all(dir).map_err(io)?;
    for m in maps {
        let text = serde_json::to_string_pretty(m).expect("maps serialise");
        fs::write(dir.join(format!("{}.json", m.id)), text + "\n").map_err(io)?;
    }
    Ok(())
}
