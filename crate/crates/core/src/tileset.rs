//! Tilesets: 16 sprites of 8×8 RGBA pixels each, plus the registry of the
//! five shipped themes.
//!
//! The on-disk package layout is a directory holding `tileset.json`
//! (`{"id": .., "name": ..}`) and `sprites.png`, a 128×8 RGBA sheet with the
//! sixteen tiles laid out left to right. The web editor reads the same sheet.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tiles per tileset.
pub const TILE_COUNT: usize = 16;
/// Side length of one sprite in pixels.
pub const TILE_PX: usize = 8;
/// Width of a sprite sheet in pixels.
pub const SHEET_WIDTH: usize = TILE_COUNT * TILE_PX;

pub type Rgba = [u8; 4];

/// One 8×8 sprite, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sprite(pub [[Rgba; TILE_PX]; TILE_PX]);

impl Sprite {
    pub fn pixel(&self, x: usize, y: usize) -> Rgba {
        self.0[y][x]
    }
}

#[derive(Debug, Error)]
pub enum TilesetError {
    #[error("unknown tileset '{0}'")]
    UnknownTileset(String),
    #[error("sprite sheet must be {SHEET_WIDTH}x{TILE_PX} pixels, got {0}x{1}")]
    BadSheet(u32, u32),
    #[error("duplicate tileset id '{0}'")]
    Duplicate(String),
    #[error("png decode: {0}")]
    Decode(#[from] png::DecodingError),
    #[error("png encode: {0}")]
    Encode(#[from] png::EncodingError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tileset {
    pub id: String,
    pub name: String,
    pub sprites: Vec<Sprite>,
    /// Background tile used when padding grown maps.
    pub empty_index: u8,
}

#[derive(Debug, Serialize, Deserialize)]
struct TilesetManifest {
    id: String,
    name: String,
}

impl Tileset {
    pub fn tile_count(&self) -> usize {
        TILE_COUNT
    }

    pub fn tile_px(&self) -> usize {
        TILE_PX
    }

    pub fn sprite(&self, index: u8) -> &Sprite {
        &self.sprites[index as usize]
    }

    /// Raw RGBA bytes of the 128×8 sprite sheet.
    pub fn sheet_rgba(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(SHEET_WIDTH * TILE_PX * 4);
        for y in 0..TILE_PX {
            for sprite in &self.sprites {
                for x in 0..TILE_PX {
                    buf.extend_from_slice(&sprite.pixel(x, y));
                }
            }
        }
        buf
    }

    pub fn sheet_png(&self) -> Result<Vec<u8>, TilesetError> {
        Ok(crate::render::encode_png(
            SHEET_WIDTH as u32,
            TILE_PX as u32,
            &self.sheet_rgba(),
        )?)
    }

    pub fn from_sheet_png(id: &str, name: &str, bytes: &[u8]) -> Result<Self, TilesetError> {
        let (w, h, rgba) = crate::render::decode_png_rgba(bytes)?;
        if w as usize != SHEET_WIDTH || h as usize != TILE_PX {
            return Err(TilesetError::BadSheet(w, h));
        }
        let mut sprites = Vec::with_capacity(TILE_COUNT);
        for t in 0..TILE_COUNT {
            let mut px = [[[0u8; 4]; TILE_PX]; TILE_PX];
            for (y, row) in px.iter_mut().enumerate() {
                for (x, cell) in row.iter_mut().enumerate() {
                    let off = (y * SHEET_WIDTH + t * TILE_PX + x) * 4;
                    cell.copy_from_slice(&rgba[off..off + 4]);
                }
            }
            sprites.push(Sprite(px));
        }
        Ok(Tileset {
            id: id.to_string(),
            name: name.to_string(),
            sprites,
            empty_index: 0,
        })
    }

    pub fn write_package(&self, dir: &Path) -> Result<(), TilesetError> {
        fs::create_dir_all(dir)?;
        let manifest = TilesetManifest {
            id: self.id.clone(),
            name: self.name.clone(),
        };
        fs::write(
            dir.join("tileset.json"),
            serde_json::to_string_pretty(&manifest)? + "\n",
        )?;
        fs::write(dir.join("sprites.png"), self.sheet_png()?)?;
        Ok(())
    }

    pub fn read_package(dir: &Path) -> Result<Self, TilesetError> {
        let manifest: TilesetManifest =
            serde_json::from_slice(&fs::read(dir.join("tileset.json"))?)?;
        let sheet = fs::read(dir.join("sprites.png"))?;
        Self::from_sheet_png(&manifest.id, &manifest.name, &sheet)
    }
}

/// Installed tilesets keyed by id.
#[derive(Debug, Clone)]
pub struct Registry {
    tilesets: BTreeMap<String, Tileset>,
}

impl Registry {
    pub fn from_tilesets(tilesets: Vec<Tileset>) -> Result<Self, TilesetError> {
        let mut map = BTreeMap::new();
        for ts in tilesets {
            let id = ts.id.clone();
            if map.insert(id.clone(), ts).is_some() {
                return Err(TilesetError::Duplicate(id));
            }
        }
        Ok(Registry { tilesets: map })
    }

    /// The five shipped placeholder themes.
    pub fn builtin() -> Self {
        let tilesets = THEMES
            .iter()
            .map(|theme| Tileset {
                id: theme.id.to_string(),
                name: theme.name.to_string(),
                sprites: (0..TILE_COUNT).map(|t| draw_sprite(t, &theme.palette)).collect(),
                empty_index: 0,
            })
            .collect();
        Self::from_tilesets(tilesets).expect("builtin ids are unique")
    }

    /// Loads every package directory found directly under `root`.
    pub fn load_dir(root: &Path) -> Result<Self, TilesetError> {
        let mut entries: Vec<_> = fs::read_dir(root)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.join("tileset.json").is_file())
            .collect();
        entries.sort();
        let tilesets = entries
            .iter()
            .map(|p| Tileset::read_package(p))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_tilesets(tilesets)
    }

    pub fn write_dir(&self, root: &Path) -> Result<(), TilesetError> {
        for ts in self.tilesets.values() {
            ts.write_package(&root.join(&ts.id))?;
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&Tileset, TilesetError> {
        self.tilesets
            .get(id)
            .ok_or_else(|| TilesetError::UnknownTileset(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.tilesets.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.tilesets.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tileset> {
        self.tilesets.values()
    }

    pub fn len(&self) -> usize {
        self.tilesets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tilesets.is_empty()
    }
}

/// Ids of the shipped themes, in registry order.
pub const BUILTIN_IDS: [&str; 5] = ["creatures", "crew", "dungeon", "maze", "overworld"];

// Tile roles shared by every theme. The procedural corpus generator relies on
// this layout.
pub mod role {
    pub const GROUND: u8 = 0;
    pub const GROUND_ALT: u8 = 1;
    pub const WALL: u8 = 2;
    pub const PILLAR: u8 = 3;
    pub const BIG_TL: u8 = 4;
    pub const BIG_TR: u8 = 5;
    pub const BIG_BL: u8 = 6;
    pub const BIG_BR: u8 = 7;
    pub const WATER: u8 = 8;
    pub const PATH: u8 = 9;
    pub const DOOR: u8 = 10;
    pub const FLOWER: u8 = 11;
    pub const ITEM: u8 = 12;
    pub const CHARACTER: u8 = 13;
    pub const ROCK: u8 = 14;
    pub const HAZARD: u8 = 15;
}

struct Theme {
    id: &'static str,
    name: &'static str,
    /// Colors for mask letters b g w W o O a f x y k.
    palette: [Rgba; 11],
}

const fn rgb(hex: u32) -> Rgba {
    [(hex >> 16) as u8, (hex >> 8) as u8, hex as u8, 255]
}

const THEMES: [Theme; 5] = [
    Theme {
        id: "creatures",
        name: "Creatures",
        palette: [
            rgb(0x9cd67a), rgb(0x7dbb5c), rgb(0x8a6a4a), rgb(0xc9a878),
            rgb(0xe0503c), rgb(0xf2f2f2), rgb(0x4a8fe0), rgb(0xe8d8a0),
            rgb(0xf0d040), rgb(0xe070b0), rgb(0x203020),
        ],
    },
    Theme {
        id: "crew",
        name: "Crew",
        palette: [
            rgb(0x50585f), rgb(0x5f6870), rgb(0x2a3036), rgb(0x8a949c),
            rgb(0xd03a3a), rgb(0x3a9ad0), rgb(0x48c8b0), rgb(0x70787f),
            rgb(0xf0e050), rgb(0x60e060), rgb(0x101418),
        ],
    },
    Theme {
        id: "dungeon",
        name: "Dungeon",
        palette: [
            rgb(0x2c2430), rgb(0x3a3040), rgb(0x6a5a60), rgb(0x9a8a80),
            rgb(0x8a4a2a), rgb(0xc07a3a), rgb(0x3050a0), rgb(0x4a4048),
            rgb(0xf0c030), rgb(0xc03030), rgb(0x100c14),
        ],
    },
    Theme {
        id: "maze",
        name: "Maze",
        palette: [
            rgb(0x000000), rgb(0x101018), rgb(0x2040e0), rgb(0x6080ff),
            rgb(0xf0e020), rgb(0xff80c0), rgb(0x20c0e0), rgb(0x181830),
            rgb(0xffd0a0), rgb(0xff3030), rgb(0xffffff),
        ],
    },
    Theme {
        id: "overworld",
        name: "Overworld",
        palette: [
            rgb(0xe8d898), rgb(0xd0c080), rgb(0x4a7a3a), rgb(0x6aa04a),
            rgb(0x2a6a2a), rgb(0x7a4a2a), rgb(0x3a78d8), rgb(0xc8a870),
            rgb(0xe04040), rgb(0xf0f040), rgb(0x182818),
        ],
    },
];

// Letters: b ground, g ground alt, w wall dark, W wall light, o object,
// O object secondary, a water, f floor, x accent, y accent 2, k outline.
const MASKS: [[&str; 8]; TILE_COUNT] = [
    ["bbbbbbbb", "bbbbbbbb", "bbbbbbbb", "bbbbbbbb", "bbbbbbbb", "bbbbbbbb", "bbbbbbbb", "bbbbbbbb"],
    ["bbbbbbbb", "bgbbbbgb", "bbbbbbbb", "bbbgbbbb", "bbbbbbbb", "bgbbbbbg", "bbbbgbbb", "bbbbbbbb"],
    ["WWWkWWWW", "wwwkwwww", "kkkkkkkk", "WkWWWWkW", "wkwwwwkw", "kkkkkkkk", "WWWkWWWW", "wwwkwwww"],
    ["kWWWWWWk", "kWwwwwWk", "kWwWWwWk", "kWwWWwWk", "kWwWWwWk", "kWwWWwWk", "kWwwwwWk", "kkkkkkkk"],
    ["bbbkkkkk", "bbkooooo", "bkoooooo", "kooooOoo", "koooOooo", "kooooooo", "koooooOo", "kooooooo"],
    ["kkkkkbbb", "oooookbb", "ooooookb", "ooOooook", "oooooook", "ooooOook", "oooooook", "oooooook"],
    ["kooooooo", "kooOoooo", "bkoooooo", "bbkkkkkO", "bbbbbkOO", "bbbbbkOO", "bbbbkOOO", "bbbbkkkk"],
    ["ooooooOk", "oooooook", "ooooookb", "Okkkkkbb", "OOkbbbbb", "OOkbbbbb", "OOOkbbbb", "kkkkbbbb"],
    ["aaaaaaaa", "aaffaaaa", "afaafaaa", "aaaaaaaa", "aaaaaffa", "aaaafaaf", "aaaaaaaa", "aaaaaaaa"],
    ["ffffffff", "ffffffff", "fffkffff", "ffffffff", "ffffffff", "ffffffkf", "ffffffff", "ffffffff"],
    ["kkkkkkkk", "kOOOOOOk", "kOkOOkOk", "kOkOOkOk", "kOOOOOOk", "kOOOOxOk", "kOOOOOOk", "kOOOOOOk"],
    ["bbbbbbbb", "bbbyybbb", "bbyxxybb", "bbbyybbb", "bbbbobbb", "bbobobbb", "bbbooobb", "bbbbbbbb"],
    ["bbbbbbbb", "bbkkkkbb", "bkxxxxkb", "bkxyyxkb", "bkxyyxkb", "bkxxxxkb", "bbkkkkbb", "bbbbbbbb"],
    ["bbbkkbbb", "bbkOOkbb", "bbkxxkbb", "bkyyyykb", "kbyyyybk", "bbyyyybb", "bbykkybb", "bbkbbkbb"],
    ["bbbbbbbb", "bbbkkkbb", "bbkWWWkb", "bkWWwWWk", "bkWwwwWk", "kWWwwwWk", "kwwwwwwk", "bkkkkkkb"],
    ["bbbbbbbb", "bkbbbkbb", "kykbkykb", "kykbkykb", "yyykyyyk", "yyykyyyk", "kkkkkkkk", "bbbbbbbb"],
];

fn draw_sprite(tile: usize, palette: &[Rgba; 11]) -> Sprite {
    let mut px = [[[0u8; 4]; TILE_PX]; TILE_PX];
    for (y, row) in MASKS[tile].iter().enumerate() {
        for (x, ch) in row.bytes().enumerate() {
            let slot = match ch {
                b'b' => 0,
                b'g' => 1,
                b'w' => 2,
                b'W' => 3,
                b'o' => 4,
                b'O' => 5,
                b'a' => 6,
                b'f' => 7,
                b'x' => 8,
                b'y' => 9,
                b'k' => 10,
                other => unreachable!("bad mask letter {}", other as char),
            };
            px[y][x] = palette[slot];
        }
    }
    Sprite(px)
}
