//! PNG rendering of single maps and of side-by-side poll pairings.

use std::io::Cursor;

use thiserror::Error;

use crate::tilemap::TileMap;
use crate::tileset::{Registry, Rgba, TilesetError, TILE_PX};

/// Horizontal gap between the two maps of a pairing, before scaling.
pub const PAIR_GAP: usize = 8;
/// Height of the label strip above the maps, before scaling.
pub const LABEL_STRIP: usize = 11;
/// Space between the maps and the first caption line, before scaling.
pub const CAPTION_MARGIN: usize = 3;
/// Height of one caption line, before scaling.
pub const CAPTION_LINE: usize = 10;
pub const CAPTION: &str = "Which do you like better?";

const BACKGROUND: Rgba = [0x1c, 0x1c, 0x22, 0xff];
const INK: Rgba = [0xf4, 0xf4, 0xf4, 0xff];

#[derive(Debug, Error)]
pub enum RenderError {
    #[error(transparent)]
    Tileset(#[from] TilesetError),
    #[error("maps use different tilesets ('{0}' vs '{1}')")]
    TilesetMismatch(String, String),
    #[error("scale must be at least 1")]
    BadScale,
    #[error("png encode: {0}")]
    Encode(#[from] png::EncodingError),
}

pub fn encode_png(width: u32, height: u32, rgba: &[u8]) -> Result<Vec<u8>, png::EncodingError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width, height);
        enc.set_color(png::ColorType::Rgba);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header()?;
        writer.write_image_data(rgba)?;
    }
    Ok(out)
}

/// Decodes any 8-bit PNG into (width, height, RGBA bytes).
pub fn decode_png_rgba(bytes: &[u8]) -> Result<(u32, u32, Vec<u8>), png::DecodingError> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf)?;
    buf.truncate(info.buffer_size());
    let rgba = match info.color_type {
        png::ColorType::Rgba => buf,
        png::ColorType::Rgb => buf
            .chunks(3)
            .flat_map(|p| [p[0], p[1], p[2], 255])
            .collect(),
        png::ColorType::GrayscaleAlpha => buf
            .chunks(2)
            .flat_map(|p| [p[0], p[0], p[0], p[1]])
            .collect(),
        _ => buf.iter().flat_map(|&g| [g, g, g, 255]).collect(),
    };
    Ok((info.width, info.height, rgba))
}

/// An RGBA raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Canvas {
    pub fn new(width: usize, height: usize, fill: Rgba) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 4);
        for _ in 0..width * height {
            pixels.extend_from_slice(&fill);
        }
        Canvas {
            width,
            height,
            pixels,
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgba {
        let o = (y * self.width + x) * 4;
        [
            self.pixels[o],
            self.pixels[o + 1],
            self.pixels[o + 2],
            self.pixels[o + 3],
        ]
    }

    pub fn put(&mut self, x: usize, y: usize, c: Rgba) {
        let o = (y * self.width + x) * 4;
        self.pixels[o..o + 4].copy_from_slice(&c);
    }

    pub fn fill_rect(&mut self, x: usize, y: usize, w: usize, h: usize, c: Rgba) {
        for yy in y..(y + h).min(self.height) {
            for xx in x..(x + w).min(self.width) {
                self.put(xx, yy, c);
            }
        }
    }

    pub fn blit(&mut self, src: &Canvas, x: usize, y: usize) {
        for sy in 0..src.height {
            let d = ((y + sy) * self.width + x) * 4;
            let s = sy * src.width * 4;
            self.pixels[d..d + src.width * 4].copy_from_slice(&src.pixels[s..s + src.width * 4]);
        }
    }

    pub fn to_png(&self) -> Result<Vec<u8>, png::EncodingError> {
        encode_png(self.width as u32, self.height as u32, &self.pixels)
    }
}

/// Paints a map; each cell becomes an 8·scale pixel square.
pub fn render_map(map: &TileMap, registry: &Registry, scale: usize) -> Result<Canvas, RenderError> {
    if scale == 0 {
        return Err(RenderError::BadScale);
    }
    let ts = registry.get(&map.tileset_id)?;
    let cell = TILE_PX * scale;
    let side = map.size() * cell;
    let mut canvas = Canvas::new(side, side, BACKGROUND);
    for r in 0..map.size() {
        for c in 0..map.size() {
            let sprite = ts.sprite(map.grid.get(r, c));
            for py in 0..TILE_PX {
                for px in 0..TILE_PX {
                    canvas.fill_rect(
                        c * cell + px * scale,
                        r * cell + py * scale,
                        scale,
                        scale,
                        sprite.pixel(px, py),
                    );
                }
            }
        }
    }
    Ok(canvas)
}

pub fn render_map_png(map: &TileMap, registry: &Registry, scale: usize) -> Result<Vec<u8>, RenderError> {
    Ok(render_map(map, registry, scale)?.to_png()?)
}

/// Pixel placement of a rendered pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairingLayout {
    pub width: usize,
    pub height: usize,
    pub a_origin: (usize, usize),
    pub b_origin: (usize, usize),
    pub caption_top: usize,
}

pub fn pairing_layout(a_side: usize, b_side: usize, scale: usize, caption_lines: usize) -> PairingLayout {
    let gap = PAIR_GAP * scale;
    let strip = LABEL_STRIP * scale;
    let tall = a_side.max(b_side);
    let caption_top = strip + tall + CAPTION_MARGIN * scale;
    PairingLayout {
        width: a_side + gap + b_side,
        height: caption_top + caption_lines * CAPTION_LINE * scale,
        a_origin: (0, strip + (tall - a_side) / 2),
        b_origin: (a_side + gap, strip + (tall - b_side) / 2),
        caption_top,
    }
}

/// Side-by-side pairing image: "A" over the left map, "B" over the right,
/// caption underneath.
pub fn render_pairing(
    a: &TileMap,
    b: &TileMap,
    registry: &Registry,
    scale: usize,
) -> Result<Canvas, RenderError> {
    if a.tileset_id != b.tileset_id {
        return Err(RenderError::TilesetMismatch(
            a.tileset_id.clone(),
            b.tileset_id.clone(),
        ));
    }
    let left = render_map(a, registry, scale)?;
    let right = render_map(b, registry, scale)?;
    let width = left.width + PAIR_GAP * scale + right.width;
    let lines = wrap_text(CAPTION, width / scale);
    let layout = pairing_layout(left.width, right.width, scale, lines.len());
    let mut canvas = Canvas::new(layout.width, layout.height, BACKGROUND);
    canvas.blit(&left, layout.a_origin.0, layout.a_origin.1);
    canvas.blit(&right, layout.b_origin.0, layout.b_origin.1);

    let label_y = scale * 2;
    for (text, x0, w) in [("A", 0, left.width), ("B", layout.b_origin.0, right.width)] {
        let tw = text_width(text) * scale;
        draw_text(&mut canvas, text, x0 + w.saturating_sub(tw) / 2, label_y, scale);
    }
    for (i, line) in lines.iter().enumerate() {
        let tw = text_width(line) * scale;
        let y = layout.caption_top + i * CAPTION_LINE * scale + scale;
        draw_text(&mut canvas, line, layout.width.saturating_sub(tw) / 2, y, scale);
    }
    Ok(canvas)
}

pub fn render_pairing_png(
    a: &TileMap,
    b: &TileMap,
    registry: &Registry,
    scale: usize,
) -> Result<Vec<u8>, RenderError> {
    Ok(render_pairing(a, b, registry, scale)?.to_png()?)
}

const GLYPH_W: usize = 5;
const GLYPH_H: usize = 7;
const ADVANCE: usize = GLYPH_W + 1;

fn text_width(text: &str) -> usize {
    let n = text.chars().count();
    if n == 0 {
        0
    } else {
        n * ADVANCE - 1
    }
}

/// Greedy word wrap to `max_width` font pixels.
fn wrap_text(text: &str, max_width: usize) -> Vec<String> {
    let mut lines: Vec<String> = Vec::new();
    let mut current = String::new();
    for word in text.split_whitespace() {
        let candidate = if current.is_empty() {
            word.to_string()
        } else {
            format!("{current} {word}")
        };
        if text_width(&candidate) <= max_width || current.is_empty() {
            current = candidate;
        } else {
            lines.push(std::mem::replace(&mut current, word.to_string()));
        }
    }
    if !current.is_empty() {
        lines.push(current);
    }
    lines
}

fn draw_text(canvas: &mut Canvas, text: &str, x: usize, y: usize, scale: usize) {
    for (i, ch) in text.chars().enumerate() {
        let Some(rows) = glyph(ch) else { continue };
        let gx = x + i * ADVANCE * scale;
        for (ry, bits) in rows.iter().enumerate() {
            for rx in 0..GLYPH_W {
                if bits & (1 << (GLYPH_W - 1 - rx)) != 0 {
                    canvas.fill_rect(gx + rx * scale, y + ry * scale, scale, scale, INK);
                }
            }
        }
    }
}

// 5x7 bitmaps, covering the characters the renderer prints.
fn glyph(ch: char) -> Option<[u8; GLYPH_H]> {
    Some(match ch {
        'A' => [0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001],
        'B' => [0b11110, 0b10001, 0b10001, 0b11110, 0b10001, 0b10001, 0b11110],
        'W' => [0b10001, 0b10001, 0b10001, 0b10101, 0b10101, 0b10101, 0b01010],
        'b' => [0b10000, 0b10000, 0b10110, 0b11001, 0b10001, 0b10001, 0b11110],
        'c' => [0b00000, 0b00000, 0b01110, 0b10000, 0b10000, 0b10001, 0b01110],
        'd' => [0b00001, 0b00001, 0b01101, 0b10011, 0b10001, 0b10001, 0b01111],
        'e' => [0b00000, 0b00000, 0b01110, 0b10001, 0b11111, 0b10000, 0b01110],
        'h' => [0b10000, 0b10000, 0b10110, 0b11001, 0b10001, 0b10001, 0b10001],
        'i' => [0b00100, 0b00000, 0b01100, 0b00100, 0b00100, 0b00100, 0b01110],
        'k' => [0b10000, 0b10000, 0b10010, 0b10100, 0b11000, 0b10100, 0b10010],
        'l' => [0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
        'o' => [0b00000, 0b00000, 0b01110, 0b10001, 0b10001, 0b10001, 0b01110],
        'r' => [0b00000, 0b00000, 0b10110, 0b11001, 0b10000, 0b10000, 0b10000],
        't' => [0b01000, 0b01000, 0b11100, 0b01000, 0b01000, 0b01001, 0b00110],
        'u' => [0b00000, 0b00000, 0b10001, 0b10001, 0b10001, 0b10011, 0b01101],
        'y' => [0b00000, 0b00000, 0b10001, 0b10001, 0b01111, 0b00001, 0b01110],
        '?' => [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b00000, 0b00100],
        _ => return None,
    })
}
