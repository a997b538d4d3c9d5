//! PPM overlays: track rectangles and ids drawn over the decoded I-frames or
//! over the background for P-frames.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::image::{PixelRect, RgbImage};
use crate::intra::decode_full;
use crate::mbfs::{FrameFeatures, FramePayload};
use crate::pipeline::{TrackOutputRecord, TrackState};

/// 3×5 digit glyphs, one row per entry, bit 2 = leftmost column.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

pub fn state_color(state: TrackState) -> [u8; 3] {
    match state {
        TrackState::Real => [0, 255, 0],
        TrackState::Candidate => [255, 255, 0],
        TrackState::Occluded => [255, 0, 255],
    }
}

pub fn write_ppm<W: Write>(mut sink: W, img: &RgbImage) -> std::io::Result<()> {
    write!(sink, "P6\n{} {}\n255\n", img.width(), img.height())?;
    sink.write_all(img.as_raw())?;
    sink.flush()
}

fn put(img: &mut RgbImage, x: i64, y: i64, rgb: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, rgb);
    }
}

pub fn draw_rect(img: &mut RgbImage, r: PixelRect, rgb: [u8; 3]) {
    if r.is_empty() {
        return;
    }
    let (x0, y0, x1, y1) = (r.x as i64, r.y as i64, r.right() as i64 - 1, r.bottom() as i64 - 1);
    for x in x0..=x1 {
        put(img, x, y0, rgb);
        put(img, x, y1, rgb);
    }
    for y in y0..=y1 {
        put(img, x0, y, rgb);
        put(img, x1, y, rgb);
    }
}

/// Draws `value` in the digit font with its top-left corner at `(x, y)`.
pub fn draw_number(img: &mut RgbImage, x: i64, y: i64, value: u64, rgb: [u8; 3]) {
    for (i, ch) in value.to_string().bytes().enumerate() {
        let glyph = DIGITS[(ch - b'0') as usize];
        let ox = x + 4 * i as i64;
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..3 {
                if bits & (0b100 >> col) != 0 {
                    put(img, ox + col, y + row as i64, rgb);
                }
            }
        }
    }
}

/// Copy of `base` with one labelled rectangle per record.
pub fn render_overlay(base: &RgbImage, records: &[&TrackOutputRecord]) -> RgbImage {
    let mut img = base.clone();
    for r in records {
        let rect = r.blob().to_rect(img.width(), img.height());
        let color = state_color(r.state);
        draw_rect(&mut img, rect, color);
        draw_number(&mut img, rect.x as i64 + 2, rect.y as i64 + 2, r.object_id, color);
    }
    img
}

/// Writes `frame_NNNNN.ppm` for every frame into `dir`. Returns the paths.
pub fn render_overlays(
    frames: impl IntoIterator<Item = FrameFeatures>,
    background: &RgbImage,
    records: &[TrackOutputRecord],
    dir: &Path,
) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut by_frame: BTreeMap<u32, Vec<&TrackOutputRecord>> = BTreeMap::new();
    for r in records {
        by_frame.entry(r.frame_index).or_default().push(r);
    }
    let mut paths = Vec::new();
    for f in frames {
        let decoded;
        let base = match &f.payload {
            FramePayload::I(p) => {
                decoded = decode_full(p)?;
                &decoded
            }
            FramePayload::P(_) => background,
        };
        let recs = by_frame.get(&f.frame_index).map(Vec::as_slice).unwrap_or(&[]);
        let img = render_overlay(base, recs);
        let path = dir.join(format!("frame_{:05}.ppm", f.frame_index));
        write_ppm(BufWriter::new(File::create(&path)?), &img)?;
        paths.push(path);
    }
    Ok(paths)
}
