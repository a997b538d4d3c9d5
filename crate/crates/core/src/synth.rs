//! Scene scripts and a toy encoder that turns them into feature streams plus
//! ground truth.
//!
//! Scripts are TOML:
//!
//! ```toml
//! [canvas]
//! width = 320
//! height = 240
//! fps = 30
//! gop_len = 8
//! frame_count = 240
//!
//! [background]
//! kind = "flat"
//! color = [40, 40, 40]
//!
//! [[objects]]
//! id = 1
//! w = 48
//! h = 96
//! fill = { kind = "checker", a = [220, 40, 40], b = [120, 10, 10], cell = 4 }
//! path = [
//!   { frame = 0, cx = 40, cy = 120 },
//!   { frame = 239, cx = 280, cy = 120 },
//! ]
//!
//! [noise]
//! p_isolated = 0.0
//! p_cluster = 0.0
//! rng_seed = 1
//! ```
//!
//! An object is drawn from its first to its last waypoint frame. Later
//! objects are drawn over earlier ones. Pattern fills are anchored to the
//! object so that moving objects change every macroblock they cover.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::image::{PixelRect, RgbImage};
use crate::intra::{encode_iframe, CodecError};
use crate::mbfs::{write_stream, FrameFeatures, FrameKind, FramePayload, MacroblockRecord, StreamError, StreamHeader, MB_SIZE};

/// Per-channel differences at or below this count as unchanged residuals.
pub const DEADZONE: u8 = 2;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("scene script: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
    #[serde(default = "default_fps")]
    pub fps: u8,
    pub gop_len: u8,
    pub frame_count: u32,
}

fn default_fps() -> u8 {
    30
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Background {
    Flat { color: [u8; 3] },
    Checker { a: [u8; 3], b: [u8; 3], cell: u32 },
}

impl Default for Background {
    fn default() -> Self {
        Background::Flat { color: [0, 0, 0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Fill {
    Solid { color: [u8; 3] },
    Checker { a: [u8; 3], b: [u8; 3], cell: u32 },
    /// Vertical stripes, `period` pixels per colour.
    Stripes { a: [u8; 3], b: [u8; 3], period: u32 },
}

impl Fill {
    /// Colour at object-local `(x, y)`.
    fn at(&self, x: u32, y: u32) -> [u8; 3] {
        match *self {
            Fill::Solid { color } => color,
            Fill::Checker { a, b, cell } => {
                if (x / cell + y / cell).is_multiple_of(2) {
                    a
                } else {
                    b
                }
            }
            Fill::Stripes { a, b, period } => {
                if (x / period).is_multiple_of(2) {
                    a
                } else {
                    b
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub frame: u32,
    pub cx: f64,
    pub cy: f64,
    pub h: Option<u32>,
    pub w: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub id: u64,
    pub w: u32,
    pub h: u32,
    pub fill: Fill,
    pub path: Vec<Waypoint>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Chance that a skipped macroblock is coded with no coefficients.
    #[serde(default)]
    pub p_isolated: f64,
    /// Chance per P-frame that a short-lived coefficient-bearing cluster of
    /// two or three macroblocks appears.
    #[serde(default)]
    pub p_cluster: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneScript {
    pub canvas: Canvas,
    #[serde(default)]
    pub background: Background,
    #[serde(default)]
    pub objects: Vec<SceneObject>,
    #[serde(default)]
    pub noise: NoiseConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub frame_index: u32,
    pub object_id: u64,
    pub cx: f64,
    pub cy: f64,
    pub h: f64,
    pub w: f64,
    pub occluded: bool,
}

/// Object rectangle in frame coordinates, possibly reaching past the canvas.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlacedRect {
    pub x: i64,
    pub y: i64,
    pub w: u32,
    pub h: u32,
}

impl PlacedRect {
    fn overlaps(&self, o: &PlacedRect) -> bool {
        self.x < o.x + o.w as i64 && o.x < self.x + self.w as i64 && self.y < o.y + o.h as i64 && o.y < self.y + self.h as i64
    }

    fn clipped(&self, width: u32, height: u32) -> Option<PixelRect> {
        let x0 = self.x.clamp(0, width as i64) as u32;
        let y0 = self.y.clamp(0, height as i64) as u32;
        let x1 = (self.x + self.w as i64).clamp(0, width as i64) as u32;
        let y1 = (self.y + self.h as i64).clamp(0, height as i64) as u32;
        (x1 > x0 && y1 > y0).then(|| PixelRect::new(x0, y0, x1 - x0, y1 - y0))
    }
}

impl SceneObject {
    /// Rectangle at `frame`, or `None` outside the path's frame span.
    pub fn placement(&self, frame: u32) -> Option<PlacedRect> {
        let first = self.path.first()?;
        let last = self.path.last()?;
        if frame < first.frame || frame > last.frame {
            return None;
        }
        let seg = self.path.windows(2).find(|s| frame <= s[1].frame);
        let (cx, cy, w, h) = match seg {
            None => (first.cx, first.cy, first.w.unwrap_or(self.w) as f64, first.h.unwrap_or(self.h) as f64),
            Some(s) => {
                let (a, b) = (s[0], s[1]);
                let t = (frame - a.frame) as f64 / (b.frame - a.frame) as f64;
                let lerp = |p: f64, q: f64| p + t * (q - p);
                (
                    lerp(a.cx, b.cx),
                    lerp(a.cy, b.cy),
                    lerp(a.w.unwrap_or(self.w) as f64, b.w.unwrap_or(self.w) as f64),
                    lerp(a.h.unwrap_or(self.h) as f64, b.h.unwrap_or(self.h) as f64),
                )
            }
        };
        let (w, h) = (w.round() as u32, h.round() as u32);
        Some(PlacedRect {
            x: (cx - w as f64 / 2.0).round() as i64,
            y: (cy - h as f64 / 2.0).round() as i64,
            w,
            h,
        })
    }
}

impl SceneScript {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let script: SceneScript = toml::from_str(text)?;
        script.validate()?;
        Ok(script)
    }

    pub fn header(&self) -> StreamHeader {
        let c = &self.canvas;
        StreamHeader::new(c.width as u16, c.height as u16, c.fps, c.gop_len, c.frame_count).with_background()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Invalid(m));
        let c = &self.canvas;
        if c.width > u16::MAX as u32 || c.height > u16::MAX as u32 {
            return bad("canvas too large".into());
        }
        self.header().validate()?;
        if let Background::Checker { cell: 0, .. } = self.background {
            return bad("background checker cell must be positive".into());
        }
        let n = &self.noise;
        if !(0.0..=1.0).contains(&n.p_isolated) || !(0.0..=1.0).contains(&n.p_cluster) {
            return bad("noise probabilities must lie in [0, 1]".into());
        }
        let mut ids = std::collections::BTreeSet::new();
        for o in &self.objects {
            if !ids.insert(o.id) {
                return bad(format!("duplicate object id {}", o.id));
            }
            match o.fill {
                Fill::Checker { cell: 0, .. } | Fill::Stripes { period: 0, .. } => {
                    return bad(format!("object {}: pattern period must be positive", o.id))
                }
                _ => {}
            }
            if o.path.is_empty() {
                return bad(format!("object {} has no waypoints", o.id));
            }
            if o.path.windows(2).any(|s| s[1].frame <= s[0].frame) {
                return bad(format!("object {}: waypoint frames must strictly increase", o.id));
            }
            for wp in &o.path {
                let r = o.placement(wp.frame).unwrap();
                if r.x < 0 || r.y < 0 || r.x + r.w as i64 > c.width as i64 || r.y + r.h as i64 > c.height as i64 {
                    return bad(format!("object {} leaves the canvas at frame {}", o.id, wp.frame));
                }
                if (r.w as u64 * r.h as u64) < 3 * (MB_SIZE * MB_SIZE) as u64 {
                    return bad(format!("object {} is smaller than three macroblocks at frame {}", o.id, wp.frame));
                }
            }
        }
        Ok(())
    }

    pub fn render_background(&self) -> RgbImage {
        let (w, h) = (self.canvas.width, self.canvas.height);
        match self.background {
            Background::Flat { color } => RgbImage::filled(w, h, color),
            Background::Checker { a, b, cell } => {
                let mut img = RgbImage::new(w, h);
                for y in 0..h {
                    for x in 0..w {
                        img.put_pixel(x, y, if (x / cell + y / cell) % 2 == 0 { a } else { b });
                    }
                }
                img
            }
        }
    }

    /// Background with every object visible at `frame` drawn over it.
    pub fn render_frame(&self, frame: u32) -> RgbImage {
        let mut img = self.render_background();
        self.draw_objects(&mut img, frame);
        img
    }

    fn draw_objects(&self, img: &mut RgbImage, frame: u32) {
        for o in &self.objects {
            let Some(p) = o.placement(frame) else { continue };
            let Some(r) = p.clipped(img.width(), img.height()) else { continue };
            for y in r.y..r.bottom() {
                for x in r.x..r.right() {
                    let lx = (x as i64 - p.x) as u32;
                    let ly = (y as i64 - p.y) as u32;
                    img.put_pixel(x, y, o.fill.at(lx, ly));
                }
            }
        }
    }

    /// Ground truth for every object visible at `frame`.
    pub fn ground_truth(&self, frame: u32) -> Vec<GroundTruthRecord> {
        let placed: Vec<(u64, PlacedRect)> = self
            .objects
            .iter()
            .filter_map(|o| o.placement(frame).map(|p| (o.id, p)))
            .collect();
        placed
            .iter()
            .map(|(id, p)| GroundTruthRecord {
                frame_index: frame,
                object_id: *id,
                cx: p.x as f64 + p.w as f64 / 2.0,
                cy: p.y as f64 + p.h as f64 / 2.0,
                h: p.h as f64,
                w: p.w as f64,
                occluded: placed.iter().any(|(o, q)| o != id && p.overlaps(q)),
            })
            .collect()
    }
}

/// Zero-motion P-frame encoding: a macroblock is skipped iff no pixel
/// changed; a subblock's coefficient bit is set iff some channel changed by
/// more than the deadzone.
pub fn encode_p_frame(current: &RgbImage, previous: &RgbImage) -> Vec<MacroblockRecord> {
    assert_eq!(
        (current.width(), current.height()),
        (previous.width(), previous.height()),
        "P-frame encoding needs equal frame sizes"
    );
    let cols = current.width() / MB_SIZE;
    let rows = current.height() / MB_SIZE;
    let mut grid = Vec::with_capacity((cols * rows) as usize);
    for my in 0..rows {
        for mx in 0..cols {
            let mut changed = false;
            let mut mask = 0u16;
            for y in my * MB_SIZE..(my + 1) * MB_SIZE {
                for x in mx * MB_SIZE..(mx + 1) * MB_SIZE {
                    let (a, b) = (current.pixel(x, y), previous.pixel(x, y));
                    if a != b {
                        changed = true;
                        if (0..3).any(|c| a[c].abs_diff(b[c]) > DEADZONE) {
                            let sub = ((y % MB_SIZE) / 4) * 4 + (x % MB_SIZE) / 4;
                            mask |= 1 << sub;
                        }
                    }
                }
            }
            grid.push(if changed { MacroblockRecord::coded(mask) } else { MacroblockRecord::SKIP });
        }
    }
    grid
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseStats {
    pub isolated: u64,
    pub clusters: u64,
}

struct Cluster {
    cells: Vec<usize>,
    mask: u16,
    frames_left: u32,
}

/// Injects encoder noise into a P-frame grid.
struct NoiseInjector {
    rng: ChaCha8Rng,
    p_isolated: f64,
    p_cluster: f64,
    cols: usize,
    rows: usize,
    live: Vec<Cluster>,
    stats: NoiseStats,
}

impl NoiseInjector {
    fn new(cfg: &NoiseConfig, cols: u32, rows: u32) -> Self {
        NoiseInjector {
            rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
            p_isolated: cfg.p_isolated,
            p_cluster: cfg.p_cluster,
            cols: cols as usize,
            rows: rows as usize,
            live: Vec::new(),
            stats: NoiseStats::default(),
        }
    }

    fn apply(&mut self, grid: &mut [MacroblockRecord]) {
        let background: Vec<usize> = (0..grid.len()).filter(|&i| grid[i].skip).collect();
        if self.p_isolated > 0.0 {
            for &i in &background {
                if self.rng.gen_bool(self.p_isolated) {
                    grid[i] = MacroblockRecord::coded(0);
                    self.stats.isolated += 1;
                }
            }
        }
        if self.p_cluster > 0.0 && !background.is_empty() && self.rng.gen_bool(self.p_cluster) {
            let seed = background[self.rng.gen_range(0..background.len())];
            let (sx, sy) = ((seed % self.cols) as i64, (seed / self.cols) as i64);
            let mut neighbours: Vec<usize> = (-1i64..=1)
                .flat_map(|dy| (-1i64..=1).map(move |dx| (dx, dy)))
                .filter(|&d| d != (0, 0))
                .map(|(dx, dy)| (sx + dx, sy + dy))
                .filter(|&(x, y)| x >= 0 && y >= 0 && x < self.cols as i64 && y < self.rows as i64)
                .map(|(x, y)| y as usize * self.cols + x as usize)
                .collect();
            let extra = self.rng.gen_range(1..=2);
            let mut cells = vec![seed];
            for _ in 0..extra {
                if neighbours.is_empty() {
                    break;
                }
                cells.push(neighbours.swap_remove(self.rng.gen_range(0..neighbours.len())));
            }
            let mask = self.rng.gen::<u16>() | 1;
            let frames_left = self.rng.gen_range(1..=2);
            self.live.push(Cluster {
                cells,
                mask,
                frames_left,
            });
            self.stats.clusters += 1;
        }
        for c in &mut self.live {
            for &i in &c.cells {
                let m = if grid[i].skip { 0 } else { grid[i].coeff_mask };
                grid[i] = MacroblockRecord::coded(m | c.mask);
            }
            c.frames_left -= 1;
        }
        self.live.retain(|c| c.frames_left > 0);
    }
}

#[derive(Clone, Debug)]
pub struct Synthesis {
    pub header: StreamHeader,
    pub background: RgbImage,
    pub frames: Vec<FrameFeatures>,
    pub ground_truth: Vec<GroundTruthRecord>,
    pub noise: NoiseStats,
}

impl Synthesis {
    pub fn to_bytes(&self) -> Result<Vec<u8>, SynthError> {
        let mut out = Vec::new();
        write_stream(&self.header, Some(&self.background), &self.frames, &mut out)?;
        Ok(out)
    }
}

/// Renders and encodes every frame of the script.
pub fn synthesize(script: &SceneScript) -> Result<Synthesis, SynthError> {
    script.validate()?;
    let header = script.header();
    let background = script.render_background();
    let mut noise = NoiseInjector::new(&script.noise, header.mb_cols(), header.mb_rows());
    let mut frames = Vec::with_capacity(script.canvas.frame_count as usize);
    let mut ground_truth = Vec::new();
    let mut previous: Option<RgbImage> = None;
    for f in 0..script.canvas.frame_count {
        let img = script.render_frame(f);
        let payload = match (header.kind_of(f), &previous) {
            (FrameKind::P, Some(prev)) => {
                let mut grid = encode_p_frame(&img, prev);
                noise.apply(&mut grid);
                FramePayload::P(grid)
            }
            _ => FramePayload::I(encode_iframe(&img)?),
        };
        frames.push(FrameFeatures {
            frame_index: f,
            payload,
        });
        ground_truth.extend(script.ground_truth(f));
        previous = Some(img);
    }
    Ok(Synthesis {
        header,
        background,
        frames,
        ground_truth,
        noise: noise.stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intra::decode_full;

    fn script(objects: &str, extra: &str) -> SceneScript {
        let text = format!(
            r#"
[canvas]
width = 64
height = 48
gop_len = 8
frame_count = 20

[background]
kind = "flat"
color = [20, 20, 20]
{objects}
{extra}
"#
        );
        SceneScript::from_toml(&text).unwrap()
    }

    const MOVER: &str = r#"
[[objects]]
id = 7
w = 16
h = 48
fill = { kind = "checker", a = [200, 0, 0], b = [100, 0, 0], cell = 4 }
path = [{ frame = 0, cx = 10, cy = 24 }, { frame = 10, cx = 30, cy = 24 }, { frame = 19, cx = 30, cy = 24 }]
"#;

    #[test]
    fn empty_scene_is_uniform_and_all_skip() {
        let s = script("", "");
        let img = s.render_frame(3);
        assert!(img.as_raw().chunks(3).all(|p| p == [20, 20, 20]));
        let syn = synthesize(&s).unwrap();
        let kinds: String = syn.frames.iter().map(|f| if f.kind() == FrameKind::I { 'I' } else { 'P' }).collect();
        assert_eq!(kinds, "IPPPPPPPIPPPPPPPIPPP");
        for f in &syn.frames {
            if let Some(g) = f.mb_grid() {
                assert!(g.iter().all(|m| m.skip));
            }
        }
        assert!(syn.ground_truth.is_empty());
    }

    #[test]
    fn object_at_waypoint_and_midway() {
        let s = script(MOVER, "");
        let r = s.objects[0].placement(0).unwrap();
        assert_eq!(r, PlacedRect { x: 2, y: 0, w: 16, h: 48 });
        // halfway between frames 0 and 10: cx = 20
        let gt = s.ground_truth(5);
        assert_eq!((gt[0].cx, gt[0].cy), (20.0, 24.0));
        let img = s.render_frame(0);
        assert_eq!(img.pixel(2, 0), [200, 0, 0]);
        assert_eq!(img.pixel(1, 0), [20, 20, 20]);
        assert_eq!(img.pixel(17, 47), [200, 0, 0]);
        assert_eq!(img.pixel(18, 47), [20, 20, 20]);
    }

    #[test]
    fn moved_object_codes_its_footprint() {
        let s = script(MOVER, "");
        let (a, b) = (s.render_frame(0), s.render_frame(1));
        let grid = encode_p_frame(&b, &a);
        // x spans [2,18) then [4,20): macroblock columns 0 and 1 in all rows
        for (i, m) in grid.iter().enumerate() {
            let mx = i % 4;
            assert_eq!(m.skip, mx >= 2, "mb {i}");
        }
        assert!(encode_p_frame(&a, &a).iter().all(|m| m.skip));
    }

    #[test]
    fn dither_below_deadzone_has_no_coefficients() {
        let a = RgbImage::filled(32, 16, [100, 100, 100]);
        let mut b = a.clone();
        b.put_pixel(3, 3, [101, 99, 100]);
        b.put_pixel(20, 5, [104, 100, 100]);
        let g = encode_p_frame(&b, &a);
        assert_eq!(g[0], MacroblockRecord::coded(0));
        assert_eq!(g[1], MacroblockRecord::coded(1 << 5));
    }

    #[test]
    fn iframes_decode_to_rendered_frames() {
        let s = script(MOVER, "");
        let syn = synthesize(&s).unwrap();
        for f in &syn.frames {
            if let Some(p) = f.intra() {
                assert_eq!(decode_full(p).unwrap(), s.render_frame(f.frame_index));
            }
        }
    }

    #[test]
    fn noise_is_deterministic() {
        let noisy = "[noise]\np_isolated = 0.05\np_cluster = 0.3\nrng_seed = 42\n";
        let s = script("", noisy);
        let a = synthesize(&s).unwrap();
        let b = synthesize(&s).unwrap();
        assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
        assert_eq!(a.noise, b.noise);
        assert!(a.noise.isolated > 0);
        let mut other = s.clone();
        other.noise.rng_seed = 43;
        assert_ne!(synthesize(&other).unwrap().to_bytes().unwrap(), a.to_bytes().unwrap());
    }

    #[test]
    fn crossing_objects_are_marked_occluded() {
        let two = r#"
[[objects]]
id = 1
w = 16
h = 16
fill = { kind = "solid", color = [255, 0, 0] }
path = [{ frame = 0, cx = 8, cy = 24 }, { frame = 19, cx = 56, cy = 24 }]

[[objects]]
id = 2
w = 16
h = 48
fill = { kind = "solid", color = [0, 255, 0] }
path = [{ frame = 0, cx = 56, cy = 24 }, { frame = 19, cx = 8, cy = 24 }]
"#;
        // too small objects are rejected
        let text = format!("[canvas]\nwidth = 64\nheight = 48\ngop_len = 8\nframe_count = 20\n{two}");
        assert!(matches!(SceneScript::from_toml(&text), Err(SynthError::Invalid(_))));
        let s = SceneScript::from_toml(&text.replace("h = 16", "h = 48")).unwrap();
        let gt = s.ground_truth(10);
        assert!(gt.iter().all(|g| g.occluded));
        let gt = s.ground_truth(0);
        assert!(gt.iter().all(|g| !g.occluded));
    }

    #[test]
    fn invalid_scripts_are_rejected() {
        let base = "[canvas]\nwidth = 64\nheight = 48\ngop_len = 8\nframe_count = 20\n";
        let outside = format!("{base}[[objects]]\nid = 1\nw = 32\nh = 32\nfill = {{ kind = \"solid\", color = [1, 2, 3] }}\npath = [{{ frame = 0, cx = 8, cy = 24 }}]\n");
        assert!(SceneScript::from_toml(&outside).is_err());
        let order = format!("{base}[[objects]]\nid = 1\nw = 32\nh = 32\nfill = {{ kind = \"solid\", color = [1, 2, 3] }}\npath = [{{ frame = 5, cx = 30, cy = 24 }}, {{ frame = 5, cx = 32, cy = 24 }}]\n");
        assert!(SceneScript::from_toml(&order).is_err());
        assert!(SceneScript::from_toml(&base.replace("width = 64", "width = 60")).is_err());
        assert!(SceneScript::from_toml(&format!("{base}[noise]\np_isolated = 1.5\n")).is_err());
        assert!(SceneScript::from_toml("[canvas]\nwidth = 64").is_err());
    }
}
