//! I-frame blob refinement: prediction of the decode region, background
//! subtraction on the partially decoded pixels, and linear back-correction
//! of the P-frame blobs in between.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::components::components_8;
use crate::image::{BinaryMask, PixelRect, PixelTile, RgbImage};
use crate::intra::{decode_region_partial, CodecError, DecodeStats, IntraPayload, BLOCK};
use crate::occlusion::{hue_histogram, HueHistogram};
use crate::psmf::EntityId;

#[derive(Debug, thiserror::Error)]
pub enum RefineError {
    #[error("invalid refinement config: {0}")]
    Config(String),
    #[error("tile {rect:?} lies outside the {width}x{height} background")]
    TileOutsideBackground { rect: PixelRect, width: u32, height: u32 },
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Blob as centre plus size, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobFeature {
    pub cx: f64,
    pub cy: f64,
    pub h: f64,
    pub w: f64,
}

impl BlobFeature {
    pub fn new(cx: f64, cy: f64, h: f64, w: f64) -> Self {
        BlobFeature { cx, cy, h, w }
    }

    pub fn from_rect(r: PixelRect) -> Self {
        BlobFeature {
            cx: r.x as f64 + r.w as f64 / 2.0,
            cy: r.y as f64 + r.h as f64 / 2.0,
            h: r.h as f64,
            w: r.w as f64,
        }
    }

    /// Corner form `(x0, y0, x1, y1)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    /// Pixel rectangle covering the blob, clipped to the frame.
    pub fn to_rect(&self, width: u32, height: u32) -> PixelRect {
        let (x0, y0, x1, y1) = self.bounds();
        PixelRect::from_bounds_clipped(x0, y0, x1, y1, width, height)
    }

    /// Grows every side by `margin` pixels.
    pub fn expanded(&self, margin: f64) -> Self {
        BlobFeature {
            h: self.h + 2.0 * margin,
            w: self.w + 2.0 * margin,
            ..*self
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    /// Background-subtraction threshold on the max-channel difference.
    pub epsilon: u8,
    pub min_component_area: u32,
    pub morph_radius: u32,
    /// Border added around the predicted blob before decoding.
    pub decode_margin: u32,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            epsilon: 25,
            min_component_area: 16,
            morph_radius: 1,
            decode_margin: BLOCK,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<(), RefineError> {
        if !(1..=254).contains(&self.epsilon) {
            return Err(RefineError::Config(format!("epsilon {} outside [1, 254]", self.epsilon)));
        }
        if self.min_component_area < 1 {
            return Err(RefineError::Config("min_component_area must be at least 1".into()));
        }
        Ok(())
    }
}

/// Predicted I-frame blob: centre of the last P-frame blob, largest height
/// and width seen over the GOP.
pub fn predict_blob(p_blobs: &[BlobFeature]) -> Option<BlobFeature> {
    let last = p_blobs.last()?;
    let h = p_blobs.iter().map(|b| b.h).fold(f64::MIN, f64::max);
    let w = p_blobs.iter().map(|b| b.w).fold(f64::MIN, f64::max);
    Some(BlobFeature::new(last.cx, last.cy, h, w))
}

/// Blob at frame `i - k`, between `blob_i` at frame `i` and `blob_prev` at `i - n`.
pub fn interpolate_blobs(blob_i: &BlobFeature, blob_prev: &BlobFeature, n: u32, k: u32) -> BlobFeature {
    assert!(n > 0 && k <= n, "interpolation step {k} outside [0, {n}]");
    if k == 0 {
        return *blob_i;
    }
    if k == n {
        return *blob_prev;
    }
    let t = k as f64 / n as f64;
    let lerp = |a: f64, b: f64| a + t * (b - a);
    BlobFeature {
        cx: lerp(blob_i.cx, blob_prev.cx),
        cy: lerp(blob_i.cy, blob_prev.cy),
        h: lerp(blob_i.h, blob_prev.h),
        w: lerp(blob_i.w, blob_prev.w),
    }
}

/// Square min (erode) or max (dilate) filter; only in-bounds neighbours count.
fn rank_filter(mask: &BinaryMask, radius: u32, dilate: bool) -> BinaryMask {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let r = radius as i64;
    let mut out = BinaryMask::new(mask.width, mask.height);
    for y in 0..h {
        for x in 0..w {
            let mut v = !dilate;
            'win: for yy in (y - r).max(0)..=(y + r).min(h - 1) {
                for xx in (x - r).max(0)..=(x + r).min(w - 1) {
                    if mask.get(xx as u32, yy as u32) == dilate {
                        v = dilate;
                        break 'win;
                    }
                }
            }
            out.set(x as u32, y as u32, v);
        }
    }
    out
}

/// Opening followed by closing with a `(2r+1)²` square.
pub fn open_close(mask: &BinaryMask, radius: u32) -> BinaryMask {
    if radius == 0 || mask.bits.is_empty() {
        return mask.clone();
    }
    let opened = rank_filter(&rank_filter(mask, radius, false), radius, true);
    rank_filter(&rank_filter(&opened, radius, true), radius, false)
}

/// Clears 8-connected components with fewer than `min_area` pixels.
pub fn remove_small_components(mask: &mut BinaryMask, min_area: u32) {
    for comp in components_8(mask.width as usize, mask.height as usize, &mask.bits) {
        if comp.len() < min_area as usize {
            for (x, y) in comp {
                mask.set(x as u32, y as u32, false);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Subtraction {
    /// Tile-local foreground mask after cleanup.
    pub mask: BinaryMask,
    /// Tightest frame rectangle around the mask, if any pixel survived.
    pub rect: Option<PixelRect>,
}

impl Subtraction {
    pub fn blob(&self) -> Option<BlobFeature> {
        self.rect.map(BlobFeature::from_rect)
    }
}

/// Thresholds `max_c |I - B| > ε` over the tile and cleans the mask up.
pub fn background_subtract(
    tile: &PixelTile,
    background: &RgbImage,
    config: &RefineConfig,
) -> Result<Subtraction, RefineError> {
    let rect = tile.rect;
    if !rect.within(background.width(), background.height()) {
        return Err(RefineError::TileOutsideBackground {
            rect,
            width: background.width(),
            height: background.height(),
        });
    }
    let mut mask = BinaryMask::new(rect.w, rect.h);
    for ly in 0..rect.h {
        for lx in 0..rect.w {
            let a = tile.local(lx, ly);
            let b = background.pixel(rect.x + lx, rect.y + ly);
            let d = (0..3).map(|c| a[c].abs_diff(b[c])).max().unwrap();
            mask.set(lx, ly, d > config.epsilon);
        }
    }
    let mut mask = open_close(&mask, config.morph_radius);
    remove_small_components(&mut mask, config.min_component_area);
    let rect = mask
        .bounding_rect()
        .map(|r| PixelRect::new(r.x + rect.x, r.y + rect.y, r.w, r.h));
    Ok(Subtraction { mask, rect })
}

/// Where I-frame pixels come from.
#[derive(Clone, Copy)]
pub enum PixelSource<'a> {
    /// Decode only the predicted regions, substituting background pixels.
    Partial,
    /// Crop from an already fully decoded frame.
    Full(&'a RgbImage),
}

/// Refinement of one object in one I-frame.
#[derive(Clone, Debug)]
pub struct IFrameRefinement {
    pub predicted: BlobFeature,
    pub decode_rect: PixelRect,
    pub stats: DecodeStats,
    pub subtraction: Subtraction,
    /// Hue histogram of the segmented pixels; `None` when nothing survived.
    pub hue: Option<HueHistogram>,
}

impl IFrameRefinement {
    pub fn blob(&self) -> Option<BlobFeature> {
        self.subtraction.blob()
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RefineTimings {
    pub decode: Duration,
    pub subtract: Duration,
    pub interpolate: Duration,
}

impl RefineTimings {
    pub fn add(&mut self, o: RefineTimings) {
        self.decode += o.decode;
        self.subtract += o.subtract;
        self.interpolate += o.interpolate;
    }
}

/// Predicts, decodes and segments one object in an I-frame.
pub fn refine_iframe(
    p_blobs: &[BlobFeature],
    payload: &IntraPayload,
    background: &RgbImage,
    source: PixelSource<'_>,
    config: &RefineConfig,
    timings: &mut RefineTimings,
) -> Result<Option<IFrameRefinement>, RefineError> {
    let Some(predicted) = predict_blob(p_blobs) else {
        return Ok(None);
    };
    let decode_rect = predicted
        .expanded(config.decode_margin as f64)
        .to_rect(payload.width, payload.height);
    if decode_rect.is_empty() {
        return Ok(None);
    }
    let t0 = Instant::now();
    let (tile, stats) = match source {
        PixelSource::Partial => decode_region_partial(payload, decode_rect, background)?,
        PixelSource::Full(img) => (img.crop(decode_rect), DecodeStats::default()),
    };
    let t1 = Instant::now();
    let subtraction = background_subtract(&tile, background, config)?;
    let hue = subtraction.rect.map(|_| hue_histogram(&tile, &subtraction.mask));
    timings.decode += t1 - t0;
    timings.subtract += t1.elapsed();
    Ok(Some(IFrameRefinement {
        predicted,
        decode_rect,
        stats,
        subtraction,
        hue,
    }))
}

/// Rewrites the P-frame blobs strictly between `anchor` and `iframe`.
pub fn interpolate_gop(
    anchor: (u32, BlobFeature),
    iframe: (u32, BlobFeature),
    frames: &[u32],
) -> Vec<(u32, BlobFeature)> {
    let n = iframe.0 - anchor.0;
    frames
        .iter()
        .filter(|&&f| f > anchor.0 && f < iframe.0)
        .map(|&f| (f, interpolate_blobs(&iframe.1, &anchor.1, n, iframe.0 - f)))
        .collect()
}

/// One tracked object's share of a GOP.
#[derive(Clone, Debug)]
pub struct ObjectGop {
    pub id: EntityId,
    /// PSMF blobs of the P-frames since the previous I-frame.
    pub p_blobs: Vec<(u32, BlobFeature)>,
    /// Refined blob of the previous I-frame, if there is one.
    pub anchor: Option<(u32, BlobFeature)>,
}

#[derive(Clone, Debug)]
pub struct GopRefinement {
    pub id: EntityId,
    pub iframe: Option<IFrameRefinement>,
    /// Rewritten P-frame blobs; `None` keeps the PSMF blobs.
    pub p_blobs: Option<Vec<(u32, BlobFeature)>>,
}

/// Refines every object of a GOP ending at I-frame `iframe_index`.
///
/// Objects are independent; the result follows the input order.
pub fn refine_gop(
    iframe_index: u32,
    objects: &[ObjectGop],
    payload: &IntraPayload,
    background: &RgbImage,
    source: PixelSource<'_>,
    config: &RefineConfig,
) -> Result<(Vec<GopRefinement>, RefineTimings), RefineError> {
    config.validate()?;
    let mut timings = RefineTimings::default();
    let mut out = Vec::with_capacity(objects.len());
    for obj in objects {
        let blobs: Vec<BlobFeature> = obj.p_blobs.iter().map(|(_, b)| *b).collect();
        let iframe = refine_iframe(&blobs, payload, background, source, config, &mut timings)?;
        let t = Instant::now();
        let p_blobs = match (&iframe, obj.anchor) {
            (Some(r), Some(anchor)) => r.blob().map(|b| {
                let frames: Vec<u32> = obj.p_blobs.iter().map(|(f, _)| *f).collect();
                interpolate_gop(anchor, (iframe_index, b), &frames)
            }),
            _ => None,
        };
        timings.interpolate += t.elapsed();
        out.push(GopRefinement {
            id: obj.id,
            iframe,
            p_blobs,
        });
    }
    Ok((out, timings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intra::encode_iframe;

    fn paint(img: &mut RgbImage, r: PixelRect, rgb: [u8; 3]) {
        for y in r.y..r.bottom() {
            for x in r.x..r.right() {
                img.put_pixel(x, y, rgb);
            }
        }
    }

    #[test]
    fn prediction_takes_last_centre_and_max_size() {
        let blobs = [
            BlobFeature::new(90.0, 58.0, 40.0, 20.0),
            BlobFeature::new(95.0, 59.0, 44.0, 22.0),
            BlobFeature::new(100.0, 60.0, 42.0, 21.0),
        ];
        assert_eq!(predict_blob(&blobs), Some(BlobFeature::new(100.0, 60.0, 44.0, 22.0)));
        assert_eq!(predict_blob(&blobs[..1]), Some(blobs[0]));
        assert_eq!(predict_blob(&[]), None);
        let constant = [BlobFeature::new(100.0, 60.0, 40.0, 20.0); 7];
        assert_eq!(predict_blob(&constant), Some(constant[0]));
    }

    #[test]
    fn midpoint_interpolation() {
        let fi = BlobFeature::new(100.0, 60.0, 44.0, 22.0);
        let fp = BlobFeature::new(80.0, 60.0, 40.0, 20.0);
        assert_eq!(interpolate_blobs(&fi, &fp, 8, 4), BlobFeature::new(90.0, 60.0, 42.0, 21.0));
        assert_eq!(interpolate_blobs(&fi, &fp, 8, 0), fi);
        assert_eq!(interpolate_blobs(&fi, &fp, 8, 8), fp);
        for k in 1..8 {
            assert_eq!(interpolate_blobs(&fi, &fi, 8, k), fi);
        }
    }

    #[test]
    fn subtraction_fits_solid_block() {
        let bg = RgbImage::filled(64, 80, [60, 60, 60]);
        let mut img = bg.clone();
        let block = PixelRect::new(10, 12, 30, 50);
        paint(&mut img, block, [140, 140, 140]);
        let cfg = RefineConfig::default();
        let s = background_subtract(&img.crop(img.full_rect()), &bg, &cfg).unwrap();
        assert_eq!(s.rect, Some(block));
        assert_eq!(s.mask.count(), 1500);

        // four isolated noise pixels vanish
        for (x, y) in [(2, 2), (50, 5), (55, 70), (3, 75)] {
            img.put_pixel(x, y, [255, 0, 0]);
        }
        let s = background_subtract(&img.crop(img.full_rect()), &bg, &cfg).unwrap();
        assert_eq!(s.rect, Some(block));
        // without morphology the area rule alone removes them
        let raw = RefineConfig {
            morph_radius: 0,
            ..cfg
        };
        let s = background_subtract(&img.crop(img.full_rect()), &bg, &raw).unwrap();
        assert_eq!(s.rect, Some(block));
    }

    #[test]
    fn identical_tile_gives_nothing() {
        let bg = RgbImage::filled(32, 32, [10, 200, 30]);
        let s = background_subtract(&bg.crop(PixelRect::new(4, 4, 20, 20)), &bg, &RefineConfig::default()).unwrap();
        assert_eq!(s.mask.count(), 0);
        assert_eq!(s.rect, None);
    }

    #[test]
    fn threshold_is_strict_and_uses_max_channel() {
        let bg = RgbImage::filled(16, 16, [100, 100, 100]);
        let mut img = bg.clone();
        paint(&mut img, PixelRect::new(0, 0, 8, 8), [100, 125, 100]);
        paint(&mut img, PixelRect::new(8, 8, 8, 8), [100, 100, 126]);
        let cfg = RefineConfig {
            min_component_area: 1,
            morph_radius: 0,
            ..RefineConfig::default()
        };
        let s = background_subtract(&img.crop(img.full_rect()), &bg, &cfg).unwrap();
        assert_eq!(s.rect, Some(PixelRect::new(8, 8, 8, 8)));
    }

    #[test]
    fn tile_outside_background_is_rejected() {
        let bg = RgbImage::new(8, 8);
        let tile = RgbImage::new(16, 16).crop(PixelRect::new(0, 0, 16, 16));
        assert!(matches!(
            background_subtract(&tile, &bg, &RefineConfig::default()),
            Err(RefineError::TileOutsideBackground { .. })
        ));
    }

    #[test]
    fn config_bounds() {
        let bad = RefineConfig {
            epsilon: 0,
            ..RefineConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = RefineConfig {
            epsilon: 255,
            ..RefineConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = RefineConfig {
            min_component_area: 0,
            ..RefineConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(RefineConfig::default().validate().is_ok());
    }

    #[test]
    fn morphology_keeps_rectangles_touching_edges() {
        let mut m = BinaryMask::new(10, 10);
        for y in 0..4 {
            for x in 0..5 {
                m.set(x, y, true);
            }
        }
        assert_eq!(open_close(&m, 1), m);
    }

    #[test]
    fn gop_refinement_on_linear_motion() {
        let (w, h) = (160u32, 96u32);
        let bg = RgbImage::filled(w, h, [30, 30, 30]);
        let obj = |cx: u32| PixelRect::new(cx - 12, 24, 24, 40);
        let mut frame = bg.clone();
        // object at frame 16: centre x = 40 + 2·16
        paint(&mut frame, obj(72), [220, 40, 40]);
        let payload = encode_iframe(&frame).unwrap();
        // coarse PSMF blobs: macroblock-aligned, slightly off
        let p_blobs: Vec<(u32, BlobFeature)> = (9..16)
            .map(|f| (f, BlobFeature::new(40.0 + 2.0 * f as f64 + 3.0, 46.0, 48.0, 40.0)))
            .collect();
        let anchor = (8, BlobFeature::from_rect(obj(56)));
        let objs = [ObjectGop {
            id: EntityId(1),
            p_blobs,
            anchor: Some(anchor),
        }];
        let (res, _) = refine_gop(16, &objs, &payload, &bg, PixelSource::Partial, &RefineConfig::default()).unwrap();
        let r = &res[0];
        assert_eq!(r.iframe.as_ref().unwrap().blob(), Some(BlobFeature::from_rect(obj(72))));
        for (f, b) in r.p_blobs.as_ref().unwrap() {
            let truth = BlobFeature::from_rect(obj(40 + 2 * f));
            assert!((b.cx - truth.cx).abs() <= 1.0 && (b.cy - truth.cy).abs() <= 1.0);
        }
        let hue = r.iframe.as_ref().unwrap().hue.as_ref().unwrap();
        assert_eq!(hue.bins[0], 1.0);

        // full decode gives the same answer
        let full = crate::intra::decode_full(&payload).unwrap();
        let (res_full, _) = refine_gop(16, &objs, &payload, &bg, PixelSource::Full(&full), &RefineConfig::default()).unwrap();
        assert_eq!(res_full[0].p_blobs, r.p_blobs);
    }

    #[test]
    fn stationary_object_interpolates_to_constant() {
        let b = BlobFeature::new(50.0, 40.0, 30.0, 20.0);
        let out = interpolate_gop((0, b), (8, b), &(1..8).collect::<Vec<_>>());
        assert_eq!(out.len(), 7);
        assert!(out.iter().all(|(_, x)| *x == b));
    }

    #[test]
    fn object_matching_background_keeps_psmf_blobs() {
        let bg = RgbImage::filled(64, 64, [90, 90, 90]);
        let payload = encode_iframe(&bg).unwrap();
        let objs = [ObjectGop {
            id: EntityId(3),
            p_blobs: vec![(7, BlobFeature::new(32.0, 32.0, 16.0, 16.0))],
            anchor: Some((0, BlobFeature::new(30.0, 30.0, 16.0, 16.0))),
        }];
        let (res, _) = refine_gop(8, &objs, &payload, &bg, PixelSource::Partial, &RefineConfig::default()).unwrap();
        assert!(res[0].p_blobs.is_none());
        assert!(res[0].iframe.as_ref().unwrap().blob().is_none());
    }

    #[test]
    fn to_rect_clips() {
        let b = BlobFeature::new(-2.0, 5.0, 20.0, 10.0);
        assert_eq!(b.to_rect(100, 100), PixelRect::new(0, 0, 3, 15));
    }
}
