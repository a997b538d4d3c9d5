//! Lossless DC-predicted 4x4 intra codec for I-frames.
//!
//! Every block of every plane is predicted from the causal neighbours of the
//! block: the four pixels directly above its top row and the four pixels
//! directly left of its left column, whichever exist. The top-left block has
//! no neighbours and is predicted from the constant 128. Residuals are stored
//! exactly, so reconstruction is bit-exact.
//!
//! Because prediction reaches outside the block, decoding one block normally
//! requires decoding everything above and to the left of it first.
//! [`decode_region_partial`] breaks that chain by reading neighbours that were
//! not decoded in the same call from a background image instead.

use thiserror::Error;

use crate::image::{PixelRect, PixelTile, RgbImage};

pub const BLOCK: u32 = 4;
pub const PLANES: usize = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("image dimensions {width}x{height} are not multiples of {BLOCK}")]
    BadDimensions { width: u32, height: u32 },
    #[error("payload is {expected_w}x{expected_h} but got {width}x{height}")]
    DimensionMismatch {
        expected_w: u32,
        expected_h: u32,
        width: u32,
        height: u32,
    },
    #[error("plane {plane} holds {found} blocks, expected {expected}")]
    BlockCount {
        plane: usize,
        expected: usize,
        found: usize,
    },
    #[error("plane {plane} block {block}: unknown prediction mode {mode}")]
    UnknownMode { plane: usize, block: usize, mode: u8 },
    #[error("plane {plane} block {block}: neighbour prediction without neighbours")]
    ModeWithoutNeighbours { plane: usize, block: usize },
    #[error("rectangle {rect:?} is empty or outside the {width}x{height} frame")]
    RectOutOfBounds {
        rect: PixelRect,
        width: u32,
        height: u32,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum PredMode {
    /// Constant 128 predictor.
    Constant = 0,
    /// Rounded mean of the available causal neighbour pixels.
    NeighbourDc = 1,
}

impl PredMode {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(PredMode::Constant),
            1 => Some(PredMode::NeighbourDc),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntraBlock {
    pub mode: PredMode,
    /// Source minus predictor, raster order inside the block.
    pub residuals: [i16; 16],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntraPayload {
    pub width: u32,
    pub height: u32,
    /// R, G, B planes; blocks in raster order.
    pub planes: [Vec<IntraBlock>; PLANES],
}

impl IntraPayload {
    pub fn blocks_x(&self) -> u32 {
        self.width / BLOCK
    }

    pub fn blocks_y(&self) -> u32 {
        self.height / BLOCK
    }

    pub fn blocks_per_plane(&self) -> usize {
        (self.blocks_x() * self.blocks_y()) as usize
    }

    /// Checks block counts and mode legality.
    pub fn validate(&self) -> Result<(), CodecError> {
        check_dims(self.width, self.height)?;
        let expected = self.blocks_per_plane();
        for (p, plane) in self.planes.iter().enumerate() {
            if plane.len() != expected {
                return Err(CodecError::BlockCount {
                    plane: p,
                    expected,
                    found: plane.len(),
                });
            }
            if let Some(first) = plane.first() {
                if first.mode == PredMode::NeighbourDc {
                    return Err(CodecError::ModeWithoutNeighbours { plane: p, block: 0 });
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DecodeStats {
    pub blocks_decoded: u64,
    pub blocks_total: u64,
}

impl DecodeStats {
    pub fn accumulate(&mut self, other: DecodeStats) {
        self.blocks_decoded += other.blocks_decoded;
        self.blocks_total += other.blocks_total;
    }

    pub fn ratio(&self) -> f64 {
        if self.blocks_total == 0 {
            0.0
        } else {
            self.blocks_decoded as f64 / self.blocks_total as f64
        }
    }
}

fn check_dims(width: u32, height: u32) -> Result<(), CodecError> {
    if width == 0 || height == 0 || !width.is_multiple_of(BLOCK) || !height.is_multiple_of(BLOCK) {
        return Err(CodecError::BadDimensions { width, height });
    }
    Ok(())
}

/// Prediction for the block whose top-left pixel is `(x0, y0)`. `fetch`
/// returns the reference sample at a frame coordinate.
#[inline]
fn predict(mode: PredMode, x0: u32, y0: u32, fetch: impl Fn(u32, u32) -> u8) -> i32 {
    match mode {
        PredMode::Constant => 128,
        PredMode::NeighbourDc => {
            let mut sum = 0u32;
            let mut n = 0u32;
            if y0 > 0 {
                for dx in 0..BLOCK {
                    sum += fetch(x0 + dx, y0 - 1) as u32;
                }
                n += BLOCK;
            }
            if x0 > 0 {
                for dy in 0..BLOCK {
                    sum += fetch(x0 - 1, y0 + dy) as u32;
                }
                n += BLOCK;
            }
            debug_assert!(n > 0);
            ((sum + n / 2) / n) as i32
        }
    }
}

#[inline]
fn reconstruct(pred: i32, residual: i16) -> u8 {
    (pred + residual as i32).clamp(0, 255) as u8
}

fn mode_for(bx: u32, by: u32) -> PredMode {
    if bx == 0 && by == 0 {
        PredMode::Constant
    } else {
        PredMode::NeighbourDc
    }
}

pub fn encode_iframe(image: &RgbImage) -> Result<IntraPayload, CodecError> {
    let (w, h) = (image.width(), image.height());
    check_dims(w, h)?;
    let (bw, bh) = (w / BLOCK, h / BLOCK);
    let planes: [Vec<IntraBlock>; PLANES] = std::array::from_fn(|c| {
        let mut blocks = Vec::with_capacity((bw * bh) as usize);
        for by in 0..bh {
            for bx in 0..bw {
                let (x0, y0) = (bx * BLOCK, by * BLOCK);
                let mode = mode_for(bx, by);
                let pred = predict(mode, x0, y0, |x, y| image.channel(x, y, c));
                let mut residuals = [0i16; 16];
                for dy in 0..BLOCK {
                    for dx in 0..BLOCK {
                        let src = image.channel(x0 + dx, y0 + dy, c) as i32;
                        residuals[(dy * BLOCK + dx) as usize] = (src - pred) as i16;
                    }
                }
                blocks.push(IntraBlock { mode, residuals });
            }
        }
        blocks
    });
    Ok(IntraPayload {
        width: w,
        height: h,
        planes,
    })
}

pub fn decode_full(payload: &IntraPayload) -> Result<RgbImage, CodecError> {
    payload.validate()?;
    let mut out = RgbImage::new(payload.width, payload.height);
    let bw = payload.blocks_x();
    for (c, plane) in payload.planes.iter().enumerate() {
        for (i, block) in plane.iter().enumerate() {
            let (bx, by) = (i as u32 % bw, i as u32 / bw);
            let (x0, y0) = (bx * BLOCK, by * BLOCK);
            let pred = predict(block.mode, x0, y0, |x, y| out.channel(x, y, c));
            for dy in 0..BLOCK {
                for dx in 0..BLOCK {
                    let r = block.residuals[(dy * BLOCK + dx) as usize];
                    out.set_channel(x0 + dx, y0 + dy, c, reconstruct(pred, r));
                }
            }
        }
    }
    Ok(out)
}

/// Block-aligned hull of `rect`, in block units: `(bx0, by0, bx1, by1)` exclusive.
pub fn block_hull(rect: PixelRect) -> (u32, u32, u32, u32) {
    (
        rect.x / BLOCK,
        rect.y / BLOCK,
        rect.right().div_ceil(BLOCK),
        rect.bottom().div_ceil(BLOCK),
    )
}

/// Decodes only the 4x4 blocks intersecting `rect`, in raster order.
///
/// A neighbour pixel decoded earlier in this call is used as-is; any other
/// neighbour is read from `background`. The returned tile is cropped to `rect`.
pub fn decode_region_partial(
    payload: &IntraPayload,
    rect: PixelRect,
    background: &RgbImage,
) -> Result<(PixelTile, DecodeStats), CodecError> {
    payload.validate()?;
    if background.width() != payload.width || background.height() != payload.height {
        return Err(CodecError::DimensionMismatch {
            expected_w: payload.width,
            expected_h: payload.height,
            width: background.width(),
            height: background.height(),
        });
    }
    if rect.is_empty() || !rect.within(payload.width, payload.height) {
        return Err(CodecError::RectOutOfBounds {
            rect,
            width: payload.width,
            height: payload.height,
        });
    }

    let (bx0, by0, bx1, by1) = block_hull(rect);
    let hull = PixelRect::new(
        bx0 * BLOCK,
        by0 * BLOCK,
        (bx1 - bx0) * BLOCK,
        (by1 - by0) * BLOCK,
    );
    let mut scratch = RgbImage::new(hull.w, hull.h);
    let bw = payload.blocks_x();

    for (c, plane) in payload.planes.iter().enumerate() {
        for by in by0..by1 {
            for bx in bx0..bx1 {
                let block = &plane[(by * bw + bx) as usize];
                let (x0, y0) = (bx * BLOCK, by * BLOCK);
                let pred = predict(block.mode, x0, y0, |x, y| {
                    if hull.contains(x, y) {
                        scratch.channel(x - hull.x, y - hull.y, c)
                    } else {
                        background.channel(x, y, c)
                    }
                });
                for dy in 0..BLOCK {
                    for dx in 0..BLOCK {
                        let r = block.residuals[(dy * BLOCK + dx) as usize];
                        scratch.set_channel(
                            x0 + dx - hull.x,
                            y0 + dy - hull.y,
                            c,
                            reconstruct(pred, r),
                        );
                    }
                }
            }
        }
    }

    let local = PixelRect::new(rect.x - hull.x, rect.y - hull.y, rect.w, rect.h);
    let mut tile = scratch.crop(local);
    tile.rect = rect;
    let stats = DecodeStats {
        blocks_decoded: ((bx1 - bx0) * (by1 - by0)) as u64,
        blocks_total: payload.blocks_per_plane() as u64,
    };
    Ok((tile, stats))
}
