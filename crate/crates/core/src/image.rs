//! Plain RGB24 frame buffers and pixel rectangles.

use serde::{Deserialize, Serialize};

/// Row-major, channel-interleaved 8-bit RGB image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, [0, 0, 0])
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut data = Vec::with_capacity(n * 3);
        for _ in 0..n {
            data.extend_from_slice(&rgb);
        }
        RgbImage {
            width,
            height,
            data,
        }
    }

    /// Wraps a raw buffer; `None` unless `data.len() == width * height * 3`.
    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Option<Self> {
        if data.len() != width as usize * height as usize * 3 {
            return None;
        }
        Some(RgbImage {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    #[inline]
    pub fn channel(&self, x: u32, y: u32, c: usize) -> u8 {
        self.data[self.offset(x, y) + c]
    }

    #[inline]
    pub fn put_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = self.offset(x, y);
        self.data[o..o + 3].copy_from_slice(&rgb);
    }

    #[inline]
    pub fn set_channel(&mut self, x: u32, y: u32, c: usize, v: u8) {
        let o = self.offset(x, y);
        self.data[o + c] = v;
    }

    pub fn full_rect(&self) -> PixelRect {
        PixelRect::new(0, 0, self.width, self.height)
    }

    /// Copies out the pixels under `rect` as a tile. `rect` must lie inside the image.
    pub fn crop(&self, rect: PixelRect) -> PixelTile {
        debug_assert!(rect.within(self.width, self.height));
        let mut pixels = Vec::with_capacity(rect.area() as usize * 3);
        for y in rect.y..rect.bottom() {
            let start = self.offset(rect.x, y);
            let end = start + rect.w as usize * 3;
            pixels.extend_from_slice(&self.data[start..end]);
        }
        PixelTile { rect, pixels }
    }
}

/// Axis-aligned pixel rectangle, `[x, x + w) × [y, y + h)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl PixelRect {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        PixelRect { x, y, w, h }
    }

    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn is_empty(&self) -> bool {
        self.w == 0 || self.h == 0
    }

    pub fn within(&self, width: u32, height: u32) -> bool {
        self.right() <= width && self.bottom() <= height
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }

    /// Clips a real-valued `[x0, x1) × [y0, y1)` box to the frame, rounding outward.
    pub fn from_bounds_clipped(x0: f64, y0: f64, x1: f64, y1: f64, width: u32, height: u32) -> Self {
        let cx0 = x0.floor().clamp(0.0, width as f64) as u32;
        let cy0 = y0.floor().clamp(0.0, height as f64) as u32;
        let cx1 = x1.ceil().clamp(0.0, width as f64) as u32;
        let cy1 = y1.ceil().clamp(0.0, height as f64) as u32;
        PixelRect::new(cx0, cy0, cx1.saturating_sub(cx0), cy1.saturating_sub(cy0))
    }
}

/// A rectangular window of decoded pixels, positioned in frame coordinates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PixelTile {
    pub rect: PixelRect,
    pub pixels: Vec<u8>,
}

impl PixelTile {
    /// Pixel at tile-local coordinates.
    #[inline]
    pub fn local(&self, lx: u32, ly: u32) -> [u8; 3] {
        let o = (ly as usize * self.rect.w as usize + lx as usize) * 3;
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }
}

/// Boolean mask over a tile, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Tightest local rectangle around the set pixels.
    pub fn bounding_rect(&self) -> Option<PixelRect> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x + 1);
                    y1 = y1.max(y + 1);
                }
            }
        }
        (x0 != u32::MAX).then(|| PixelRect::new(x0, y0, x1 - x0, y1 - y0))
    }
}
