//! MacroBlock Feature Stream (MBFS): a little-endian binary container that
//! carries per-P-frame macroblock features and per-I-frame intra payloads.
//!
//! Layout:
//!
//! ```text
//! header   "MBFS" version:u16 width:u16 height:u16 fps:u8 gop_len:u8 frame_count:u32 flags:u16
//! bg       (flags bit0) 'B' rgb24[width * height * 3]
//! frame    'P' index:u32 { mb_flags:u8 [coeff_mask:u16 mv_x:i16 mv_y:i16 if not skip] }*
//!          'I' index:u32 { plane R,G,B: { mode:u8 residual:i16 * 16 }* }
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::image::RgbImage;
use crate::intra::{CodecError, IntraBlock, IntraPayload, PredMode, BLOCK, PLANES};

pub const MAGIC: [u8; 4] = *b"MBFS";
pub const VERSION: u16 = 1;
pub const MB_SIZE: u32 = 16;
pub const FLAG_BACKGROUND: u16 = 0x0001;

const TAG_BACKGROUND: u8 = b'B';
const TAG_P: u8 = b'P';
const TAG_I: u8 = b'I';
const MB_FLAG_SKIP: u8 = 0x01;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("stream truncated while reading {context}")]
    Truncated { context: String },
    #[error("frame {frame}: expected {expected:?} frame, found {found:?}")]
    KindMismatch {
        frame: u32,
        expected: FrameKind,
        found: FrameKind,
    },
    #[error("frame {frame}: index out of sequence (expected {expected})")]
    IndexMismatch { frame: u32, expected: u32 },
    #[error("frame {frame}: unknown frame tag {tag:#04x}")]
    UnknownTag { frame: u32, tag: u8 },
    #[error("frame {frame}: {detail}")]
    InvariantViolation { frame: u32, detail: String },
    #[error("frame {frame}: dimension mismatch: {detail}")]
    DimensionMismatch { frame: u32, detail: String },
    #[error("expected {expected} frames, got {found}")]
    FrameCount { expected: u32, found: u32 },
    #[error("background chunk: {0}")]
    Background(String),
    #[error("{0} trailing bytes after last frame")]
    TrailingBytes(u64),
    #[error("frame {frame}: intra payload: {source}")]
    Codec {
        frame: u32,
        #[source]
        source: CodecError,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum FrameKind {
    I,
    P,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamHeader {
    pub version: u16,
    pub width_px: u16,
    pub height_px: u16,
    pub fps: u8,
    pub gop_len: u8,
    pub frame_count: u32,
    pub flags: u16,
}

impl StreamHeader {
    pub fn new(width_px: u16, height_px: u16, fps: u8, gop_len: u8, frame_count: u32) -> Self {
        StreamHeader {
            version: VERSION,
            width_px,
            height_px,
            fps,
            gop_len,
            frame_count,
            flags: 0,
        }
    }

    pub fn with_background(mut self) -> Self {
        self.flags |= FLAG_BACKGROUND;
        self
    }

    pub fn has_background(&self) -> bool {
        self.flags & FLAG_BACKGROUND != 0
    }

    pub fn mb_cols(&self) -> u32 {
        self.width_px as u32 / MB_SIZE
    }

    pub fn mb_rows(&self) -> u32 {
        self.height_px as u32 / MB_SIZE
    }

    pub fn mb_count(&self) -> usize {
        (self.mb_cols() * self.mb_rows()) as usize
    }

    /// Frame `i` is an I-frame iff `i mod gop_len == 0`.
    pub fn kind_of(&self, frame_index: u32) -> FrameKind {
        if frame_index.is_multiple_of(self.gop_len as u32) {
            FrameKind::I
        } else {
            FrameKind::P
        }
    }

    pub fn validate(&self) -> Result<(), StreamError> {
        let bad = |m: &str| Err(StreamError::InvalidHeader(m.to_string()));
        if self.version != VERSION {
            return Err(StreamError::UnsupportedVersion(self.version));
        }
        if self.width_px == 0 || !(self.width_px as u32).is_multiple_of(MB_SIZE) {
            return bad("width must be a positive multiple of 16");
        }
        if self.height_px == 0 || !(self.height_px as u32).is_multiple_of(MB_SIZE) {
            return bad("height must be a positive multiple of 16");
        }
        if !(2..=10).contains(&self.gop_len) {
            return bad("gop_len must be in [2, 10]");
        }
        if self.frame_count == 0 {
            return bad("frame_count must be at least 1");
        }
        if self.flags & !FLAG_BACKGROUND != 0 {
            return bad("reserved flag bits set");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct MacroblockRecord {
    pub skip: bool,
    /// One bit per 4x4 luma subblock, raster order; set iff the subblock has
    /// nonzero transform coefficients.
    pub coeff_mask: u16,
    /// Quarter-pel motion vector. Carried but not read by the tracker.
    pub mv_qpel: (i16, i16),
}

impl MacroblockRecord {
    pub const SKIP: MacroblockRecord = MacroblockRecord {
        skip: true,
        coeff_mask: 0,
        mv_qpel: (0, 0),
    };

    pub fn coded(coeff_mask: u16) -> Self {
        MacroblockRecord {
            skip: false,
            coeff_mask,
            mv_qpel: (0, 0),
        }
    }

    pub fn is_valid(&self) -> bool {
        !self.skip || (self.coeff_mask == 0 && self.mv_qpel == (0, 0))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FramePayload {
    /// Macroblock grid in raster order.
    P(Vec<MacroblockRecord>),
    I(IntraPayload),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameFeatures {
    pub frame_index: u32,
    pub payload: FramePayload,
}

impl FrameFeatures {
    pub fn kind(&self) -> FrameKind {
        match self.payload {
            FramePayload::P(_) => FrameKind::P,
            FramePayload::I(_) => FrameKind::I,
        }
    }

    pub fn mb_grid(&self) -> Option<&[MacroblockRecord]> {
        match &self.payload {
            FramePayload::P(g) => Some(g),
            FramePayload::I(_) => None,
        }
    }

    pub fn intra(&self) -> Option<&IntraPayload> {
        match &self.payload {
            FramePayload::I(p) => Some(p),
            FramePayload::P(_) => None,
        }
    }
}

fn check_frame(header: &StreamHeader, expected_index: u32, frame: &FrameFeatures) -> Result<(), StreamError> {
    let f = frame.frame_index;
    if f != expected_index {
        return Err(StreamError::IndexMismatch {
            frame: f,
            expected: expected_index,
        });
    }
    let expected = header.kind_of(f);
    if frame.kind() != expected {
        return Err(StreamError::KindMismatch {
            frame: f,
            expected,
            found: frame.kind(),
        });
    }
    match &frame.payload {
        FramePayload::P(grid) => {
            if grid.len() != header.mb_count() {
                return Err(StreamError::DimensionMismatch {
                    frame: f,
                    detail: format!("{} macroblocks, expected {}", grid.len(), header.mb_count()),
                });
            }
            if let Some(pos) = grid.iter().position(|mb| !mb.is_valid()) {
                return Err(StreamError::InvariantViolation {
                    frame: f,
                    detail: format!("skip macroblock {pos} carries coefficients or motion"),
                });
            }
        }
        FramePayload::I(payload) => {
            if payload.width != header.width_px as u32 || payload.height != header.height_px as u32 {
                return Err(StreamError::DimensionMismatch {
                    frame: f,
                    detail: format!(
                        "intra payload {}x{}, stream {}x{}",
                        payload.width, payload.height, header.width_px, header.height_px
                    ),
                });
            }
            payload
                .validate()
                .map_err(|source| StreamError::Codec { frame: f, source })?;
        }
    }
    Ok(())
}

/// Serializes a complete stream. Returns the number of bytes written.
pub fn write_stream<W: Write>(
    header: &StreamHeader,
    background: Option<&RgbImage>,
    frames: &[FrameFeatures],
    sink: W,
) -> Result<u64, StreamError> {
    header.validate()?;
    if header.has_background() != background.is_some() {
        return Err(StreamError::Background(
            "header flag and background presence disagree".into(),
        ));
    }
    if let Some(bg) = background {
        if bg.width() != header.width_px as u32 || bg.height() != header.height_px as u32 {
            return Err(StreamError::Background(format!(
                "background is {}x{}, stream {}x{}",
                bg.width(),
                bg.height(),
                header.width_px,
                header.height_px
            )));
        }
    }
    if frames.len() as u64 != header.frame_count as u64 {
        return Err(StreamError::FrameCount {
            expected: header.frame_count,
            found: frames.len() as u32,
        });
    }
    for (i, frame) in frames.iter().enumerate() {
        check_frame(header, i as u32, frame)?;
    }

    let mut w = CountingWriter { inner: sink, count: 0 };
    w.write_all(&MAGIC)?;
    w.write_all(&header.version.to_le_bytes())?;
    w.write_all(&header.width_px.to_le_bytes())?;
    w.write_all(&header.height_px.to_le_bytes())?;
    w.write_all(&[header.fps, header.gop_len])?;
    w.write_all(&header.frame_count.to_le_bytes())?;
    w.write_all(&header.flags.to_le_bytes())?;
    if let Some(bg) = background {
        w.write_all(&[TAG_BACKGROUND])?;
        w.write_all(bg.as_raw())?;
    }
    for frame in frames {
        write_frame(&mut w, frame)?;
    }
    w.flush()?;
    Ok(w.count)
}

fn write_frame<W: Write>(w: &mut W, frame: &FrameFeatures) -> io::Result<()> {
    match &frame.payload {
        FramePayload::P(grid) => {
            w.write_all(&[TAG_P])?;
            w.write_all(&frame.frame_index.to_le_bytes())?;
            let mut buf = Vec::with_capacity(grid.len() * 7);
            for mb in grid {
                if mb.skip {
                    buf.push(MB_FLAG_SKIP);
                } else {
                    buf.push(0);
                    buf.extend_from_slice(&mb.coeff_mask.to_le_bytes());
                    buf.extend_from_slice(&mb.mv_qpel.0.to_le_bytes());
                    buf.extend_from_slice(&mb.mv_qpel.1.to_le_bytes());
                }
            }
            w.write_all(&buf)
        }
        FramePayload::I(payload) => {
            w.write_all(&[TAG_I])?;
            w.write_all(&frame.frame_index.to_le_bytes())?;
            let mut buf = Vec::with_capacity(payload.blocks_per_plane() * PLANES * 33);
            for plane in &payload.planes {
                for block in plane {
                    buf.push(block.mode as u8);
                    for r in block.residuals {
                        buf.extend_from_slice(&r.to_le_bytes());
                    }
                }
            }
            w.write_all(&buf)
        }
    }
}

struct CountingWriter<W> {
    inner: W,
    count: u64,
}

impl<W: Write> Write for CountingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.count += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

fn read_exact_ctx<R: Read>(r: &mut R, buf: &mut [u8], ctx: impl FnOnce() -> String) -> Result<(), StreamError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => StreamError::Truncated { context: ctx() },
        _ => StreamError::Io(e),
    })
}

/// Parses the header and optional background chunk; frames are yielded lazily
/// by the returned [`FrameReader`].
pub fn read_stream<R: Read>(mut source: R) -> Result<(StreamHeader, Option<RgbImage>, FrameReader<R>), StreamError> {
    let mut raw = [0u8; 18];
    read_exact_ctx(&mut source, &mut raw[..4], || "magic".into())?;
    let magic: [u8; 4] = raw[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(StreamError::BadMagic(magic));
    }
    read_exact_ctx(&mut source, &mut raw[4..], || "header".into())?;
    let header = StreamHeader {
        version: u16::from_le_bytes([raw[4], raw[5]]),
        width_px: u16::from_le_bytes([raw[6], raw[7]]),
        height_px: u16::from_le_bytes([raw[8], raw[9]]),
        fps: raw[10],
        gop_len: raw[11],
        frame_count: u32::from_le_bytes(raw[12..16].try_into().unwrap()),
        flags: u16::from_le_bytes([raw[16], raw[17]]),
    };
    header.validate()?;

    let background = if header.has_background() {
        let mut tag = [0u8];
        read_exact_ctx(&mut source, &mut tag, || "background tag".into())?;
        if tag[0] != TAG_BACKGROUND {
            return Err(StreamError::Background(format!("unexpected tag {:#04x}", tag[0])));
        }
        let len = header.width_px as usize * header.height_px as usize * 3;
        let mut data = vec![0u8; len];
        read_exact_ctx(&mut source, &mut data, || "background pixels".into())?;
        Some(RgbImage::from_raw(header.width_px as u32, header.height_px as u32, data).unwrap())
    } else {
        None
    };

    let reader = FrameReader {
        source,
        header,
        next_index: 0,
        done: false,
    };
    Ok((header, background, reader))
}

/// Lazily parses and validates frames. Stops after the first error.
pub struct FrameReader<R> {
    source: R,
    header: StreamHeader,
    next_index: u32,
    done: bool,
}

impl<R: Read> FrameReader<R> {
    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    fn read_frame(&mut self) -> Result<FrameFeatures, StreamError> {
        let expected = self.next_index;
        let mut head = [0u8; 5];
        read_exact_ctx(&mut self.source, &mut head, || format!("frame {expected} header"))?;
        let tag = head[0];
        let frame_index = u32::from_le_bytes(head[1..5].try_into().unwrap());
        if frame_index != expected {
            return Err(StreamError::IndexMismatch {
                frame: frame_index,
                expected,
            });
        }
        let payload = match tag {
            TAG_P => FramePayload::P(self.read_grid(frame_index)?),
            TAG_I => FramePayload::I(self.read_intra(frame_index)?),
            other => {
                return Err(StreamError::UnknownTag {
                    frame: frame_index,
                    tag: other,
                })
            }
        };
        let frame = FrameFeatures { frame_index, payload };
        check_frame(&self.header, expected, &frame)?;
        Ok(frame)
    }

    fn read_grid(&mut self, frame: u32) -> Result<Vec<MacroblockRecord>, StreamError> {
        let n = self.header.mb_count();
        let mut grid = Vec::with_capacity(n);
        let mut flags = [0u8];
        let mut body = [0u8; 6];
        for pos in 0..n {
            read_exact_ctx(&mut self.source, &mut flags, || format!("frame {frame} macroblock {pos}"))?;
            if flags[0] & !MB_FLAG_SKIP != 0 {
                return Err(StreamError::InvariantViolation {
                    frame,
                    detail: format!("macroblock {pos} has reserved flag bits {:#04x}", flags[0]),
                });
            }
            if flags[0] & MB_FLAG_SKIP != 0 {
                grid.push(MacroblockRecord::SKIP);
            } else {
                read_exact_ctx(&mut self.source, &mut body, || format!("frame {frame} macroblock {pos}"))?;
                grid.push(MacroblockRecord {
                    skip: false,
                    coeff_mask: u16::from_le_bytes([body[0], body[1]]),
                    mv_qpel: (
                        i16::from_le_bytes([body[2], body[3]]),
                        i16::from_le_bytes([body[4], body[5]]),
                    ),
                });
            }
        }
        Ok(grid)
    }

    fn read_intra(&mut self, frame: u32) -> Result<IntraPayload, StreamError> {
        let width = self.header.width_px as u32;
        let height = self.header.height_px as u32;
        let blocks = ((width / BLOCK) * (height / BLOCK)) as usize;
        let mut raw = vec![0u8; blocks * 33];
        let mut planes: [Vec<IntraBlock>; PLANES] = Default::default();
        for (p, plane) in planes.iter_mut().enumerate() {
            read_exact_ctx(&mut self.source, &mut raw, || format!("frame {frame} intra plane {p}"))?;
            plane.reserve_exact(blocks);
            for (b, chunk) in raw.chunks_exact(33).enumerate() {
                let mode = PredMode::from_u8(chunk[0]).ok_or(StreamError::Codec {
                    frame,
                    source: CodecError::UnknownMode {
                        plane: p,
                        block: b,
                        mode: chunk[0],
                    },
                })?;
                let mut residuals = [0i16; 16];
                for (k, r) in residuals.iter_mut().enumerate() {
                    *r = i16::from_le_bytes([chunk[1 + 2 * k], chunk[2 + 2 * k]]);
                }
                plane.push(IntraBlock { mode, residuals });
            }
        }
        Ok(IntraPayload { width, height, planes })
    }

    fn check_trailing(&mut self) -> Result<(), StreamError> {
        let mut rest = Vec::new();
        self.source.read_to_end(&mut rest)?;
        if rest.is_empty() {
            Ok(())
        } else {
            Err(StreamError::TrailingBytes(rest.len() as u64))
        }
    }
}

impl<R: Read> Iterator for FrameReader<R> {
    type Item = Result<FrameFeatures, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        if self.next_index == self.header.frame_count {
            self.done = true;
            return match self.check_trailing() {
                Ok(()) => None,
                Err(e) => Some(Err(e)),
            };
        }
        let result = self.read_frame();
        match result {
            Ok(_) => self.next_index += 1,
            Err(_) => self.done = true,
        }
        Some(result)
    }
}

/// Reads an entire stream into memory.
pub fn read_all<R: Read>(source: R) -> Result<(StreamHeader, Option<RgbImage>, Vec<FrameFeatures>), StreamError> {
    let (header, bg, reader) = read_stream(source)?;
    let frames = reader.collect::<Result<Vec<_>, _>>()?;
    Ok((header, bg, frames))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intra::encode_iframe;
    use proptest::prelude::*;

    fn iframe(index: u32, w: u32, h: u32, rgb: [u8; 3]) -> FrameFeatures {
        FrameFeatures {
            frame_index: index,
            payload: FramePayload::I(encode_iframe(&RgbImage::filled(w, h, rgb)).unwrap()),
        }
    }

    fn pframe(index: u32, grid: Vec<MacroblockRecord>) -> FrameFeatures {
        FrameFeatures {
            frame_index: index,
            payload: FramePayload::P(grid),
        }
    }

    fn to_bytes(h: &StreamHeader, bg: Option<&RgbImage>, frames: &[FrameFeatures]) -> Vec<u8> {
        let mut out = Vec::new();
        let n = write_stream(h, bg, frames, &mut out).unwrap();
        assert_eq!(n as usize, out.len());
        out
    }

    #[test]
    fn single_iframe_round_trip() {
        let h = StreamHeader::new(16, 16, 30, 8, 1);
        let frames = vec![iframe(0, 16, 16, [1, 2, 3])];
        let bytes = to_bytes(&h, None, &frames);
        let (h2, bg, frames2) = read_all(bytes.as_slice()).unwrap();
        assert_eq!(h2, h);
        assert!(bg.is_none());
        assert_eq!(frames2, frames);
    }

    #[test]
    fn header_layout_is_little_endian() {
        let h = StreamHeader::new(320, 240, 30, 8, 1);
        let mut out = Vec::new();
        write_stream(&h, None, &[iframe(0, 320, 240, [0, 0, 0])], &mut out).unwrap();
        assert_eq!(&out[..4], b"MBFS");
        assert_eq!(&out[4..6], &[1, 0]);
        assert_eq!(&out[6..8], &[0x40, 0x01]);
        assert_eq!(&out[8..10], &[0xf0, 0x00]);
        assert_eq!(out[10], 30);
        assert_eq!(out[11], 8);
        assert_eq!(&out[12..16], &[1, 0, 0, 0]);
        assert_eq!(&out[16..18], &[0, 0]);
        assert_eq!(out[18], b'I');
    }

    #[test]
    fn p_frame_macroblock_encoding() {
        let h = StreamHeader::new(32, 16, 30, 2, 2);
        let grid = vec![
            MacroblockRecord::SKIP,
            MacroblockRecord {
                skip: false,
                coeff_mask: 0x8001,
                mv_qpel: (-2, 3),
            },
        ];
        let frames = vec![iframe(0, 32, 16, [0, 0, 0]), pframe(1, grid)];
        let bytes = to_bytes(&h, None, &frames);
        let tail = &bytes[bytes.len() - 13..];
        assert_eq!(tail, &[b'P', 1, 0, 0, 0, 0x01, 0x00, 0x01, 0x80, 0xfe, 0xff, 0x03, 0x00]);
    }

    #[test]
    fn full_size_gop_structure_accepted() {
        let h = StreamHeader::new(320, 240, 30, 8, 240).with_background();
        let bg = RgbImage::filled(320, 240, [9, 9, 9]);
        let payload = encode_iframe(&bg).unwrap();
        let frames: Vec<_> = (0..240)
            .map(|i| {
                if i % 8 == 0 {
                    FrameFeatures {
                        frame_index: i,
                        payload: FramePayload::I(payload.clone()),
                    }
                } else {
                    pframe(i, vec![MacroblockRecord::SKIP; 300])
                }
            })
            .collect();
        let bytes = to_bytes(&h, Some(&bg), &frames);
        let (_, bg2, reader) = read_stream(bytes.as_slice()).unwrap();
        assert_eq!(bg2.as_ref(), Some(&bg));
        let kinds: Vec<FrameKind> = reader.map(|f| f.unwrap().kind()).collect();
        assert_eq!(kinds.len(), 240);
        assert_eq!(kinds.iter().filter(|k| **k == FrameKind::I).count(), 30);
        assert_eq!(&kinds[..9], &[
            FrameKind::I,
            FrameKind::P,
            FrameKind::P,
            FrameKind::P,
            FrameKind::P,
            FrameKind::P,
            FrameKind::P,
            FrameKind::P,
            FrameKind::I
        ]);
    }

    #[test]
    fn iframe_off_gop_boundary_rejected() {
        let h = StreamHeader::new(16, 16, 30, 8, 4);
        let mut frames = vec![iframe(0, 16, 16, [0, 0, 0])];
        frames.push(pframe(1, vec![MacroblockRecord::SKIP]));
        frames.push(pframe(2, vec![MacroblockRecord::SKIP]));
        frames.push(iframe(3, 16, 16, [0, 0, 0]));
        let err = write_stream(&h, None, &frames, Vec::new()).unwrap_err();
        assert!(matches!(
            err,
            StreamError::KindMismatch {
                frame: 3,
                expected: FrameKind::P,
                found: FrameKind::I
            }
        ));
    }

    #[test]
    fn frame_zero_must_be_intra() {
        let h = StreamHeader::new(16, 16, 30, 8, 1);
        let err = write_stream(&h, None, &[pframe(0, vec![MacroblockRecord::SKIP])], Vec::new()).unwrap_err();
        assert!(matches!(err, StreamError::KindMismatch { frame: 0, .. }));
    }

    #[test]
    fn grid_dimension_mismatch() {
        let h = StreamHeader::new(32, 16, 30, 8, 2);
        let frames = vec![iframe(0, 32, 16, [0, 0, 0]), pframe(1, vec![MacroblockRecord::SKIP])];
        let err = write_stream(&h, None, &frames, Vec::new()).unwrap_err();
        assert!(matches!(err, StreamError::DimensionMismatch { frame: 1, .. }));
    }

    #[test]
    fn skip_with_coefficients_is_invariant_violation() {
        let h = StreamHeader::new(16, 16, 30, 8, 2);
        let bad = MacroblockRecord {
            skip: true,
            coeff_mask: 0x0001,
            mv_qpel: (0, 0),
        };
        let frames = vec![iframe(0, 16, 16, [0, 0, 0]), pframe(1, vec![bad])];
        let err = write_stream(&h, None, &frames, Vec::new()).unwrap_err();
        assert!(matches!(err, StreamError::InvariantViolation { frame: 1, .. }));

        // on the wire: a skip flag with a reserved bit claiming coefficients
        let good = vec![iframe(0, 16, 16, [0, 0, 0]), pframe(1, vec![MacroblockRecord::SKIP])];
        let mut bytes = to_bytes(&h, None, &good);
        let last = bytes.len() - 1;
        bytes[last] = 0x03;
        let (_, _, mut reader) = read_stream(bytes.as_slice()).unwrap();
        reader.next().unwrap().unwrap();
        let err = reader.next().unwrap().unwrap_err();
        assert!(matches!(err, StreamError::InvariantViolation { frame: 1, .. }));
        assert!(reader.next().is_none());
    }

    #[test]
    fn truncation_names_frame() {
        let h = StreamHeader::new(16, 16, 30, 4, 3);
        let frames = vec![
            iframe(0, 16, 16, [0, 0, 0]),
            pframe(1, vec![MacroblockRecord::coded(3)]),
            pframe(2, vec![MacroblockRecord::coded(7)]),
        ];
        let bytes = to_bytes(&h, None, &frames);
        let cut = &bytes[..bytes.len() - 3];
        let (_, _, reader) = read_stream(cut).unwrap();
        let results: Vec<_> = reader.collect();
        assert_eq!(results.len(), 3);
        match results[2].as_ref().unwrap_err() {
            StreamError::Truncated { context } => assert!(context.contains("frame 2"), "{context}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_trailing_bytes() {
        assert!(matches!(read_stream(&b"MBFX0000000000000000"[..]), Err(StreamError::BadMagic(_))));
        let h = StreamHeader::new(16, 16, 30, 8, 1);
        let mut bytes = to_bytes(&h, None, &[iframe(0, 16, 16, [5, 5, 5])]);
        bytes.push(0);
        let (_, _, reader) = read_stream(bytes.as_slice()).unwrap();
        let r: Vec<_> = reader.collect();
        assert!(matches!(r.last().unwrap(), Err(StreamError::TrailingBytes(1))));
    }

    #[test]
    fn invalid_headers() {
        let mut h = StreamHeader::new(20, 16, 30, 8, 1);
        assert!(h.validate().is_err());
        h.width_px = 16;
        h.gop_len = 11;
        assert!(h.validate().is_err());
        h.gop_len = 1;
        assert!(h.validate().is_err());
        h.gop_len = 10;
        h.frame_count = 0;
        assert!(h.validate().is_err());
    }

    fn arb_record() -> impl Strategy<Value = MacroblockRecord> {
        prop_oneof![
            Just(MacroblockRecord::SKIP),
            (any::<u16>(), any::<i16>(), any::<i16>()).prop_map(|(m, x, y)| MacroblockRecord {
                skip: false,
                coeff_mask: m,
                mv_qpel: (x, y),
            }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn round_trip_is_identity(
            gop in 2u8..=10,
            n in 1u32..14,
            cols in 1u16..4,
            rows in 1u16..3,
            records in proptest::collection::vec(arb_record(), 12 * 14),
            with_bg in any::<bool>(),
            shade in any::<u8>(),
        ) {
            let (w, h) = (cols * 16, rows * 16);
            let mut header = StreamHeader::new(w, h, 25, gop, n);
            let bg = RgbImage::filled(w as u32, h as u32, [shade, 1, 2]);
            if with_bg { header = header.with_background(); }
            let per = (cols * rows) as usize;
            let frames: Vec<_> = (0..n).map(|i| {
                if i % gop as u32 == 0 {
                    iframe(i, w as u32, h as u32, [shade, shade / 2, 7])
                } else {
                    let start = (i as usize * per) % (records.len() - per);
                    pframe(i, records[start..start + per].to_vec())
                }
            }).collect();
            let mut bytes = Vec::new();
            write_stream(&header, with_bg.then_some(&bg), &frames, &mut bytes).unwrap();
            let (h2, bg2, frames2) = read_all(bytes.as_slice()).unwrap();
            prop_assert_eq!(h2, header);
            prop_assert_eq!(bg2, with_bg.then_some(bg));
            prop_assert_eq!(frames2, frames);
        }
    }
}
