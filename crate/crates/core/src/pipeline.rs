//! End-to-end tracking over a feature stream.
//!
//! P-frames drive the entity state machine; each I-frame refines the real
//! objects, rewrites the buffered P-frame records of the GOP it closes and
//! resolves pending identities. Records are held back until the I-frame that
//! terminates their GOP has been processed (and longer while an identity is
//! unresolved, so that a whole track is emitted under one id).

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Read, Write};
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::eval::{evaluate, Evaluation};
use crate::events::Event;
use crate::image::{PixelRect, RgbImage};
use crate::intra::{decode_full, CodecError, IntraPayload};
use crate::mbfs::{read_stream, FrameFeatures, FramePayload, StreamError, StreamHeader};
use crate::occlusion::HueHistogram;
use crate::psmf::{cluster_grid, region_bounds, spatial_filter, EntityId, EntityTracker, Label, PsmfConfig, Region};
use crate::refine::{
    predict_blob, refine_gop, refine_iframe, BlobFeature, ObjectGop, PixelSource, RefineConfig, RefineError, RefineTimings,
};
use crate::synth::GroundTruthRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackState {
    Candidate,
    Real,
    Occluded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackOutputRecord {
    pub frame_index: u32,
    pub object_id: u64,
    pub cx: f64,
    pub cy: f64,
    pub h: f64,
    pub w: f64,
    pub state: TrackState,
    pub refined: bool,
}

impl TrackOutputRecord {
    pub fn blob(&self) -> BlobFeature {
        BlobFeature::new(self.cx, self.cy, self.h, self.w)
    }

    fn set_blob(&mut self, b: BlobFeature) {
        self.cx = b.cx;
        self.cy = b.cy;
        self.h = b.h;
        self.w = b.w;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub psmf: PsmfConfig,
    pub refine: RefineConfig,
    /// Decode whole I-frames instead of the predicted regions.
    pub full_decode: bool,
    /// Emit every record as soon as it exists, unrefined.
    pub live: bool,
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackError> {
        self.psmf.validate().map_err(TrackError::Config)?;
        self.refine.validate().map_err(|e| TrackError::Config(e.to_string()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrackError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error("frame {frame}: {source}")]
    Frame { frame: u32, source: StreamError },
    #[error("frame {frame}: {source}")]
    Refine { frame: u32, source: RefineError },
    #[error("frame {frame}: {source}")]
    Codec { frame: u32, source: CodecError },
    #[error("frame {found} arrived where frame {expected} was expected")]
    OutOfOrder { expected: u32, found: u32 },
}

/// Wall-clock seconds per stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub parse: f64,
    pub psmf: f64,
    pub partial_decode: f64,
    pub subtract: f64,
    pub interpolate: f64,
    pub occlusion: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub frame_count: u32,
    pub total_seconds: f64,
    pub frames_per_second: f64,
    pub stages: StageTimings,
    pub blocks_decoded: u64,
    /// Blocks of every I-frame after the first.
    pub blocks_total: u64,
    pub blocks_decoded_ratio: f64,
    /// Summed decode-region area over the area of every I-frame after the first.
    pub decode_area_ratio: f64,
    /// Distinct ids carried by Real records.
    pub real_track_ids: Vec<u64>,
    pub evaluation: Option<Evaluation>,
}

#[derive(Default)]
struct Clock {
    psmf: Duration,
    refine: RefineTimings,
    occlusion: Duration,
}

/// Streaming tracker: feed frames in order, collect emitted records.
pub struct Tracker {
    config: TrackerConfig,
    header: StreamHeader,
    background: Option<RgbImage>,
    entities: EntityTracker,
    buffer: Vec<TrackOutputRecord>,
    /// PSMF blobs of the last two GOPs' P-frames.
    history: BTreeMap<EntityId, Vec<(u32, BlobFeature)>>,
    /// Refined blob of the most recent I-frame.
    anchors: BTreeMap<EntityId, (u32, BlobFeature)>,
    prev_iframe: Option<(u32, IntraPayload, Option<RgbImage>)>,
    events: Vec<Event>,
    blocks_decoded: u64,
    blocks_total: u64,
    decode_area: u64,
    frame_area_total: u64,
    next_frame: u32,
    clock: Clock,
}

fn psmf_blob(region: &Region) -> Option<BlobFeature> {
    let (x0, y0, x1, y1) = region_bounds(region)?;
    Some(BlobFeature::from_rect(PixelRect::new(x0, y0, x1 - x0, y1 - y0)))
}

impl Tracker {
    pub fn new(header: StreamHeader, background: Option<RgbImage>, config: TrackerConfig) -> Result<Self, TrackError> {
        config.validate()?;
        header.validate()?;
        Ok(Tracker {
            entities: EntityTracker::new(config.psmf.clone()),
            config,
            header,
            background,
            buffer: Vec::new(),
            history: BTreeMap::new(),
            anchors: BTreeMap::new(),
            prev_iframe: None,
            events: Vec::new(),
            blocks_decoded: 0,
            blocks_total: 0,
            decode_area: 0,
            frame_area_total: 0,
            next_frame: 0,
            clock: Clock::default(),
        })
    }

    pub fn entities(&self) -> &EntityTracker {
        &self.entities
    }

    pub fn take_events(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.events)
    }

    /// Processes one frame and returns the records released by it.
    pub fn push(&mut self, frame: &FrameFeatures) -> Result<Vec<TrackOutputRecord>, TrackError> {
        if frame.frame_index != self.next_frame {
            return Err(TrackError::OutOfOrder {
                expected: self.next_frame,
                found: frame.frame_index,
            });
        }
        self.next_frame += 1;
        match &frame.payload {
            FramePayload::P(grid) => Ok(self.p_frame(frame.frame_index, grid)),
            FramePayload::I(payload) => self.i_frame(frame.frame_index, payload),
        }
    }

    /// Releases everything still buffered.
    pub fn finish(&mut self) -> Vec<TrackOutputRecord> {
        std::mem::take(&mut self.buffer)
    }

    fn state_of(label: Label, occlusion: bool) -> TrackState {
        match label {
            Label::Real => TrackState::Real,
            Label::Occluded if occlusion => TrackState::Occluded,
            _ => TrackState::Candidate,
        }
    }

    fn release(&mut self, recs: Vec<TrackOutputRecord>) -> Vec<TrackOutputRecord> {
        if self.config.live {
            recs
        } else {
            self.buffer.extend(recs);
            Vec::new()
        }
    }

    fn p_frame(&mut self, f: u32, grid: &[crate::mbfs::MacroblockRecord]) -> Vec<TrackOutputRecord> {
        let t = Instant::now();
        let groups = spatial_filter(cluster_grid(f, grid, self.header.mb_cols()), self.config.psmf.enable_spatial_filter);
        let evs = self.entities.step(f, &groups);
        self.clock.psmf += t.elapsed();
        self.events.extend(evs);

        let mut recs = Vec::new();
        for e in self.entities.visible() {
            let Some(blob) = psmf_blob(&e.region) else { continue };
            self.history.entry(e.id).or_default().push((f, blob));
            let mut r = TrackOutputRecord {
                frame_index: f,
                object_id: e.id.0,
                cx: 0.0,
                cy: 0.0,
                h: 0.0,
                w: 0.0,
                state: Self::state_of(e.label, e.is_occlusion()),
                refined: false,
            };
            r.set_blob(blob);
            recs.push(r);
        }
        self.release(recs)
    }

    fn gop_blobs(&self, id: EntityId, from: u32, to: u32) -> Vec<(u32, BlobFeature)> {
        self.history
            .get(&id)
            .map(|h| h.iter().copied().filter(|(f, _)| *f > from && *f < to).collect())
            .unwrap_or_default()
    }

    fn i_frame(&mut self, i: u32, payload: &IntraPayload) -> Result<Vec<TrackOutputRecord>, TrackError> {
        let codec = |source| TrackError::Codec { frame: i, source };
        let refine_err = |source| TrackError::Refine { frame: i, source };
        let n = self.header.gop_len as u32;

        let full = if self.config.full_decode || self.background.is_none() {
            let t = Instant::now();
            let img = decode_full(payload).map_err(codec)?;
            self.clock.refine.decode += t.elapsed();
            Some(img)
        } else {
            None
        };
        if self.background.is_none() {
            // no background chunk: the first frame is taken as empty scene
            self.background = full.clone();
        }
        let full = if self.config.full_decode { full } else { None };
        let background = self.background.clone().expect("background set above");

        let mut iblobs: BTreeMap<EntityId, BlobFeature> = BTreeMap::new();
        if i > 0 {
            let per_frame = payload.blocks_per_plane() as u64;
            self.blocks_total += per_frame;
            self.frame_area_total += payload.width as u64 * payload.height as u64;
            if self.config.full_decode {
                self.blocks_decoded += per_frame;
            }

            let ids: Vec<EntityId> = self.entities.visible().filter(|e| e.is_real_like()).map(|e| e.id).collect();
            let mut objects = Vec::with_capacity(ids.len());
            for id in ids {
                let p_blobs = self.gop_blobs(id, i.saturating_sub(n), i);
                let anchor = match self.anchors.get(&id).filter(|a| a.0 + n == i) {
                    Some(a) => Some(*a),
                    None => self.lazy_anchor(id, i, &background).map_err(refine_err)?,
                };
                if anchor.is_none() && !p_blobs.is_empty() {
                    self.events.push(Event::UnanchoredInterpolation { frame: i, entity: id });
                }
                objects.push(ObjectGop { id, p_blobs, anchor });
            }
            let source = match &full {
                Some(img) => PixelSource::Full(img),
                None => PixelSource::Partial,
            };
            let (results, timings) = refine_gop(i, &objects, payload, &background, source, &self.config.refine).map_err(refine_err)?;
            self.clock.refine.add(timings);

            let t = Instant::now();
            let mut posteriors: BTreeMap<EntityId, HueHistogram> = BTreeMap::new();
            for r in results {
                let Some(ifr) = &r.iframe else { continue };
                if !self.config.full_decode {
                    self.blocks_decoded += ifr.stats.blocks_decoded;
                }
                self.decode_area += ifr.decode_rect.area();
                match ifr.blob() {
                    Some(b) => {
                        self.anchors.insert(r.id, (i, b));
                        iblobs.insert(r.id, b);
                        if let (Some(hue), Some(e)) = (&ifr.hue, self.entities.entity_mut(r.id)) {
                            if e.label == Label::Real {
                                e.prior_hue = Some(hue.clone());
                                posteriors.insert(r.id, hue.clone());
                            }
                        }
                    }
                    None => {
                        self.anchors.remove(&r.id);
                        self.events.push(Event::SubtractionEmpty { frame: i, entity: r.id });
                    }
                }
                if let Some(rewritten) = r.p_blobs {
                    let by_frame: BTreeMap<u32, BlobFeature> = rewritten.into_iter().collect();
                    for rec in self.buffer.iter_mut().filter(|x| x.object_id == r.id.0) {
                        if let Some(b) = by_frame.get(&rec.frame_index) {
                            rec.set_blob(*b);
                            rec.refined = true;
                        }
                    }
                }
            }

            let (transfers, evs) = self.entities.resolve_identities(i, &posteriors);
            self.events.extend(evs);
            for tr in transfers {
                for rec in self.buffer.iter_mut().filter(|x| x.object_id == tr.fragment.0) {
                    rec.object_id = tr.member.0;
                }
                if let Some(h) = self.history.remove(&tr.fragment) {
                    self.history.insert(tr.member, h);
                }
                match self.anchors.remove(&tr.fragment) {
                    Some(a) => self.anchors.insert(tr.member, a),
                    None => self.anchors.remove(&tr.member),
                };
                if let Some(b) = iblobs.remove(&tr.fragment) {
                    iblobs.insert(tr.member, b);
                }
            }
            self.clock.occlusion += t.elapsed();
        }

        let mut recs = Vec::new();
        for e in self.entities.visible() {
            let (blob, refined) = match iblobs.get(&e.id) {
                Some(b) => (Some(*b), true),
                None => {
                    let gop: Vec<BlobFeature> = self.gop_blobs(e.id, i.saturating_sub(n), i).into_iter().map(|(_, b)| b).collect();
                    (predict_blob(&gop).or_else(|| psmf_blob(&e.region)), false)
                }
            };
            let Some(blob) = blob else { continue };
            let mut r = TrackOutputRecord {
                frame_index: i,
                object_id: e.id.0,
                cx: 0.0,
                cy: 0.0,
                h: 0.0,
                w: 0.0,
                state: Self::state_of(e.label, e.is_occlusion()),
                refined,
            };
            r.set_blob(blob);
            recs.push(r);
        }

        let mut out = self.release(recs);
        if !self.config.live && self.entities.pending_identities().is_empty() {
            let (done, keep): (Vec<_>, Vec<_>) = std::mem::take(&mut self.buffer).into_iter().partition(|r| r.frame_index < i);
            self.buffer = keep;
            out = done;
        }

        self.prev_iframe = Some((i, payload.clone(), full));
        let entities = &self.entities;
        self.history.retain(|id, h| {
            h.retain(|(f, _)| *f + n > i);
            !h.is_empty() && entities.entity(*id).is_some_and(|e| !e.retired)
        });
        self.anchors.retain(|id, _| entities.entity(*id).is_some_and(|e| !e.retired));
        Ok(out)
    }

    /// Refines the previous I-frame for an object that has no anchor there
    /// yet, using its P-frame blobs from the GOP before it.
    fn lazy_anchor(&mut self, id: EntityId, i: u32, background: &RgbImage) -> Result<Option<(u32, BlobFeature)>, RefineError> {
        let n = self.header.gop_len as u32;
        let Some((a, _, _)) = &self.prev_iframe else { return Ok(None) };
        let a = *a;
        if a + n != i {
            return Ok(None);
        }
        let blobs: Vec<BlobFeature> = self.gop_blobs(id, a.saturating_sub(n), a).into_iter().map(|(_, b)| b).collect();
        if blobs.is_empty() {
            return Ok(None);
        }
        let (_, payload, full) = self.prev_iframe.as_ref().unwrap();
        let source = match full {
            Some(img) => PixelSource::Full(img),
            None => PixelSource::Partial,
        };
        let res = refine_iframe(&blobs, payload, background, source, &self.config.refine, &mut self.clock.refine)?;
        let Some(res) = res else { return Ok(None) };
        if !self.config.full_decode {
            self.blocks_decoded += res.stats.blocks_decoded;
        }
        self.decode_area += res.decode_rect.area();
        Ok(res.blob().map(|b| (a, b)))
    }
}

pub struct RunOutput {
    pub header: StreamHeader,
    pub records: Vec<TrackOutputRecord>,
    pub events: Vec<Event>,
    pub metrics: RunMetrics,
}

/// Runs the tracker over a complete stream held in `source`.
pub fn run_tracker<R: Read>(
    source: R,
    config: &TrackerConfig,
    truth: Option<&[GroundTruthRecord]>,
) -> Result<RunOutput, TrackError> {
    let start = Instant::now();
    let mut parse = Duration::ZERO;
    let t = Instant::now();
    let (header, background, mut reader) = read_stream(source)?;
    parse += t.elapsed();
    let mut tracker = Tracker::new(header, background, config.clone())?;
    let mut records = Vec::new();
    let mut events = Vec::new();
    let mut expected = 0u32;
    loop {
        let t = Instant::now();
        let next = reader.next();
        parse += t.elapsed();
        let frame = match next {
            None => break,
            Some(Ok(f)) => f,
            Some(Err(source)) => return Err(TrackError::Frame { frame: expected, source }),
        };
        expected += 1;
        records.extend(tracker.push(&frame)?);
        events.extend(tracker.take_events());
    }
    records.extend(tracker.finish());
    events.extend(tracker.take_events());
    let total = start.elapsed().as_secs_f64();

    let real_track_ids: Vec<u64> = records
        .iter()
        .filter(|r| r.state == TrackState::Real)
        .map(|r| r.object_id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let c = &tracker.clock;
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let metrics = RunMetrics {
        frame_count: expected,
        total_seconds: total,
        frames_per_second: if total > 0.0 { expected as f64 / total } else { 0.0 },
        stages: StageTimings {
            parse: parse.as_secs_f64(),
            psmf: c.psmf.as_secs_f64(),
            partial_decode: c.refine.decode.as_secs_f64(),
            subtract: c.refine.subtract.as_secs_f64(),
            interpolate: c.refine.interpolate.as_secs_f64(),
            occlusion: c.occlusion.as_secs_f64(),
        },
        blocks_decoded: tracker.blocks_decoded,
        blocks_total: tracker.blocks_total,
        blocks_decoded_ratio: ratio(tracker.blocks_decoded, tracker.blocks_total),
        decode_area_ratio: ratio(tracker.decode_area, tracker.frame_area_total),
        real_track_ids,
        evaluation: truth.map(|gt| evaluate(&header, &records, gt)),
    };
    Ok(RunOutput {
        header,
        records,
        events,
        metrics,
    })
}

/// Writes one JSON object per line.
pub fn write_jsonl<W: Write, T: Serialize>(mut sink: W, items: &[T]) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut sink, item)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()
}

/// Reads one JSON object per non-empty line.
pub fn read_jsonl<R: BufRead, T: DeserializeOwned>(source: R) -> std::io::Result<Vec<T>> {
    let mut out = Vec::new();
    for (n, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1)))?;
        out.push(item);
    }
    Ok(out)
}
