//! Trajectory scoring against synthetic ground truth.
//!
//! Each frame, Real track records are matched one-to-one to the visible,
//! unoccluded ground-truth objects greedily by ascending centre distance.
//! Occluded ground truth and Occluded records take no part.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::mbfs::{FrameKind, StreamHeader};
use crate::pipeline::{TrackOutputRecord, TrackState};
use crate::synth::GroundTruthRecord;

/// Intersection over union of two centre/size boxes.
pub fn iou(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> f64 {
    let bounds = |(cx, cy, h, w): (f64, f64, f64, f64)| (cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0);
    let (ax0, ay0, ax1, ay1) = bounds(a);
    let (bx0, by0, bx1, by1) = bounds(b);
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    let union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectScore {
    pub object_id: u64,
    pub matched_frames: u32,
    pub mean_center_error: Option<f64>,
    pub max_center_error: Option<f64>,
    pub mean_iou: Option<f64>,
    /// Frames from first appearance to the first matched Real record.
    pub detection_latency_frames: Option<u32>,
    /// The same span counted in P-frames.
    pub detection_latency_p_frames: Option<u32>,
    /// Distinct track ids matched to this object.
    pub track_ids: Vec<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub objects: Vec<ObjectScore>,
    pub id_switch_count: u32,
    /// Real track ids never matched to any ground-truth object.
    pub unmatched_track_ids: Vec<u64>,
}

#[derive(Default)]
struct Acc {
    first_seen: Option<u32>,
    first_hit: Option<u32>,
    n: u32,
    err_sum: f64,
    err_max: f64,
    iou_sum: f64,
    last_track: Option<u64>,
    tracks: Vec<u64>,
}

pub fn evaluate(header: &StreamHeader, records: &[TrackOutputRecord], truth: &[GroundTruthRecord]) -> Evaluation {
    let mut tracks_by_frame: BTreeMap<u32, Vec<&TrackOutputRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.state == TrackState::Real) {
        tracks_by_frame.entry(r.frame_index).or_default().push(r);
    }
    let mut truth_by_frame: BTreeMap<u32, Vec<&GroundTruthRecord>> = BTreeMap::new();
    for g in truth {
        truth_by_frame.entry(g.frame_index).or_default().push(g);
    }

    let mut acc: BTreeMap<u64, Acc> = BTreeMap::new();
    let mut matched_tracks = std::collections::BTreeSet::new();
    let mut switches = 0;
    for (&frame, gts) in &truth_by_frame {
        for g in gts {
            acc.entry(g.object_id).or_default().first_seen.get_or_insert(frame);
        }
        let visible: Vec<&&GroundTruthRecord> = gts.iter().filter(|g| !g.occluded).collect();
        let Some(trs) = tracks_by_frame.get(&frame) else { continue };
        let mut pairs: Vec<(f64, u64, u64, usize, usize)> = Vec::new();
        for (gi, g) in visible.iter().enumerate() {
            for (ti, t) in trs.iter().enumerate() {
                let d = (g.cx - t.cx).hypot(g.cy - t.cy);
                pairs.push((d, g.object_id, t.object_id, gi, ti));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut g_used = vec![false; visible.len()];
        let mut t_used = vec![false; trs.len()];
        for (d, gid, tid, gi, ti) in pairs {
            if g_used[gi] || t_used[ti] {
                continue;
            }
            g_used[gi] = true;
            t_used[ti] = true;
            matched_tracks.insert(tid);
            let (g, t) = (visible[gi], trs[ti]);
            let a = acc.get_mut(&gid).unwrap();
            a.first_hit.get_or_insert(frame);
            a.n += 1;
            a.err_sum += d;
            a.err_max = a.err_max.max(d);
            a.iou_sum += iou((g.cx, g.cy, g.h, g.w), (t.cx, t.cy, t.h, t.w));
            if a.last_track.is_some_and(|l| l != tid) {
                switches += 1;
            }
            a.last_track = Some(tid);
            if !a.tracks.contains(&tid) {
                a.tracks.push(tid);
            }
        }
    }

    let p_frames_between = |from: u32, to: u32| (from + 1..=to).filter(|&f| header.kind_of(f) == FrameKind::P).count() as u32;
    let objects = acc
        .into_iter()
        .map(|(object_id, a)| {
            let n = a.n as f64;
            let latency = a.first_seen.zip(a.first_hit);
            ObjectScore {
                object_id,
                matched_frames: a.n,
                mean_center_error: (a.n > 0).then(|| a.err_sum / n),
                max_center_error: (a.n > 0).then_some(a.err_max),
                mean_iou: (a.n > 0).then(|| a.iou_sum / n),
                detection_latency_frames: latency.map(|(s, h)| h - s),
                detection_latency_p_frames: latency.map(|(s, h)| p_frames_between(s, h)),
                track_ids: a.tracks,
            }
        })
        .collect();
    let mut unmatched: Vec<u64> = records
        .iter()
        .filter(|r| r.state == TrackState::Real && !matched_tracks.contains(&r.object_id))
        .map(|r| r.object_id)
        .collect();
    unmatched.sort();
    unmatched.dedup();
    Evaluation {
        objects,
        id_switch_count: switches,
        unmatched_track_ids: unmatched,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(frame: u32, id: u64, cx: f64, cy: f64) -> TrackOutputRecord {
        TrackOutputRecord {
            frame_index: frame,
            object_id: id,
            cx,
            cy,
            h: 10.0,
            w: 10.0,
            state: TrackState::Real,
            refined: true,
        }
    }

    fn gt(frame: u32, id: u64, cx: f64, cy: f64) -> GroundTruthRecord {
        GroundTruthRecord {
            frame_index: frame,
            object_id: id,
            cx,
            cy,
            h: 10.0,
            w: 10.0,
            occluded: false,
        }
    }

    fn header() -> StreamHeader {
        StreamHeader::new(64, 64, 30, 8, 100)
    }

    #[test]
    fn iou_of_half_shifted_boxes() {
        // corner form (0,0,10,10) and (5,0,10,10)
        assert!((iou((5.0, 5.0, 10.0, 10.0), (10.0, 5.0, 10.0, 10.0)) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(iou((5.0, 5.0, 10.0, 10.0), (50.0, 5.0, 10.0, 10.0)), 0.0);
    }

    #[test]
    fn perfect_tracks_score_perfectly() {
        let truth: Vec<_> = (0..20).flat_map(|f| [gt(f, 1, f as f64, 10.0), gt(f, 2, 40.0, 40.0)]).collect();
        let recs: Vec<_> = truth.iter().map(|g| rec(g.frame_index, g.object_id + 10, g.cx, g.cy)).collect();
        let e = evaluate(&header(), &recs, &truth);
        assert_eq!(e.id_switch_count, 0);
        for o in &e.objects {
            assert_eq!(o.mean_center_error, Some(0.0));
            assert_eq!(o.mean_iou, Some(1.0));
            assert_eq!(o.detection_latency_frames, Some(0));
        }
        assert!(e.unmatched_track_ids.is_empty());
    }

    #[test]
    fn latency_and_switches() {
        let truth: Vec<_> = (0..20).map(|f| gt(f, 1, 30.0, 30.0)).collect();
        let mut recs: Vec<_> = (9..15).map(|f| rec(f, 5, 31.0, 30.0)).collect();
        recs.extend((15..20).map(|f| rec(f, 6, 30.0, 30.0)));
        let e = evaluate(&header(), &recs, &truth);
        let o = &e.objects[0];
        assert_eq!(o.detection_latency_frames, Some(9));
        // frames 1..=9 except the I-frame at 8
        assert_eq!(o.detection_latency_p_frames, Some(8));
        assert_eq!(e.id_switch_count, 1);
        assert_eq!(o.track_ids, vec![5, 6]);
        assert_eq!(o.max_center_error, Some(1.0));
    }

    #[test]
    fn occluded_truth_and_records_are_ignored() {
        let mut g = gt(3, 1, 30.0, 30.0);
        g.occluded = true;
        let mut r = rec(3, 9, 30.0, 30.0);
        let e = evaluate(&header(), std::slice::from_ref(&r), std::slice::from_ref(&g));
        assert_eq!(e.objects[0].matched_frames, 0);
        r.state = TrackState::Occluded;
        g.occluded = false;
        let e = evaluate(&header(), &[r], &[g]);
        assert_eq!(e.objects[0].matched_frames, 0);
    }

    #[test]
    fn greedy_matching_prefers_nearest_pairs() {
        let truth = [gt(1, 1, 0.0, 0.0), gt(1, 2, 10.0, 0.0)];
        let recs = [rec(1, 7, 9.0, 0.0), rec(1, 8, 2.0, 0.0)];
        let e = evaluate(&header(), &recs, &truth);
        assert_eq!(e.objects[0].track_ids, vec![8]);
        assert_eq!(e.objects[1].track_ids, vec![7]);
    }
}
