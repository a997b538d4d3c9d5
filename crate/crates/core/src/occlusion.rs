//! Occlusion as region collision, disocclusion as region split, and identity
//! recovery from hue histograms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::image::{BinaryMask, PixelTile};
use crate::psmf::{intersects, BlockGroup, Entity, EntityId, Label};

pub const HUE_BINS: usize = 64;

/// Normalized 64-bin hue distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HueHistogram {
    pub bins: Vec<f64>,
    pub valid_pixel_count: u64,
}

impl HueHistogram {
    pub fn empty() -> Self {
        HueHistogram {
            bins: vec![0.0; HUE_BINS],
            valid_pixel_count: 0,
        }
    }

    /// Builds a normalized histogram from hues in degrees.
    pub fn from_hues(hues: impl IntoIterator<Item = f64>) -> Self {
        let mut h = Self::empty();
        for hue in hues {
            h.bins[hue_bin(hue)] += 1.0;
            h.valid_pixel_count += 1;
        }
        if h.valid_pixel_count > 0 {
            let n = h.valid_pixel_count as f64;
            h.bins.iter_mut().for_each(|b| *b /= n);
        }
        h
    }

    /// Euclidean distance between bin vectors.
    pub fn distance(&self, other: &HueHistogram) -> f64 {
        self.bins
            .iter()
            .zip(&other.bins)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Hue in degrees, `[0, 360)`; `None` for gray pixels.
pub fn hue_degrees(rgb: [u8; 3]) -> Option<f64> {
    let [r, g, b] = rgb.map(|c| c as f64);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    if d == 0.0 {
        return None;
    }
    let h = if max == r {
        60.0 * ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    Some(if h >= 360.0 { h - 360.0 } else { h })
}

pub fn hue_bin(hue: f64) -> usize {
    ((hue / 360.0 * HUE_BINS as f64).floor() as usize).min(HUE_BINS - 1)
}

/// Hue histogram of the masked pixels of a tile. Gray pixels are skipped.
pub fn hue_histogram(tile: &PixelTile, mask: &BinaryMask) -> HueHistogram {
    debug_assert_eq!((mask.width, mask.height), (tile.rect.w, tile.rect.h));
    let mut hues = Vec::new();
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(x, y) {
                if let Some(h) = hue_degrees(tile.local(x, y)) {
                    hues.push(h);
                }
            }
        }
    }
    HueHistogram::from_hues(hues)
}

/// Real objects merged into one tracked region by a collision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcclusionGroup {
    pub id: EntityId,
    pub members: Vec<EntityId>,
    /// Hue histogram of each member from its last refined I-frame before the
    /// collision; `None` records a failed capture.
    pub prior_hues: BTreeMap<EntityId, Option<HueHistogram>>,
}

impl OcclusionGroup {
    pub fn add_member(&mut self, id: EntityId, prior: Option<HueHistogram>) {
        if !self.members.contains(&id) {
            self.members.push(id);
            self.members.sort();
        }
        self.prior_hues.insert(id, prior);
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CollisionEvent {
    /// Zero or one entity overlapped: ordinary succeeding region.
    None,
    /// Candidates are merged into `into` (the one real object, or the oldest candidate).
    Absorb { into: EntityId, absorbed: Vec<EntityId> },
    /// Fragments of one split region met again.
    Remerge { parent: EntityId, absorbed: Vec<EntityId> },
    /// Two or more real objects collided. `existing` is the occlusion entity
    /// that continues, if one took part; `reals` are the other real-like
    /// entities joining the group and `absorbed` the candidates.
    Occlusion {
        existing: Option<EntityId>,
        reals: Vec<EntityId>,
        absorbed: Vec<EntityId>,
    },
}

/// Decides how one active group overlapping several entities is resolved.
pub fn detect_collision(overlapped: &[&Entity]) -> CollisionEvent {
    if overlapped.len() <= 1 {
        return CollisionEvent::None;
    }
    let oldest = |v: &mut Vec<&Entity>| v.sort_by_key(|e| (e.seed_frame, e.id));
    let mut reals: Vec<&Entity> = overlapped.iter().copied().filter(|e| e.is_real_like()).collect();
    oldest(&mut reals);
    let candidates = |except: &[EntityId]| -> Vec<EntityId> {
        let mut v: Vec<EntityId> = overlapped
            .iter()
            .map(|e| e.id)
            .filter(|id| !except.contains(id))
            .collect();
        v.sort();
        v
    };

    match reals.len() {
        0 => {
            let mut parents: BTreeMap<EntityId, usize> = BTreeMap::new();
            for e in overlapped {
                if let Some(p) = e.split_parent {
                    *parents.entry(p).or_default() += 1;
                }
            }
            if let Some((&parent, _)) = parents.iter().find(|(_, n)| **n >= 2) {
                return CollisionEvent::Remerge {
                    parent,
                    absorbed: candidates(&[]),
                };
            }
            let mut all: Vec<&Entity> = overlapped.to_vec();
            oldest(&mut all);
            let into = all[0].id;
            CollisionEvent::Absorb {
                into,
                absorbed: candidates(&[into]),
            }
        }
        1 => {
            let into = reals[0].id;
            CollisionEvent::Absorb {
                into,
                absorbed: candidates(&[into]),
            }
        }
        _ => {
            let existing = reals.iter().find(|e| e.is_occlusion()).map(|e| e.id);
            let real_ids: Vec<EntityId> = reals.iter().map(|e| e.id).filter(|id| Some(*id) != existing).collect();
            let mut except = real_ids.clone();
            except.extend(existing);
            CollisionEvent::Occlusion {
                existing,
                reals: real_ids,
                absorbed: candidates(&except),
            }
        }
    }
}

/// Region split: two or more active groups overlap an occlusion entity's
/// previous region. Returns the indices of the overlapping groups.
pub fn detect_split(occlusion: &Entity, groups: &[BlockGroup]) -> Option<Vec<usize>> {
    if !occlusion.is_occlusion() {
        return None;
    }
    let hits: Vec<usize> = groups
        .iter()
        .enumerate()
        .filter(|(_, g)| intersects(&g.members, &occlusion.region))
        .map(|(i, _)| i)
        .collect();
    (hits.len() >= 2).then_some(hits)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SplitResolution {
    /// Some fragment is still in its observation period.
    Pending,
    /// Two or more fragments became real objects.
    Disocclusion(Vec<EntityId>),
    /// Exactly one fragment survived; it carries the whole group on.
    Single(EntityId),
    /// No fragment survived.
    Vanished,
}

pub fn resolve_split(fragments: &[&Entity]) -> SplitResolution {
    if fragments.iter().any(|f| !f.retired && f.label == Label::Candidate) {
        return SplitResolution::Pending;
    }
    let mut reals: Vec<EntityId> = fragments
        .iter()
        .filter(|f| !f.retired && f.label == Label::Real)
        .map(|f| f.id)
        .collect();
    reals.sort();
    match reals.len() {
        0 => SplitResolution::Vanished,
        1 => SplitResolution::Single(reals[0]),
        _ => SplitResolution::Disocclusion(reals),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityMatch {
    pub prior: EntityId,
    pub posterior: EntityId,
    pub distance: f64,
}

/// Greedy one-to-one assignment by ascending Euclidean histogram distance.
/// Ties go to the lower posterior id, then the lower prior id.
pub fn match_identities(
    priors: &[(EntityId, HueHistogram)],
    posteriors: &[(EntityId, HueHistogram)],
) -> Vec<IdentityMatch> {
    let mut pairs: Vec<IdentityMatch> = Vec::with_capacity(priors.len() * posteriors.len());
    for (pi, ph) in priors {
        for (qi, qh) in posteriors {
            pairs.push(IdentityMatch {
                prior: *pi,
                posterior: *qi,
                distance: ph.distance(qh),
            });
        }
    }
    pairs.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.posterior.cmp(&b.posterior))
            .then(a.prior.cmp(&b.prior))
    });
    let mut used_prior = Vec::new();
    let mut used_post = Vec::new();
    let mut out = Vec::new();
    for p in pairs {
        if used_prior.contains(&p.prior) || used_post.contains(&p.posterior) {
            continue;
        }
        used_prior.push(p.prior);
        used_post.push(p.posterior);
        out.push(p);
    }
    out
}
