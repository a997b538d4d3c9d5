//! Entities and the occurrence-probability criterion.

use serde::{Deserialize, Serialize};

use super::{overlap_count, PsmfConfig, Region};
use crate::occlusion::{HueHistogram, OcclusionGroup};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u64);

impl std::fmt::Display for EntityId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Candidate,
    Real,
    Background,
    Occluded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Real,
    Background,
}

/// One observed P-frame of an active group train.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionRecord {
    /// Succeeding region `G` (possibly empty).
    pub succeeding: Region,
    /// `Ĝ`: the succeeding region, or the carried virtual region when empty.
    pub region: Region,
}

#[derive(Clone, Debug)]
pub struct Entity {
    pub id: EntityId,
    pub label: Label,
    pub seed_frame: u32,
    /// Observation-period train, one record per observed P-frame.
    pub train: Vec<RegionRecord>,
    /// Current `Ĝ`.
    pub region: Region,
    pub neglog_sum: f64,
    /// P-frames with a non-empty succeeding region in the observation period (seed included).
    pub detections: u32,
    /// P-frames observed since seeding (seed is 1).
    pub observed: u32,
    pub merged_into: Option<EntityId>,
    pub retired: bool,
    pub prior_hue: Option<HueHistogram>,
    /// Set for occlusion entities.
    pub occlusion: Option<OcclusionGroup>,
    /// Fragments spawned by a region split of this occlusion entity, while undecided.
    pub split_fragments: Option<Vec<EntityId>>,
    /// Occlusion entity this fragment split from.
    pub split_parent: Option<EntityId>,
    /// Consecutive P-frames without a succeeding region.
    pub missed: u32,
}

impl Entity {
    pub fn seed(id: EntityId, frame: u32, region: Region) -> Self {
        Entity {
            id,
            label: Label::Candidate,
            seed_frame: frame,
            train: vec![RegionRecord {
                succeeding: region.clone(),
                region: region.clone(),
            }],
            region,
            neglog_sum: 0.0,
            detections: 1,
            observed: 1,
            merged_into: None,
            retired: false,
            prior_hue: None,
            occlusion: None,
            split_fragments: None,
            split_parent: None,
            missed: 0,
        }
    }

    pub fn is_occlusion(&self) -> bool {
        self.occlusion.is_some()
    }

    /// Occlusion entities and real objects: the entities that own a tracked blob.
    pub fn is_real_like(&self) -> bool {
        !self.retired && (self.label == Label::Real || (self.is_occlusion() && self.label == Label::Occluded))
    }

    /// Takes part in region association this frame.
    pub fn is_associable(&self) -> bool {
        if self.retired {
            return false;
        }
        match self.label {
            Label::Candidate | Label::Real => true,
            Label::Occluded => self.is_occlusion() && self.split_fragments.is_none(),
            Label::Background => false,
        }
    }

    pub fn in_observation(&self) -> bool {
        self.label == Label::Candidate && !self.retired
    }

    /// Records the succeeding region of the next observed P-frame and returns
    /// the occurrence term added to `neglog_sum`.
    pub fn observe(&mut self, succeeding: Region) -> f64 {
        let ordinal = self.observed + 1;
        let term = occurrence_term(&succeeding, &self.region, self.detections, ordinal);
        self.neglog_sum += term;
        self.observed = ordinal;
        self.advance(succeeding);
        term
    }

    /// Follows the succeeding region without accumulating occurrence terms.
    pub fn track(&mut self, succeeding: Region) {
        self.advance_region(succeeding);
    }

    fn advance(&mut self, succeeding: Region) {
        if !succeeding.is_empty() {
            self.detections += 1;
        }
        self.advance_region(succeeding.clone());
        self.train.push(RegionRecord {
            succeeding,
            region: self.region.clone(),
        });
    }

    fn advance_region(&mut self, succeeding: Region) {
        if succeeding.is_empty() {
            self.missed += 1;
        } else {
            self.missed = 0;
            self.region = succeeding;
        }
    }
}

/// Negative log occurrence probability of the `ordinal`-th observed P-frame.
///
/// With a non-empty succeeding region the probability is the fraction of the
/// previous region's macroblocks covered by it; otherwise it is the fraction
/// of frames so far with a detection, `detections / ordinal`, where
/// `detections` excludes the current frame. The seed frame contributes 0.
pub fn occurrence_term(succeeding: &Region, prev_region: &Region, detections: u32, ordinal: u32) -> f64 {
    if ordinal <= 1 {
        return 0.0;
    }
    let shared = overlap_count(succeeding, prev_region);
    if !succeeding.is_empty() && shared > 0 && !prev_region.is_empty() {
        -(shared as f64 / prev_region.len() as f64).ln()
    } else {
        -(detections.min(ordinal) as f64 / ordinal as f64).ln()
    }
}

/// Real iff the accumulated sum is strictly below the occurrence threshold.
pub fn classify_entity(entity: &Entity, config: &PsmfConfig) -> Classification {
    if entity.neglog_sum < config.omega {
        Classification::Real
    } else {
        Classification::Background
    }
}
