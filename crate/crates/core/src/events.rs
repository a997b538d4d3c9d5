//! Tracker event log records (one JSON object per line).

use serde::{Deserialize, Serialize};

use crate::psmf::{Classification, EntityId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Seeded {
        frame: u32,
        entity: EntityId,
        size: usize,
    },
    Classified {
        frame: u32,
        entity: EntityId,
        label: Classification,
        neglog_sum: f64,
    },
    Merged {
        frame: u32,
        entity: EntityId,
        into: EntityId,
    },
    OcclusionBegin {
        frame: u32,
        occlusion: EntityId,
        members: Vec<EntityId>,
        /// Members without a captured prior histogram.
        missing_priors: Vec<EntityId>,
    },
    OcclusionExtended {
        frame: u32,
        occlusion: EntityId,
        added: Vec<EntityId>,
    },
    SplitDetected {
        frame: u32,
        occlusion: EntityId,
        fragments: Vec<EntityId>,
    },
    SplitCancelled {
        frame: u32,
        occlusion: EntityId,
    },
    DisocclusionConfirmed {
        frame: u32,
        occlusion: EntityId,
        fragments: Vec<EntityId>,
    },
    /// Only one fragment survived the observation period; it continues the
    /// occlusion with the identity set unresolved.
    SplitSingle {
        frame: u32,
        occlusion: EntityId,
        fragment: EntityId,
        extension: bool,
    },
    SplitVanished {
        frame: u32,
        occlusion: EntityId,
    },
    IdentityAssigned {
        frame: u32,
        member: EntityId,
        fragment: EntityId,
        /// `None` when assigned by exclusion (no prior histogram).
        distance: Option<f64>,
    },
    /// A confirmed fragment with no matching prior becomes a new object.
    NewObjectAfterSplit {
        frame: u32,
        fragment: EntityId,
        extension: bool,
    },
    MemberMissing {
        frame: u32,
        member: EntityId,
    },
    SubtractionEmpty {
        frame: u32,
        entity: EntityId,
    },
    UnanchoredInterpolation {
        frame: u32,
        entity: EntityId,
    },
    Stale {
        frame: u32,
        entity: EntityId,
    },
}
