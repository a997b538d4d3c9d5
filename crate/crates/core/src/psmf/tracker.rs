//! Per-stream entity state machine driven by the active block groups of each
//! P-frame.
//!
//! Each frame the active groups and the associable entities form a bipartite
//! overlap graph (a group overlaps an entity when they share a macroblock with
//! the entity's previous region). Every connected component is resolved on
//! its own:
//!
//! * no entity: the group seeds a new candidate;
//! * one entity: the union of the groups is its succeeding region, except
//!   that an occlusion entity overlapped by two or more groups splits;
//! * several entities: a collision, resolved by [`detect_collision`].

use std::collections::BTreeMap;

use super::entity::{classify_entity, Classification, Entity, EntityId, Label};
use super::{intersects, BlockGroup, PsmfConfig, Region};
use crate::events::Event;
use crate::occlusion::{
    detect_collision, detect_split, match_identities, resolve_split, CollisionEvent, HueHistogram, OcclusionGroup,
    SplitResolution,
};

/// Fragments confirmed as separate real objects, waiting for their first
/// I-frame histogram to be matched against the group's priors.
#[derive(Clone, Debug)]
pub struct PendingIdentity {
    pub occlusion: OcclusionGroup,
    pub fragments: Vec<EntityId>,
    pub frame: u32,
}

/// A fragment's track handed over to a previously occluded object.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IdentityTransfer {
    pub fragment: EntityId,
    pub member: EntityId,
}

pub struct EntityTracker {
    config: PsmfConfig,
    entities: BTreeMap<EntityId, Entity>,
    next_id: u64,
    pending: Vec<PendingIdentity>,
}

struct DisjointSet(Vec<usize>);

impl DisjointSet {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

impl EntityTracker {
    pub fn new(config: PsmfConfig) -> Self {
        EntityTracker {
            config,
            entities: BTreeMap::new(),
            next_id: 1,
            pending: Vec::new(),
        }
    }

    pub fn config(&self) -> &PsmfConfig {
        &self.config
    }

    pub fn entity(&self, id: EntityId) -> Option<&Entity> {
        self.entities.get(&id)
    }

    pub fn entity_mut(&mut self, id: EntityId) -> Option<&mut Entity> {
        self.entities.get_mut(&id)
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    /// Entities that own a blob in the output: candidates, real objects, and
    /// occlusion entities that are not waiting on a split.
    pub fn visible(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values().filter(|e| {
            !e.retired
                && match e.label {
                    Label::Candidate | Label::Real => true,
                    Label::Occluded => e.is_occlusion() && e.split_fragments.is_none(),
                    Label::Background => false,
                }
        })
    }

    pub fn pending_identities(&self) -> &[PendingIdentity] {
        &self.pending
    }

    fn alloc_id(&mut self) -> EntityId {
        let id = EntityId(self.next_id);
        self.next_id += 1;
        id
    }

    /// Advances every entity by one P-frame.
    pub fn step(&mut self, frame: u32, groups: &[BlockGroup]) -> Vec<Event> {
        let mut events = Vec::new();
        let live: Vec<EntityId> = self.entities.values().filter(|e| e.is_associable()).map(|e| e.id).collect();

        let ng = groups.len();
        let mut ds = DisjointSet((0..ng + live.len()).collect());
        for (gi, g) in groups.iter().enumerate() {
            for (ei, id) in live.iter().enumerate() {
                if intersects(&g.members, &self.entities[id].region) {
                    ds.union(gi, ng + ei);
                }
            }
        }
        // root -> (group indices, entity ids); roots are the smallest member
        // index, so iteration follows the first group of each component
        let mut comps: BTreeMap<usize, (Vec<usize>, Vec<EntityId>)> = BTreeMap::new();
        for gi in 0..ng {
            comps.entry(ds.find(gi)).or_default().0.push(gi);
        }
        for (ei, id) in live.iter().enumerate() {
            let root = ds.find(ng + ei);
            if let Some(c) = comps.get_mut(&root) {
                c.1.push(*id);
            }
        }

        let mut succeeding: BTreeMap<EntityId, Region> = BTreeMap::new();
        let mut seeds: Vec<(Region, Option<EntityId>)> = Vec::new();
        let mut splits: Vec<EntityId> = Vec::new();

        for (gidx, ents) in comps.into_values() {
            let union: Region = gidx.iter().flat_map(|&g| groups[g].members.iter().copied()).collect();
            match ents.len() {
                0 => {
                    for &g in &gidx {
                        seeds.push((groups[g].members.clone(), None));
                    }
                }
                1 => {
                    let id = ents[0];
                    let local: Vec<BlockGroup> = gidx.iter().map(|&g| groups[g].clone()).collect();
                    match detect_split(&self.entities[&id], &local) {
                        Some(hits) => {
                            // groups of the component that do not touch the
                            // occlusion region directly join the nearest fragment
                            // only through Eq-1 union on later frames
                            for &h in &hits {
                                seeds.push((local[h].members.clone(), Some(id)));
                            }
                            splits.push(id);
                        }
                        None => {
                            succeeding.insert(id, union);
                        }
                    }
                }
                _ => {
                    let outcome = {
                        let refs: Vec<&Entity> = ents.iter().map(|id| &self.entities[id]).collect();
                        detect_collision(&refs)
                    };
                    self.apply_collision(frame, outcome, union, &mut succeeding, &mut events);
                }
            }
        }

        // advance the entities that existed before this frame
        for id in &live {
            let psi = self.config.psi;
            let stale_limit = self.config.stale_limit;
            let e = self.entities.get_mut(id).unwrap();
            if e.retired || e.split_fragments.is_some() {
                continue;
            }
            let succ = succeeding.remove(id).unwrap_or_default();
            if e.label == Label::Candidate {
                e.observe(succ);
                if e.observed >= psi {
                    self.classify(*id, frame, &mut events);
                }
            } else {
                e.track(succ);
                if let Some(limit) = stale_limit {
                    if e.missed >= limit {
                        e.retired = true;
                        events.push(Event::Stale { frame, entity: *id });
                    }
                }
            }
        }

        // new candidates, including split fragments
        let mut fragments: BTreeMap<EntityId, Vec<EntityId>> = BTreeMap::new();
        for (region, parent) in seeds {
            let id = self.alloc_id();
            let size = region.len();
            let mut e = Entity::seed(id, frame, region);
            e.split_parent = parent;
            self.entities.insert(id, e);
            events.push(Event::Seeded { frame, entity: id, size });
            if let Some(p) = parent {
                fragments.entry(p).or_default().push(id);
            }
            if self.config.psi <= 1 {
                self.classify(id, frame, &mut events);
            }
        }
        for parent in splits {
            let frs = fragments.remove(&parent).unwrap_or_default();
            events.push(Event::SplitDetected {
                frame,
                occlusion: parent,
                fragments: frs.clone(),
            });
            self.entities.get_mut(&parent).unwrap().split_fragments = Some(frs);
        }

        self.resolve_splits(frame, &mut events);
        events
    }

    fn classify(&mut self, id: EntityId, frame: u32, events: &mut Vec<Event>) {
        let e = self.entities.get_mut(&id).unwrap();
        let label = classify_entity(e, &self.config);
        match label {
            Classification::Real => e.label = Label::Real,
            Classification::Background => {
                e.label = Label::Background;
                e.retired = true;
            }
        }
        events.push(Event::Classified {
            frame,
            entity: id,
            label,
            neglog_sum: e.neglog_sum,
        });
    }

    fn merge(&mut self, id: EntityId, into: EntityId, frame: u32, events: &mut Vec<Event>) {
        if id == into {
            return;
        }
        if let Some(e) = self.entities.get_mut(&id) {
            if e.retired {
                return;
            }
            e.retired = true;
            e.merged_into = Some(into);
            events.push(Event::Merged {
                frame,
                entity: id,
                into,
            });
        }
    }

    fn apply_collision(
        &mut self,
        frame: u32,
        outcome: CollisionEvent,
        union: Region,
        succeeding: &mut BTreeMap<EntityId, Region>,
        events: &mut Vec<Event>,
    ) {
        match outcome {
            CollisionEvent::None => unreachable!("collision with fewer than two entities"),
            CollisionEvent::Absorb { into, absorbed } => {
                for id in absorbed {
                    self.merge(id, into, frame, events);
                }
                succeeding.insert(into, union);
            }
            CollisionEvent::Remerge { parent, absorbed } => {
                let frs = self
                    .entities
                    .get_mut(&parent)
                    .and_then(|p| p.split_fragments.take())
                    .unwrap_or_default();
                for id in frs.into_iter().chain(absorbed) {
                    self.merge(id, parent, frame, events);
                }
                events.push(Event::SplitCancelled {
                    frame,
                    occlusion: parent,
                });
                // the parent was frozen while split; it resumes here
                let p = self.entities.get_mut(&parent).unwrap();
                p.track(union);
            }
            CollisionEvent::Occlusion {
                existing,
                reals,
                absorbed,
            } => {
                let target = match existing {
                    Some(id) => {
                        succeeding.insert(id, union);
                        id
                    }
                    None => {
                        let id = self.alloc_id();
                        let mut e = Entity::seed(id, frame, union);
                        e.label = Label::Occluded;
                        e.detections = 0;
                        e.observed = 0;
                        e.train.clear();
                        e.occlusion = Some(OcclusionGroup {
                            id,
                            members: Vec::new(),
                            prior_hues: BTreeMap::new(),
                        });
                        self.entities.insert(id, e);
                        id
                    }
                };
                let mut added = Vec::new();
                let mut missing = Vec::new();
                for r in &reals {
                    let joined: Vec<(EntityId, Option<HueHistogram>)> = {
                        let e = self.entities.get_mut(r).unwrap();
                        match e.occlusion.take() {
                            Some(g) => {
                                e.retired = true;
                                e.merged_into = Some(target);
                                g.members.iter().map(|m| (*m, g.prior_hues.get(m).cloned().flatten())).collect()
                            }
                            None => {
                                e.label = Label::Occluded;
                                vec![(*r, e.prior_hue.clone())]
                            }
                        }
                    };
                    for (m, prior) in joined {
                        if prior.is_none() {
                            missing.push(m);
                        }
                        added.push(m);
                        self.entities
                            .get_mut(&target)
                            .unwrap()
                            .occlusion
                            .as_mut()
                            .unwrap()
                            .add_member(m, prior);
                    }
                }
                for id in absorbed {
                    self.merge(id, target, frame, events);
                }
                if existing.is_some() {
                    events.push(Event::OcclusionExtended {
                        frame,
                        occlusion: target,
                        added,
                    });
                } else {
                    events.push(Event::OcclusionBegin {
                        frame,
                        occlusion: target,
                        members: added,
                        missing_priors: missing,
                    });
                }
            }
        }
    }

    fn resolve_splits(&mut self, frame: u32, events: &mut Vec<Event>) {
        let parents: Vec<EntityId> = self
            .entities
            .values()
            .filter(|e| !e.retired && e.split_fragments.is_some())
            .map(|e| e.id)
            .collect();
        for parent in parents {
            let frs = self.entities[&parent].split_fragments.clone().unwrap();
            let resolution = {
                let refs: Vec<&Entity> = frs.iter().filter_map(|f| self.entities.get(f)).collect();
                resolve_split(&refs)
            };
            match resolution {
                SplitResolution::Pending => {}
                SplitResolution::Disocclusion(reals) => {
                    let p = self.entities.get_mut(&parent).unwrap();
                    p.split_fragments = None;
                    p.retired = true;
                    let group = p.occlusion.clone().unwrap();
                    for f in &reals {
                        self.entities.get_mut(f).unwrap().split_parent = None;
                    }
                    events.push(Event::DisocclusionConfirmed {
                        frame,
                        occlusion: parent,
                        fragments: reals.clone(),
                    });
                    self.pending.push(PendingIdentity {
                        occlusion: group,
                        fragments: reals,
                        frame,
                    });
                }
                SplitResolution::Single(f) => {
                    let region = self.entities[&f].region.clone();
                    let p = self.entities.get_mut(&parent).unwrap();
                    p.split_fragments = None;
                    p.region = region;
                    p.missed = 0;
                    self.merge(f, parent, frame, events);
                    events.push(Event::SplitSingle {
                        frame,
                        occlusion: parent,
                        fragment: f,
                        extension: true,
                    });
                }
                SplitResolution::Vanished => {
                    self.entities.get_mut(&parent).unwrap().split_fragments = None;
                    events.push(Event::SplitVanished {
                        frame,
                        occlusion: parent,
                    });
                }
            }
        }
    }

    /// Matches confirmed fragments to the occluded objects by hue histogram.
    ///
    /// `posteriors` holds the histogram of each fragment from the current
    /// I-frame. Groups where no fragment has a histogram yet stay pending.
    pub fn resolve_identities(
        &mut self,
        frame: u32,
        posteriors: &BTreeMap<EntityId, HueHistogram>,
    ) -> (Vec<IdentityTransfer>, Vec<Event>) {
        let mut transfers = Vec::new();
        let mut events = Vec::new();
        let pending = std::mem::take(&mut self.pending);
        for p in pending {
            let frags: Vec<EntityId> = p
                .fragments
                .iter()
                .copied()
                .filter(|f| self.entities.get(f).is_some_and(|e| !e.retired && e.label == Label::Real))
                .collect();
            let members: Vec<EntityId> = p
                .occlusion
                .members
                .iter()
                .copied()
                .filter(|m| self.entities.get(m).is_some_and(|e| !e.retired && e.label == Label::Occluded))
                .collect();
            if frags.is_empty() || members.is_empty() {
                for m in members {
                    events.push(Event::MemberMissing { frame, member: m });
                }
                continue;
            }
            if !frags.iter().any(|f| posteriors.contains_key(f)) {
                self.pending.push(p);
                continue;
            }

            let priors: Vec<(EntityId, HueHistogram)> = members
                .iter()
                .filter_map(|m| p.occlusion.prior_hues.get(m).cloned().flatten().map(|h| (*m, h)))
                .collect();
            let posts: Vec<(EntityId, HueHistogram)> = frags
                .iter()
                .filter_map(|f| posteriors.get(f).map(|h| (*f, h.clone())))
                .collect();
            let mut left_members = members.clone();
            let mut left_frags = frags.clone();
            for m in match_identities(&priors, &posts) {
                left_members.retain(|x| *x != m.prior);
                left_frags.retain(|x| *x != m.posterior);
                self.transfer(m.posterior, m.prior, posteriors.get(&m.posterior).cloned());
                transfers.push(IdentityTransfer {
                    fragment: m.posterior,
                    member: m.prior,
                });
                events.push(Event::IdentityAssigned {
                    frame,
                    member: m.prior,
                    fragment: m.posterior,
                    distance: Some(m.distance),
                });
            }
            // whatever is left on both sides lacked a histogram: pair by exclusion
            let pairs: Vec<(EntityId, EntityId)> = left_members.iter().copied().zip(left_frags.iter().copied()).collect();
            for (m, f) in &pairs {
                self.transfer(*f, *m, posteriors.get(f).cloned());
                transfers.push(IdentityTransfer { fragment: *f, member: *m });
                events.push(Event::IdentityAssigned {
                    frame,
                    member: *m,
                    fragment: *f,
                    distance: None,
                });
            }
            for f in left_frags.iter().skip(pairs.len()) {
                events.push(Event::NewObjectAfterSplit {
                    frame,
                    fragment: *f,
                    extension: true,
                });
            }
            for m in left_members.iter().skip(pairs.len()) {
                events.push(Event::MemberMissing { frame, member: *m });
            }
        }
        (transfers, events)
    }

    fn transfer(&mut self, fragment: EntityId, member: EntityId, posterior: Option<HueHistogram>) {
        let (region, missed) = {
            let f = self.entities.get_mut(&fragment).unwrap();
            f.retired = true;
            f.merged_into = Some(member);
            (f.region.clone(), f.missed)
        };
        let m = self.entities.get_mut(&member).unwrap();
        m.label = Label::Real;
        m.region = region;
        m.missed = missed;
        if posterior.is_some() {
            m.prior_hue = posterior;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psmf::testutil::{group, region};
    use crate::psmf::GridPos;

    fn block(x: u16, y: u16, w: u16, h: u16) -> BlockGroup {
        let cells: Vec<(u16, u16)> = (y..y + h).flat_map(|yy| (x..x + w).map(move |xx| (xx, yy))).collect();
        group(&cells)
    }

    fn tracker(psi: u32) -> EntityTracker {
        EntityTracker::new(PsmfConfig {
            psi,
            omega: PsmfConfig::default_omega(psi),
            ..PsmfConfig::default()
        })
    }

    fn reals(t: &EntityTracker) -> Vec<EntityId> {
        t.entities().filter(|e| !e.retired && e.label == Label::Real).map(|e| e.id).collect()
    }

    /// Runs `frames` P-frames of a block moving right one macroblock every other frame.
    fn run_object(t: &mut EntityTracker, start: u32, frames: u32, x: u16, y: u16) -> u16 {
        let mut cx = x;
        for f in start..start + frames {
            if f % 2 == 0 {
                cx += 1;
            }
            t.step(f, &[block(cx, y, 3, 4)]);
        }
        cx
    }

    #[test]
    fn two_disjoint_groups_seed_two_candidates() {
        let mut t = tracker(8);
        let ev = t.step(1, &[block(0, 0, 2, 2), block(10, 10, 2, 2)]);
        assert_eq!(ev.iter().filter(|e| matches!(e, Event::Seeded { .. })).count(), 2);
        assert_eq!(t.visible().filter(|e| e.label == Label::Candidate).count(), 2);
    }

    #[test]
    fn persistent_object_becomes_real_and_survives_without_groups() {
        let mut t = tracker(8);
        run_object(&mut t, 1, 8, 2, 2);
        let r = reals(&t);
        assert_eq!(r.len(), 1);
        let region = t.entity(r[0]).unwrap().region.clone();
        for f in 9..40 {
            t.step(f, &[]);
        }
        let e = t.entity(r[0]).unwrap();
        assert!(!e.retired);
        assert_eq!(e.region, region);
        assert_eq!(e.label, Label::Real);
    }

    #[test]
    fn stale_limit_retires_vanished_object() {
        let mut t = EntityTracker::new(PsmfConfig {
            stale_limit: Some(5),
            ..PsmfConfig::default()
        });
        run_object(&mut t, 1, 8, 2, 2);
        let r = reals(&t)[0];
        let mut stale = false;
        for f in 9..15 {
            stale |= t.step(f, &[]).iter().any(|e| matches!(e, Event::Stale { .. }));
        }
        assert!(stale);
        assert!(t.entity(r).unwrap().retired);
    }

    #[test]
    fn sporadic_group_is_background() {
        let mut t = tracker(8);
        t.step(1, &[block(5, 5, 2, 1)]);
        for f in 2..=8 {
            t.step(f, &[]);
        }
        let e = t.entities().next().unwrap();
        assert_eq!(e.label, Label::Background);
        assert!(e.retired);
        assert!((e.neglog_sum - 40320f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn candidate_overlapping_real_is_absorbed() {
        let mut t = tracker(8);
        let x = run_object(&mut t, 1, 8, 2, 2);
        let r1 = reals(&t)[0];
        // a candidate seeded away from the object
        t.step(9, &[block(x, 2, 3, 4), block(x + 5, 2, 2, 2)]);
        let c1 = t.visible().find(|e| e.label == Label::Candidate).unwrap().id;
        // one group covering both
        let ev = t.step(10, &[block(x, 2, 8, 4)]);
        assert!(ev.contains(&Event::Merged {
            frame: 10,
            entity: c1,
            into: r1
        }));
        assert_eq!(t.entity(c1).unwrap().merged_into, Some(r1));
        assert!(t.entity(r1).unwrap().region.contains(&GridPos::new(x + 6, 3)));
    }

    #[test]
    fn colliding_candidates_merge_into_older() {
        let mut t = tracker(8);
        t.step(1, &[block(0, 0, 2, 2)]);
        t.step(2, &[block(0, 0, 2, 2), block(5, 0, 2, 2)]);
        let ev = t.step(3, &[block(0, 0, 7, 2)]);
        assert!(ev.contains(&Event::Merged {
            frame: 3,
            entity: EntityId(2),
            into: EntityId(1)
        }));
    }

    /// Two real objects approach, collide, stay merged for a while, then separate.
    fn crossing(t: &mut EntityTracker, merged_frames: u32, separate_frames: u32) -> (EntityId, EntityId, u32) {
        for f in 1..=8 {
            t.step(f, &[block(1, 4, 3, 4), block(12, 4, 3, 4)]);
        }
        let r = reals(t);
        assert_eq!(r.len(), 2);
        let mut f = 9;
        for _ in 0..merged_frames {
            t.step(f, &[block(1, 4, 14, 4)]);
            f += 1;
        }
        for _ in 0..separate_frames {
            t.step(f, &[block(1, 4, 3, 4), block(12, 4, 3, 4)]);
            f += 1;
        }
        (r[0], r[1], f)
    }

    #[test]
    fn collision_of_two_reals_starts_occlusion() {
        let mut t = tracker(8);
        let (a, b, _) = crossing(&mut t, 1, 0);
        assert_eq!(t.entity(a).unwrap().label, Label::Occluded);
        assert_eq!(t.entity(b).unwrap().label, Label::Occluded);
        let occ: Vec<&Entity> = t.visible().collect();
        assert_eq!(occ.len(), 1);
        assert_eq!(occ[0].occlusion.as_ref().unwrap().members, vec![a, b]);
    }

    #[test]
    fn split_confirmed_after_observation_period() {
        let mut t = tracker(8);
        let (a, b, _) = crossing(&mut t, 5, 8);
        assert_eq!(t.pending_identities().len(), 1);
        let frags = t.pending_identities()[0].fragments.clone();
        assert_eq!(frags.len(), 2);
        // priors: a red, b green; posteriors crossed by position
        let mut ha = HueHistogram::empty();
        ha.bins[0] = 1.0;
        let mut hb = HueHistogram::empty();
        hb.bins[21] = 1.0;
        let occ_id = t.pending_identities()[0].occlusion.id;
        assert!(t.entity(occ_id).unwrap().retired);
        {
            let p = &mut t.pending[0];
            p.occlusion.prior_hues.insert(a, Some(ha.clone()));
            p.occlusion.prior_hues.insert(b, Some(hb.clone()));
        }
        let posteriors: BTreeMap<EntityId, HueHistogram> = [(frags[0], hb), (frags[1], ha)].into_iter().collect();
        let (transfers, _) = t.resolve_identities(30, &posteriors);
        assert_eq!(transfers.len(), 2);
        assert!(transfers.contains(&IdentityTransfer {
            fragment: frags[0],
            member: b
        }));
        assert_eq!(t.entity(a).unwrap().label, Label::Real);
        assert_eq!(t.entity(a).unwrap().region, region(&[(12, 4), (13, 4), (14, 4), (12, 5), (13, 5), (14, 5), (12, 6), (13, 6), (14, 6), (12, 7), (13, 7), (14, 7)]));
        assert!(t.pending_identities().is_empty());
        let visible: Vec<EntityId> = t.visible().map(|e| e.id).collect();
        assert_eq!(visible, vec![a, b]);
    }

    #[test]
    fn transient_separation_cancels_split() {
        let mut t = tracker(8);
        let (_, _, f) = crossing(&mut t, 5, 2);
        let ev = t.step(f, &[block(1, 4, 14, 4)]);
        assert!(ev.iter().any(|e| matches!(e, Event::SplitCancelled { .. })));
        let visible: Vec<&Entity> = t.visible().collect();
        assert_eq!(visible.len(), 1);
        assert!(visible[0].is_occlusion());
        assert!(t.pending_identities().is_empty());
    }

    #[test]
    fn asymmetric_split_keeps_group_unresolved() {
        let mut t = tracker(8);
        let (a, _, mut f) = crossing(&mut t, 5, 1);
        // only the right fragment persists
        for _ in 0..8 {
            t.step(f, &[block(12, 4, 3, 4)]);
            f += 1;
        }
        let visible: Vec<&Entity> = t.visible().collect();
        assert_eq!(visible.len(), 1);
        assert!(visible[0].is_occlusion());
        assert!(visible[0].region.contains(&GridPos::new(12, 4)));
        assert_eq!(t.entity(a).unwrap().label, Label::Occluded);
        assert!(t.pending_identities().is_empty());
    }

    #[test]
    fn every_candidate_has_one_region_per_observed_frame() {
        let mut t = tracker(8);
        for f in 1..12 {
            let gs: Vec<BlockGroup> = if f % 3 == 0 { vec![] } else { vec![block(2, 2, 2, 2), block(9, (f % 5) as u16, 2, 2)] };
            t.step(f, &gs);
            for e in t.entities().filter(|e| e.in_observation()) {
                assert_eq!(e.train.len() as u32, e.observed);
            }
        }
    }
}
