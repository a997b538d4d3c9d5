//! Probabilistic spatiotemporal macroblock filtering.
//!
//! Non-skip macroblocks of a P-frame are clustered into 8-connected block
//! groups, groups that are single macroblocks or carry no coefficients are
//! dropped, and the survivors (active block groups) drive the per-entity
//! temporal filter in [`tracker`].

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::components::components_8;
use crate::mbfs::{FrameFeatures, MacroblockRecord, MB_SIZE};

pub mod entity;
pub mod tracker;

pub use entity::{classify_entity, occurrence_term, Classification, Entity, EntityId, Label, RegionRecord};
pub use tracker::EntityTracker;

/// Macroblock column/row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridPos {
    // field order gives raster ordering
    pub my: u16,
    pub mx: u16,
}

impl GridPos {
    pub const fn new(mx: u16, my: u16) -> Self {
        GridPos { my, mx }
    }
}

/// A set of macroblock positions.
pub type Region = BTreeSet<GridPos>;

pub fn intersects(a: &Region, b: &Region) -> bool {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small.iter().any(|p| large.contains(p))
}

pub fn overlap_count(a: &Region, b: &Region) -> usize {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small.iter().filter(|p| large.contains(p)).count()
}

/// Pixel bounds `(x0, y0, x1, y1)` of a region, exclusive on the far side.
pub fn region_bounds(region: &Region) -> Option<(u32, u32, u32, u32)> {
    let first = region.iter().next()?;
    let (mut x0, mut y0, mut x1, mut y1) = (first.mx, first.my, first.mx, first.my);
    for p in region {
        x0 = x0.min(p.mx);
        x1 = x1.max(p.mx);
        y0 = y0.min(p.my);
        y1 = y1.max(p.my);
    }
    Some((
        x0 as u32 * MB_SIZE,
        y0 as u32 * MB_SIZE,
        (x1 as u32 + 1) * MB_SIZE,
        (y1 as u32 + 1) * MB_SIZE,
    ))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockGroup {
    pub frame_index: u32,
    pub members: Region,
    /// True iff some member carries nonzero transform coefficients.
    pub has_nonzero_coeff: bool,
    /// Virtual groups are frozen copies of an earlier region.
    pub is_virtual: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsmfConfig {
    /// Observation period, in P-frames.
    pub psi: u32,
    /// Occurrence threshold on the summed negative log occurrence terms.
    pub omega: f64,
    pub enable_spatial_filter: bool,
    /// Retire a real object after this many consecutive P-frames without a
    /// succeeding region. `None` keeps it forever.
    pub stale_limit: Option<u32>,
}

impl PsmfConfig {
    pub const DEFAULT_PSI: u32 = 8;

    /// `psi · ln 2`: an average per-frame overlap ratio of at least one half.
    pub fn default_omega(psi: u32) -> f64 {
        psi as f64 * std::f64::consts::LN_2
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.psi < 1 {
            return Err("psi must be at least 1".into());
        }
        if self.omega.is_nan() || self.omega <= 0.0 || !self.omega.is_finite() {
            return Err("omega must be a positive finite number".into());
        }
        Ok(())
    }
}

impl Default for PsmfConfig {
    fn default() -> Self {
        PsmfConfig {
            psi: Self::DEFAULT_PSI,
            omega: Self::default_omega(Self::DEFAULT_PSI),
            enable_spatial_filter: true,
            stale_limit: None,
        }
    }
}

/// Clusters the non-skip macroblocks of a raster-order grid into maximal
/// 8-connected block groups.
pub fn cluster_grid(frame_index: u32, grid: &[MacroblockRecord], mb_cols: u32) -> Vec<BlockGroup> {
    let cols = mb_cols as usize;
    let rows = grid.len() / cols;
    let set: Vec<bool> = grid.iter().map(|mb| !mb.skip).collect();
    components_8(cols, rows, &set)
        .into_iter()
        .map(|cells| {
            let has_nonzero_coeff = cells.iter().any(|&(x, y)| grid[y * cols + x].coeff_mask != 0);
            BlockGroup {
                frame_index,
                members: cells.iter().map(|&(x, y)| GridPos::new(x as u16, y as u16)).collect(),
                has_nonzero_coeff,
                is_virtual: false,
            }
        })
        .collect()
}

/// Block groups of a P-frame. Returns `None` for I-frames.
pub fn cluster_blocks(frame: &FrameFeatures, mb_cols: u32) -> Option<Vec<BlockGroup>> {
    frame.mb_grid().map(|g| cluster_grid(frame.frame_index, g, mb_cols))
}

/// Drops single-macroblock groups and groups without coefficients.
pub fn spatial_filter(groups: Vec<BlockGroup>, enabled: bool) -> Vec<BlockGroup> {
    if !enabled {
        return groups;
    }
    groups
        .into_iter()
        .filter(|g| g.members.len() > 1 && g.has_nonzero_coeff)
        .collect()
}

/// Union of the active groups sharing at least one macroblock with `prev`.
pub fn compute_succeeding_region(prev: &Region, active: &[BlockGroup]) -> Region {
    active
        .iter()
        .filter(|g| intersects(&g.members, prev))
        .flat_map(|g| g.members.iter().copied())
        .collect()
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn all_skip_gives_no_groups() {
        assert!(cluster_grid(1, &grid(4, 3, &[]), 4).is_empty());
    }

    #[test]
    fn diagonal_neighbours_form_one_group() {
        let g = cluster_grid(1, &grid(4, 3, &[(0, 0, true), (1, 1, false)]), 4);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].members, region(&[(0, 0), (1, 1)]));
        assert!(g[0].has_nonzero_coeff);
    }

    #[test]
    fn figure_layout_clusters_and_filters() {
        let groups = cluster_grid(3, &figure_layout(), 20);
        assert_eq!(groups.len(), 9);
        let active = spatial_filter(groups.clone(), true);
        assert_eq!(active.len(), 2);
        assert!(active.iter().any(|g| g.members.len() == 7));
        assert!(active.iter().any(|g| g.members == region(&[(15, 2), (16, 2)])));
        assert_eq!(spatial_filter(groups, false).len(), 9);
    }

    #[test]
    fn singleton_with_coefficients_is_removed() {
        let out = spatial_filter(vec![group(&[(3, 3)])], true);
        assert!(out.is_empty());
        assert!(spatial_filter(Vec::new(), true).is_empty());
    }

    #[test]
    fn succeeding_region_requires_shared_cells() {
        let a = group(&[(2, 3), (3, 3)]);
        let b = group(&[(9, 9)]);
        // adjacency alone is not overlap
        assert!(compute_succeeding_region(&region(&[(2, 2)]), &[a.clone(), b.clone()]).is_empty());
        let r = compute_succeeding_region(&region(&[(2, 2), (2, 3)]), &[a.clone(), b]);
        assert_eq!(r, region(&[(2, 3), (3, 3)]));
        assert_eq!(compute_succeeding_region(&a.members, std::slice::from_ref(&a)), a.members);
    }

    #[test]
    fn region_bounds_in_pixels() {
        assert_eq!(region_bounds(&region(&[(1, 2), (3, 2), (2, 4)])), Some((16, 32, 64, 80)));
        assert_eq!(region_bounds(&Region::new()), None);
    }

    proptest! {
        #[test]
        fn clustering_partitions_non_skip_set(cells in proptest::collection::vec((0u16..8, 0u16..6, any::<bool>()), 0..30)) {
            let g = grid(8, 6, &cells);
            let groups = cluster_grid(1, &g, 8);
            let mut seen = Region::new();
            for grp in &groups {
                for p in &grp.members {
                    prop_assert!(seen.insert(*p), "cell in two groups");
                }
            }
            let non_skip: Region = g.iter().enumerate().filter(|(_, m)| !m.skip)
                .map(|(i, _)| GridPos::new((i % 8) as u16, (i / 8) as u16)).collect();
            prop_assert_eq!(seen, non_skip);
            prop_assert_eq!(cluster_grid(1, &g, 8), groups.clone());
            // no two groups are adjacent
            for (i, a) in groups.iter().enumerate() {
                for b in &groups[i + 1..] {
                    for p in &a.members {
                        for q in &b.members {
                            prop_assert!((p.mx as i32 - q.mx as i32).abs() > 1 || (p.my as i32 - q.my as i32).abs() > 1);
                        }
                    }
                }
            }
            // multi-block coefficient-bearing groups always survive
            let active = spatial_filter(groups.clone(), true);
            for grp in &groups {
                if grp.members.len() > 1 && grp.has_nonzero_coeff {
                    prop_assert!(active.contains(grp));
                }
            }
        }
    }
}
