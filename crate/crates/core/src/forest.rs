//! Octree forest: farthest-point root placement, cluster scales, overlapping
//! subdivision and leaf occupancy.

use crate::error::{Error, Result};
use crate::par;
use crate::spatial::PointGrid;
use crate::Vec3;

/// Parent index stored at level 0.
pub const NO_PARENT: u32 = u32::MAX;
/// Sibling index stored at level 0.
pub const NO_SIBLING: u8 = u8::MAX;
/// Lower bound applied to root half-extents by the fitting pipeline.
pub const MIN_ROOT_SCALE: f64 = 1e-4;

/// Root voxel: an infinity-norm ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootVoxel {
    pub center: Vec3,
    pub half_extent: f64,
}

impl RootVoxel {
    pub fn contains(&self, p: &Vec3) -> bool {
        (p - self.center).amax() <= self.half_extent
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeNode {
    pub level: u8,
    pub parent: u32,
    pub sibling: u8,
    pub center: Vec3,
    pub half_extent: f64,
    /// Meaningful on leaves only.
    pub non_empty: bool,
}

impl TreeNode {
    pub fn contains(&self, p: &Vec3) -> bool {
        (p - self.center).amax() <= self.half_extent
    }
}

/// Offset direction of octant `sibling`: bit 0 -> x, bit 1 -> y, bit 2 -> z;
/// a clear bit is the negative side.
pub fn octant_sign(sibling: u8) -> Vec3 {
    Vec3::new(
        if sibling & 1 != 0 { 1.0 } else { -1.0 },
        if sibling & 2 != 0 { 1.0 } else { -1.0 },
        if sibling & 4 != 0 { 1.0 } else { -1.0 },
    )
}

/// Center and half-extent of child `sibling` of a node.
pub fn child_box(center: &Vec3, half_extent: f64, sibling: u8, alpha: f64) -> (Vec3, f64) {
    (
        center + octant_sign(sibling) * (half_extent * 0.5),
        half_extent * (1.0 + alpha) * 0.5,
    )
}

/// Octree forest with dense level-ordered node arrays. The children of node
/// `j` at level `l` are nodes `8j .. 8j + 8` at level `l + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    roots: Vec<RootVoxel>,
    alpha: f64,
    levels: Vec<Vec<TreeNode>>,
}

impl Forest {
    pub fn roots(&self) -> &[RootVoxel] {
        &self.roots
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, l: usize) -> &[TreeNode] {
        &self.levels[l]
    }

    pub fn leaves(&self) -> &[TreeNode] {
        self.levels.last().expect("forest has a root level")
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves().len()
    }

    pub fn non_empty_count(&self) -> usize {
        self.leaves().iter().filter(|n| n.non_empty).count()
    }

    /// Indices of non-empty leaves in ascending order.
    pub fn non_empty_leaves(&self) -> Vec<usize> {
        self.leaves()
            .iter()
            .enumerate()
            .filter(|(_, n)| n.non_empty)
            .map(|(i, _)| i)
            .collect()
    }

    /// Root index that owns leaf `leaf`.
    pub fn root_of_leaf(&self, leaf: usize) -> usize {
        leaf >> (3 * self.depth())
    }

    pub fn set_occupancy(&mut self, flags: &[bool]) -> Result<()> {
        let leaves = self.levels.last_mut().expect("forest has a root level");
        if flags.len() != leaves.len() {
            return Err(Error::InvalidArgument(format!(
                "{} occupancy flags for {} leaves",
                flags.len(),
                leaves.len()
            )));
        }
        for (n, &f) in leaves.iter_mut().zip(flags) {
            n.non_empty = f;
        }
        Ok(())
    }
}

/// Greedy max-min selection of `n` indices starting at `initial`.
/// Ties pick the lowest index.
pub fn farthest_point_sampling(points: &[Vec3], n: usize, initial: usize) -> Result<Vec<usize>> {
    if n > points.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot select {n} of {} points",
            points.len()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if initial >= points.len() {
        return Err(Error::InvalidArgument(format!(
            "initial index {initial} out of range for {} points",
            points.len()
        )));
    }
    let mut selected = vec![false; points.len()];
    let mut min_d2 = vec![f64::INFINITY; points.len()];
    let mut out = Vec::with_capacity(n);
    let mut current = initial;
    loop {
        out.push(current);
        selected[current] = true;
        if out.len() == n {
            break;
        }
        let c = points[current];
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for (i, p) in points.iter().enumerate() {
            let d2 = (p - c).norm_squared();
            if d2 < min_d2[i] {
                min_d2[i] = d2;
            }
            if !selected[i] && min_d2[i] > best.1 {
                best = (i, min_d2[i]);
            }
        }
        current = best.0;
    }
    Ok(out)
}

/// Index of the nearest center; ties go to the lower index.
pub fn nearest_center(centers: &[Vec3], p: &Vec3) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d2 = (p - c).norm_squared();
        if d2 < best.1 {
            best = (i, d2);
        }
    }
    best.0
}

/// Roots at FPS-selected samples, each scaled to the infinity-norm radius of
/// its nearest-centroid cluster. No scale floor is applied here.
pub fn init_roots(points: &[Vec3], n_roots: usize, initial: usize) -> Result<Vec<RootVoxel>> {
    if n_roots == 0 {
        return Err(Error::InvalidArgument("need at least one root".into()));
    }
    let picks = farthest_point_sampling(points, n_roots, initial)?;
    let centers: Vec<Vec3> = picks.iter().map(|&i| points[i]).collect();
    let assignment = assign_clusters(points, &centers);
    Ok(cluster_scales(points, &centers, &assignment)
        .into_iter()
        .zip(&centers)
        .map(|(s, c)| RootVoxel {
            center: *c,
            half_extent: s,
        })
        .collect())
}

pub fn assign_clusters(points: &[Vec3], centers: &[Vec3]) -> Vec<usize> {
    par::map_slice(points, |p| nearest_center(centers, p))
}

/// `max ||x - c||_inf` over each cluster (0 for empty clusters).
pub fn cluster_scales(points: &[Vec3], centers: &[Vec3], assignment: &[usize]) -> Vec<f64> {
    let mut s = vec![0.0f64; centers.len()];
    for (p, &a) in points.iter().zip(assignment) {
        s[a] = s[a].max((p - centers[a]).amax());
    }
    s
}

/// Emits `depth` levels of eight overlapping children per node.
pub fn subdivide(roots: &[RootVoxel], alpha: f64, depth: usize) -> Result<Forest> {
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "alpha must be >= 0, got {alpha}"
        )));
    }
    if depth == 0 {
        return Err(Error::InvalidArgument("depth must be >= 1".into()));
    }
    let level0 = roots
        .iter()
        .map(|r| TreeNode {
            level: 0,
            parent: NO_PARENT,
            sibling: NO_SIBLING,
            center: r.center,
            half_extent: r.half_extent,
            non_empty: false,
        })
        .collect();
    let mut levels: Vec<Vec<TreeNode>> = vec![level0];
    for l in 1..=depth {
        let prev = &levels[l - 1];
        let mut next = Vec::with_capacity(prev.len() * 8);
        for (j, node) in prev.iter().enumerate() {
            for sib in 0..8u8 {
                let (center, half_extent) = child_box(&node.center, node.half_extent, sib, alpha);
                next.push(TreeNode {
                    level: l as u8,
                    parent: j as u32,
                    sibling: sib,
                    center,
                    half_extent,
                    non_empty: false,
                });
            }
        }
        levels.push(next);
    }
    Ok(Forest {
        roots: roots.to_vec(),
        alpha,
        levels,
    })
}

/// Marks a leaf non-empty iff at least one sample lies in its closed
/// infinity ball.
pub fn classify_nonempty(forest: &mut Forest, points: &[Vec3]) {
    let leaves = forest.leaves();
    let mut sizes: Vec<f64> = leaves.iter().map(|n| n.half_extent).collect();
    sizes.sort_by(f64::total_cmp);
    let cell = sizes
        .get(sizes.len() / 2)
        .copied()
        .unwrap_or(0.05)
        .max(1e-3);
    let grid = PointGrid::new(points, cell);
    let flags = par::map_slice(leaves, |n| {
        grid.any_within_inf_ball(points, &n.center, n.half_extent)
    });
    forest.set_occupancy(&flags).expect("one flag per leaf");
}
