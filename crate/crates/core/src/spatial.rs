//! Point indices: a uniform bucket grid for box queries and a kd-tree for
//! nearest-neighbour queries.

use crate::Vec3;

/// Uniform bucket grid over a point set, stored in CSR form.
#[derive(Debug, Clone)]
pub struct PointGrid {
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl PointGrid {
    /// `cell` is the bucket edge length; capped so the grid has at most
    /// `256^3` buckets.
    pub fn new(points: &[Vec3], cell: f64) -> Self {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        if points.is_empty() {
            lo = Vec3::zeros();
            hi = Vec3::zeros();
        }
        let extent = (hi - lo).max();
        let cell = cell.max(extent / 256.0).max(1e-9);
        let dims = [0, 1, 2].map(|k| (((hi[k] - lo[k]) / cell).floor() as usize + 1).max(1));
        let mut grid = Self {
            origin: lo,
            cell,
            dims,
            starts: vec![0; dims[0] * dims[1] * dims[2] + 1],
            items: vec![0; points.len()],
        };
        let keys: Vec<usize> = points.iter().map(|p| grid.key(grid.coords(p))).collect();
        for &k in &keys {
            grid.starts[k + 1] += 1;
        }
        for i in 1..grid.starts.len() {
            grid.starts[i] += grid.starts[i - 1];
        }
        let mut fill = grid.starts.clone();
        for (i, &k) in keys.iter().enumerate() {
            grid.items[fill[k] as usize] = i as u32;
            fill[k] += 1;
        }
        grid
    }

    fn coords(&self, p: &Vec3) -> [usize; 3] {
        [0, 1, 2].map(|k| {
            let c = ((p[k] - self.origin[k]) / self.cell).floor();
            (c.max(0.0) as usize).min(self.dims[k] - 1)
        })
    }

    fn key(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    /// Calls `visit` for every point whose bucket overlaps the box. The caller
    /// applies the exact containment test.
    pub fn for_each_candidate(&self, lo: &Vec3, hi: &Vec3, mut visit: impl FnMut(usize)) {
        for k in 0..3 {
            if hi[k] < self.origin[k] - self.cell
                || lo[k] > self.origin[k] + self.cell * self.dims[k] as f64
            {
                return;
            }
        }
        let a = self.coords(lo);
        let b = self.coords(hi);
        for z in a[2]..=b[2] {
            for y in a[1]..=b[1] {
                let row = self.key([a[0], y, z]);
                let (s, e) = (
                    self.starts[row] as usize,
                    self.starts[row + b[0] - a[0] + 1] as usize,
                );
                for &i in &self.items[s..e] {
                    visit(i as usize);
                }
            }
        }
    }

    /// Indices of points inside the closed infinity ball `(center, radius)`, ascending.
    pub fn within_inf_ball(&self, points: &[Vec3], center: &Vec3, radius: f64) -> Vec<usize> {
        let r = Vec3::repeat(radius);
        let mut out = Vec::new();
        self.for_each_candidate(&(center - r), &(center + r), |i| {
            if (points[i] - center).amax() <= radius {
                out.push(i);
            }
        });
        out.sort_unstable();
        out
    }

    /// True when any point lies in the closed infinity ball.
    pub fn any_within_inf_ball(&self, points: &[Vec3], center: &Vec3, radius: f64) -> bool {
        let r = Vec3::repeat(radius);
        let mut found = false;
        self.for_each_candidate(&(center - r), &(center + r), |i| {
            found |= (points[i] - center).amax() <= radius;
        });
        found
    }
}

#[derive(Debug, Clone, Copy)]
struct KdNode {
    /// Split axis, or 3 for a leaf.
    axis: u8,
    split: f64,
    start: u32,
    end: u32,
}

const KD_LEAF: usize = 8;

/// Static 3-d tree for nearest-neighbour queries.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    index: Vec<u32>,
    nodes: Vec<KdNode>,
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut tree = Self {
            points: points.to_vec(),
            index: (0..points.len() as u32).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            let n = points.len();
            let mut nodes = Vec::with_capacity(2 * n / KD_LEAF + 2);
            tree.build(0, n, &mut nodes);
            tree.nodes = nodes;
        }
        tree
    }

    fn build(&mut self, start: usize, end: usize, nodes: &mut Vec<KdNode>) -> usize {
        let id = nodes.len();
        nodes.push(KdNode {
            axis: 3,
            split: 0.0,
            start: start as u32,
            end: end as u32,
        });
        if end - start <= KD_LEAF {
            return id;
        }
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &i in &self.index[start..end] {
            lo = lo.inf(&self.points[i as usize]);
            hi = hi.sup(&self.points[i as usize]);
        }
        let axis = (hi - lo).imax();
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.index[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a as usize][axis].total_cmp(&points[b as usize][axis])
        });
        let split = self.points[self.index[mid] as usize][axis];
        // Children are laid out as id + 1 (left) and the returned right id.
        self.build(start, mid, nodes);
        let right = self.build(mid, end, nodes);
        nodes[id] = KdNode {
            axis: axis as u8,
            split,
            start: right as u32,
            end: 0,
        };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index and squared distance of the nearest point.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, q, &mut best);
        Some(best)
    }

    fn search(&self, id: usize, q: &Vec3, best: &mut (usize, f64)) {
        let node = self.nodes[id];
        if node.axis == 3 {
            for &i in &self.index[node.start as usize..node.end as usize] {
                let d2 = (self.points[i as usize] - q).norm_squared();
                if d2 < best.1 || (d2 == best.1 && (i as usize) < best.0) {
                    *best = (i as usize, d2);
                }
            }
            return;
        }
        let diff = q[node.axis as usize] - node.split;
        let (near, far) = if diff < 0.0 {
            (id + 1, node.start as usize)
        } else {
            (node.start as usize, id + 1)
        };
        self.search(near, q, best);
        if diff * diff <= best.1 {
            self.search(far, q, best);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                )
            })
            .collect()
    }

    #[test]
    fn grid_box_query_matches_scan() {
        let pts = cloud(5000, 1);
        let grid = PointGrid::new(&pts, 0.05);
        for c in cloud(50, 2) {
            let r = 0.07;
            let fast = grid.within_inf_ball(&pts, &c, r);
            let slow: Vec<usize> = (0..pts.len())
                .filter(|&i| (pts[i] - c).amax() <= r)
                .collect();
            assert_eq!(fast, slow);
            assert_eq!(grid.any_within_inf_ball(&pts, &c, r), !slow.is_empty());
        }
    }

    #[test]
    fn grid_handles_query_outside_bounds() {
        let pts = cloud(100, 3);
        let grid = PointGrid::new(&pts, 0.1);
        assert!(grid
            .within_inf_ball(&pts, &Vec3::repeat(5.0), 0.1)
            .is_empty());
        assert_eq!(grid.within_inf_ball(&pts, &Vec3::zeros(), 10.0).len(), 100);
    }

    #[test]
    fn kdtree_matches_brute_force() {
        let pts = cloud(3000, 4);
        let tree = KdTree::new(&pts);
        for q in cloud(300, 5) {
            let (i, d2) = tree.nearest(&q).unwrap();
            let (bi, bd2) = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (i, (p - q).norm_squared()))
                .fold(
                    (usize::MAX, f64::INFINITY),
                    |b, c| if c.1 < b.1 { c } else { b },
                );
            assert_eq!(i, bi);
            assert_eq!(d2, bd2);
        }
        assert!(KdTree::new(&[]).nearest(&Vec3::zeros()).is_none());
    }
}
