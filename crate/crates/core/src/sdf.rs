//! Signed distance to a watertight triangle mesh.
//!
//! Closest points come from a median-split BVH. The sign is taken from the
//! angle-weighted pseudonormal of the closest feature (face, edge or vertex),
//! which is exact for closed, consistently oriented meshes.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::{Vec3, TRUNCATION};

const LEAF_SIZE: usize = 4;

/// Which part of a triangle the closest point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    Vertex(u8),
    /// Edge `k` joins corners `k` and `(k + 1) % 3`.
    Edge(u8),
    Face,
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision Detection 5.1.5).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, Feature) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, Feature::Vertex(0));
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, Feature::Vertex(1));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, Feature::Edge(0));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, Feature::Vertex(2));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, Feature::Edge(2));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, Feature::Edge(1));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, Feature::Face)
}

#[derive(Debug, Clone)]
struct Node {
    lo: Vec3,
    hi: Vec3,
    /// Leaf: first slot in `order`; internal: index of the left child.
    first: u32,
    /// Leaf: triangle count; internal: 0 (right child stored in `right`).
    count: u32,
    right: u32,
}

/// Bounding volume hierarchy over mesh triangles.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
}

fn box_distance2(lo: &Vec3, hi: &Vec3, p: &Vec3) -> f64 {
    let mut d = 0.0;
    for k in 0..3 {
        let v = if p[k] < lo[k] {
            lo[k] - p[k]
        } else if p[k] > hi[k] {
            p[k] - hi[k]
        } else {
            0.0
        };
        d += v * v;
    }
    d
}

impl Bvh {
    pub fn build(triangles: &[[Vec3; 3]]) -> Self {
        let mut order: Vec<u32> = (0..triangles.len() as u32).collect();
        let centroids: Vec<Vec3> = triangles
            .iter()
            .map(|t| (t[0] + t[1] + t[2]) / 3.0)
            .collect();
        let mut nodes = Vec::with_capacity(2 * triangles.len() / LEAF_SIZE + 1);
        if !triangles.is_empty() {
            Self::build_node(
                triangles,
                &centroids,
                &mut order,
                0,
                triangles.len(),
                &mut nodes,
            );
        }
        Self { nodes, order }
    }

    fn build_node(
        tris: &[[Vec3; 3]],
        centroids: &[Vec3],
        order: &mut [u32],
        start: usize,
        end: usize,
        nodes: &mut Vec<Node>,
    ) -> u32 {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        let mut clo = lo;
        let mut chi = hi;
        for &t in &order[start..end] {
            for v in &tris[t as usize] {
                lo = lo.inf(v);
                hi = hi.sup(v);
            }
            let c = &centroids[t as usize];
            clo = clo.inf(c);
            chi = chi.sup(c);
        }
        let id = nodes.len() as u32;
        nodes.push(Node {
            lo,
            hi,
            first: start as u32,
            count: (end - start) as u32,
            right: 0,
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let extent = chi - clo;
        let axis = extent.imax();
        let mid = start + (end - start) / 2;
        order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a as usize][axis]
                .total_cmp(&centroids[b as usize][axis])
                .then(a.cmp(&b))
        });
        let left = Self::build_node(tris, centroids, order, start, mid, nodes);
        let right = Self::build_node(tris, centroids, order, mid, end, nodes);
        let node = &mut nodes[id as usize];
        node.first = left;
        node.count = 0;
        node.right = right;
        id
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.count > 0).count()
    }

    /// Triangle indices referenced by leaves, in leaf order.
    pub fn leaf_triangles(&self) -> Vec<u32> {
        let mut out = Vec::new();
        for n in self.nodes.iter().filter(|n| n.count > 0) {
            out.extend_from_slice(&self.order[n.first as usize..(n.first + n.count) as usize]);
        }
        out
    }

    /// Checks that every node's box contains its subtree.
    pub fn boxes_nest(&self, triangles: &[[Vec3; 3]]) -> bool {
        let inside =
            |lo: &Vec3, hi: &Vec3, p: &Vec3| (0..3).all(|k| p[k] >= lo[k] && p[k] <= hi[k]);
        self.nodes.iter().all(|n| {
            if n.count > 0 {
                self.order[n.first as usize..(n.first + n.count) as usize]
                    .iter()
                    .all(|&t| {
                        triangles[t as usize]
                            .iter()
                            .all(|v| inside(&n.lo, &n.hi, v))
                    })
            } else {
                [n.first, n.right].iter().all(|&c| {
                    let ch = &self.nodes[c as usize];
                    inside(&n.lo, &n.hi, &ch.lo) && inside(&n.lo, &n.hi, &ch.hi)
                })
            }
        })
    }

    /// Nearest triangle by squared distance; ties go to the lower index.
    fn nearest(&self, triangles: &[[Vec3; 3]], p: &Vec3) -> (u32, f64) {
        let mut best = (u32::MAX, f64::INFINITY);
        if self.nodes.is_empty() {
            return best;
        }
        let mut stack: Vec<(u32, f64)> = Vec::with_capacity(64);
        stack.push((0, box_distance2(&self.nodes[0].lo, &self.nodes[0].hi, p)));
        while let Some((id, d_box)) = stack.pop() {
            if d_box > best.1 {
                continue;
            }
            let node = &self.nodes[id as usize];
            if node.count > 0 {
                for &t in &self.order[node.first as usize..(node.first + node.count) as usize] {
                    let [a, b, c] = &triangles[t as usize];
                    let (q, _) = closest_point_on_triangle(p, a, b, c);
                    let d2 = (p - q).norm_squared();
                    if d2 < best.1 || (d2 == best.1 && t < best.0) {
                        best = (t, d2);
                    }
                }
            } else {
                let (l, r) = (node.first, node.right);
                let dl = box_distance2(&self.nodes[l as usize].lo, &self.nodes[l as usize].hi, p);
                let dr = box_distance2(&self.nodes[r as usize].lo, &self.nodes[r as usize].hi, p);
                if dl <= dr {
                    stack.push((r, dr));
                    stack.push((l, dl));
                } else {
                    stack.push((l, dl));
                    stack.push((r, dr));
                }
            }
        }
        best
    }
}

/// Result of a closest-point query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Closest {
    pub point: Vec3,
    pub face: u32,
    pub feature: Feature,
    pub distance: f64,
    /// Signed distance: negative inside the mesh.
    pub signed: f64,
}

/// Ground-truth SDF of a watertight mesh, immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct SdfOracle {
    mesh: TriMesh,
    triangles: Vec<[Vec3; 3]>,
    bvh: Bvh,
    vertex_normals: Vec<Vec3>,
    /// Pseudonormal of edge `k` of each face.
    edge_normals: Vec<[Vec3; 3]>,
}

impl SdfOracle {
    /// Builds the BVH and pseudonormals. Fails when the winding encloses
    /// negative volume.
    pub fn new(mesh: TriMesh) -> Result<Self> {
        let volume = mesh.signed_volume();
        if volume < 0.0 {
            return Err(Error::InvertedWinding(volume));
        }
        let triangles: Vec<[Vec3; 3]> = (0..mesh.num_triangles())
            .map(|f| mesh.triangle(f))
            .collect();
        let bvh = Bvh::build(&triangles);

        let mut vertex_normals = vec![Vec3::zeros(); mesh.vertices().len()];
        let mut edge_sum: HashMap<(u32, u32), Vec3> = HashMap::new();
        for (f, tri) in mesh.triangles().iter().enumerate() {
            let n = mesh.face_normals()[f];
            let corners = &triangles[f];
            for k in 0..3 {
                let (prev, cur, next) = (&corners[(k + 2) % 3], &corners[k], &corners[(k + 1) % 3]);
                let e1 = (next - cur).normalize();
                let e2 = (prev - cur).normalize();
                let angle = e1.dot(&e2).clamp(-1.0, 1.0).acos();
                vertex_normals[tri[k] as usize] += n * angle;
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edge_sum
                    .entry((a.min(b), a.max(b)))
                    .or_insert_with(Vec3::zeros) += n;
            }
        }
        let edge_normals = mesh
            .triangles()
            .iter()
            .map(|tri| {
                [0, 1, 2].map(|k| {
                    let (a, b) = (tri[k], tri[(k + 1) % 3]);
                    edge_sum[&(a.min(b), a.max(b))]
                })
            })
            .collect();
        Ok(Self {
            mesh,
            triangles,
            bvh,
            vertex_normals,
            edge_normals,
        })
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    fn resolve(&self, p: &Vec3, face: u32) -> Closest {
        let [a, b, c] = &self.triangles[face as usize];
        let (q, feature) = closest_point_on_triangle(p, a, b, c);
        let pseudo = match feature {
            Feature::Face => self.mesh.face_normals()[face as usize],
            Feature::Edge(k) => self.edge_normals[face as usize][k as usize],
            Feature::Vertex(k) => {
                self.vertex_normals[self.mesh.triangles()[face as usize][k as usize] as usize]
            }
        };
        let offset = p - q;
        let distance = offset.norm();
        let signed = if offset.dot(&pseudo) < 0.0 {
            -distance
        } else {
            distance
        };
        Closest {
            point: q,
            face,
            feature,
            distance,
            signed,
        }
    }

    pub fn closest(&self, p: &Vec3) -> Closest {
        let (face, _) = self.bvh.nearest(&self.triangles, p);
        self.resolve(p, face)
    }

    /// Linear scan over all triangles; same tie-breaking as the BVH path.
    pub fn closest_brute_force(&self, p: &Vec3) -> Closest {
        let mut best = (u32::MAX, f64::INFINITY);
        for (t, [a, b, c]) in self.triangles.iter().enumerate() {
            let (q, _) = closest_point_on_triangle(p, a, b, c);
            let d2 = (p - q).norm_squared();
            if d2 < best.1 {
                best = (t as u32, d2);
            }
        }
        self.resolve(p, best.0)
    }

    /// Untruncated signed distance, negative inside.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.closest(p).signed
    }

    /// Signed distance clamped to `[-0.1, 0.1]`.
    pub fn truncated_sdf(&self, p: &Vec3) -> f64 {
        self.signed_distance(p).clamp(-TRUNCATION, TRUNCATION)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::normalize_mesh;
    use crate::shapes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, half: f64, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-half..half),
                    rng.gen_range(-half..half),
                    rng.gen_range(-half..half),
                )
            })
            .collect()
    }

    #[test]
    fn single_triangle_single_leaf() {
        let m = TriMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::y()], vec![[0, 1, 2]]).unwrap();
        let tris = vec![m.triangle(0)];
        let bvh = Bvh::build(&tris);
        assert_eq!(bvh.node_count(), 1);
        assert_eq!(bvh.leaf_count(), 1);
        let oracle = SdfOracle::new(m).unwrap();
        assert!((oracle.signed_distance(&Vec3::new(0.2, 0.2, 0.5)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bvh_references_each_triangle_once_and_nests() {
        let m = shapes::torus(0.25, 0.08, 40, 16);
        let tris: Vec<[Vec3; 3]> = (0..m.num_triangles()).map(|f| m.triangle(f)).collect();
        let bvh = Bvh::build(&tris);
        let mut seen = bvh.leaf_triangles();
        seen.sort_unstable();
        assert_eq!(seen, (0..m.num_triangles() as u32).collect::<Vec<_>>());
        assert!(bvh.boxes_nest(&tris));
    }

    #[test]
    fn bvh_matches_brute_force_exactly() {
        let m = shapes::icosphere(0.3, 3);
        let oracle = SdfOracle::new(m).unwrap();
        for p in random_points(1000, 0.6, 1) {
            let fast = oracle.closest(&p);
            let slow = oracle.closest_brute_force(&p);
            assert_eq!(fast.face, slow.face);
            assert_eq!(fast.signed, slow.signed);
        }
    }

    #[test]
    fn sphere_center_is_minus_radius() {
        let oracle = SdfOracle::new(shapes::icosphere(0.3, 4)).unwrap();
        let d = oracle.signed_distance(&Vec3::zeros());
        assert!((d + 0.3).abs() < 0.01, "{d}");
    }

    #[test]
    fn vertex_query_is_zero() {
        let m = shapes::icosphere(0.3, 2);
        let v = m.vertices()[17];
        let oracle = SdfOracle::new(m).unwrap();
        assert!(oracle.signed_distance(&v).abs() < 1e-9);
        assert!(oracle.truncated_sdf(&v).abs() < 1e-9);
    }

    #[test]
    fn far_point_positive() {
        let m = normalize_mesh(&shapes::box_with_fin()).unwrap();
        let oracle = SdfOracle::new(m).unwrap();
        let d = oracle.signed_distance(&Vec3::new(10.0, 0.0, 0.0));
        assert!(d >= 9.5);
        assert_eq!(oracle.truncated_sdf(&Vec3::new(10.0, 0.0, 0.0)), 0.1);
    }

    #[test]
    fn truncation_band() {
        let oracle = SdfOracle::new(shapes::icosphere(0.3, 4)).unwrap();
        // Radius 0.3 sphere: a point at radius 0.8 is 0.5 outside.
        assert_eq!(oracle.truncated_sdf(&Vec3::new(0.8, 0.0, 0.0)), 0.1);
        let inner = oracle.truncated_sdf(&Vec3::new(0.0, 0.0, 0.28));
        assert!((inner + 0.02).abs() < 2e-3, "{inner}");
        for p in random_points(500, 1.0, 9) {
            assert!(oracle.truncated_sdf(&p).abs() <= 0.1);
        }
    }

    #[test]
    fn inverted_winding_rejected() {
        let cube = shapes::axis_box(Vec3::repeat(-0.2), Vec3::repeat(0.2), 2);
        assert!(matches!(
            SdfOracle::new(cube.flipped()),
            Err(Error::InvertedWinding(_))
        ));
    }

    #[test]
    fn sign_flips_once_along_rays_through_convex_shape() {
        // A ray through the centre of a convex solid enters and leaves once:
        // the sign sequence along it must read + ... - ... +.
        let oracle = SdfOracle::new(shapes::icosphere(0.3, 3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let dir = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .normalize();
            let signs: Vec<bool> = (0..401)
                .map(|i| oracle.signed_distance(&(dir * (-0.5 + i as f64 / 400.0))) < 0.0)
                .collect();
            let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
            assert_eq!(changes, 2);
        }
    }

    #[test]
    fn sign_matches_ray_parity_on_nonconvex_mesh() {
        let m = normalize_mesh(&shapes::torus(0.25, 0.08, 48, 16)).unwrap();
        let oracle = SdfOracle::new(m.clone()).unwrap();
        let tris: Vec<[Vec3; 3]> = (0..m.num_triangles()).map(|f| m.triangle(f)).collect();
        // Möller-Trumbore crossing count along +x from each point.
        let crossings = |o: &Vec3, d: &Vec3| -> usize {
            tris.iter()
                .filter(|[a, b, c]| {
                    let e1 = b - a;
                    let e2 = c - a;
                    let h = d.cross(&e2);
                    let det = e1.dot(&h);
                    if det.abs() < 1e-14 {
                        return false;
                    }
                    let s = o - a;
                    let u = s.dot(&h) / det;
                    let q = s.cross(&e1);
                    let v = d.dot(&q) / det;
                    let t = e2.dot(&q) / det;
                    u >= 0.0 && v >= 0.0 && u + v <= 1.0 && t > 0.0
                })
                .count()
        };
        let dir = Vec3::new(1.0, 0.1234, 0.0567).normalize();
        for p in random_points(100, 0.45, 21) {
            let d = oracle.signed_distance(&p);
            if d.abs() < 1e-6 {
                continue;
            }
            let inside = crossings(&p, &dir) % 2 == 1;
            assert_eq!(inside, d < 0.0, "point {p:?} sdf {d}");
        }
    }
}
