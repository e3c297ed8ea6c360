//! Triangle soup meshes: validation, normalization and surface sampling.

mod io;
mod sampling;

pub use io::{load_mesh, parse_obj, parse_stl, save_mesh, write_obj, write_stl_binary};
pub use sampling::{apportion_by_area, sample_surface, SurfaceSamples};

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::Vec3;

/// Triangles with area at or below this are dropped on construction.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Indexed triangle mesh with per-face unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    face_normals: Vec<Vec3>,
}

impl TriMesh {
    /// Builds a mesh, dropping degenerate triangles.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (face, tri) in triangles.iter().enumerate() {
            for &index in tri {
                if index as usize >= n {
                    return Err(Error::IndexOutOfRange {
                        face,
                        index: index as usize,
                        count: n,
                    });
                }
            }
        }
        let mut kept = Vec::with_capacity(triangles.len());
        let mut face_normals = Vec::with_capacity(triangles.len());
        for tri in triangles {
            let [a, b, c] = tri.map(|i| vertices[i as usize]);
            let cross = (b - a).cross(&(c - a));
            let area = 0.5 * cross.norm();
            if area > DEGENERATE_AREA {
                kept.push(tri);
                face_normals.push(cross / (2.0 * area));
            }
        }
        if kept.is_empty() {
            return Err(Error::EmptyMesh);
        }
        Ok(Self {
            vertices,
            triangles: kept,
            face_normals,
        })
    }

    /// Keeps every face, degenerate ones included (their normal is zero), and
    /// allows an empty mesh. Indices must be in range.
    pub fn from_raw_parts(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len();
        let mut face_normals = Vec::with_capacity(triangles.len());
        for (face, tri) in triangles.iter().enumerate() {
            if let Some(&index) = tri.iter().find(|&&i| i as usize >= n) {
                return Err(Error::IndexOutOfRange {
                    face,
                    index: index as usize,
                    count: n,
                });
            }
            let [a, b, c] = tri.map(|i| vertices[i as usize]);
            let cross = (b - a).cross(&(c - a));
            let len = cross.norm();
            face_normals.push(if len > 0.0 {
                cross / len
            } else {
                Vec3::zeros()
            });
        }
        Ok(Self {
            vertices,
            triangles,
            face_normals,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn face_normals(&self) -> &[Vec3] {
        &self.face_normals
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        self.triangles[face].map(|i| self.vertices[i as usize])
    }

    pub fn triangle_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.num_triangles())
            .map(|f| self.triangle_area(f))
            .sum()
    }

    /// Signed enclosed volume; positive for outward-facing winding.
    pub fn signed_volume(&self) -> f64 {
        (0..self.num_triangles())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Axis-aligned bounds over all vertices.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    /// Number of undirected edges not shared by exactly two triangles.
    pub fn non_manifold_edge_count(&self) -> usize {
        let mut counts: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        counts.values().filter(|&&c| c != 2).count()
    }

    /// True when every edge is shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        self.non_manifold_edge_count() == 0
    }

    /// Applies `f` to every vertex, keeping topology.
    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> Result<Self> {
        Self::new(
            self.vertices.iter().map(f).collect(),
            self.triangles.clone(),
        )
    }

    /// Same triangles with reversed winding.
    pub fn flipped(&self) -> Self {
        Self {
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|t| [t[0], t[2], t[1]]).collect(),
            face_normals: self.face_normals.iter().map(|n| -n).collect(),
        }
    }
}

/// Centers the bounding box on the origin and scales its diagonal to 1.
pub fn normalize_mesh(mesh: &TriMesh) -> Result<TriMesh> {
    let (lo, hi) = mesh.bounds();
    let diagonal = (hi - lo).norm();
    if diagonal.is_nan() || diagonal <= 0.0 {
        return Err(Error::ZeroExtent);
    }
    let center = (hi + lo) * 0.5;
    mesh.map_vertices(|v| (v - center) / diagonal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    fn single_triangle() -> TriMesh {
        TriMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn single_triangle_normal_points_up() {
        let m = single_triangle();
        assert_eq!(m.num_triangles(), 1);
        assert!((m.face_normals()[0] - Vec3::z()).norm() < 1e-15);
    }

    #[test]
    fn degenerate_faces_are_dropped() {
        let m = TriMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(2.0, 0.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 1, 3]],
        )
        .unwrap();
        assert_eq!(m.num_triangles(), 1);
    }

    #[test]
    fn all_degenerate_is_empty() {
        let err = TriMesh::new(vec![Vec3::zeros(); 3], vec![[0, 1, 2]]).unwrap_err();
        assert!(matches!(err, Error::EmptyMesh));
    }

    #[test]
    fn bad_index_rejected() {
        let err = TriMesh::new(vec![Vec3::zeros(); 3], vec![[0, 1, 7]]).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { index: 7, .. }));
    }

    #[test]
    fn unit_cube_normalizes_to_unit_diagonal() {
        let cube = shapes::axis_box(Vec3::zeros(), Vec3::repeat(1.0), 1);
        let n = normalize_mesh(&cube).unwrap();
        let (lo, hi) = n.bounds();
        let half = 1.0 / (2.0 * 3f64.sqrt());
        for k in 0..3 {
            assert!((hi[k] - half).abs() < 1e-15);
            assert!((lo[k] + half).abs() < 1e-15);
        }
        assert!(((hi - lo).norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normalization_is_idempotent() {
        let m =
            shapes::torus(0.7, 0.2, 24, 12).map_vertices(|v| v * 3.0 + Vec3::new(1.0, -2.0, 0.5));
        let once = normalize_mesh(&m.unwrap()).unwrap();
        let twice = normalize_mesh(&once).unwrap();
        for (a, b) in once.vertices().iter().zip(twice.vertices()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn flat_mesh_uses_all_extents() {
        // Every vertex has x = 2; extents (0, 3, 4) give diagonal 5.
        let m = TriMesh::new(
            vec![
                Vec3::new(2.0, 0.0, 0.0),
                Vec3::new(2.0, 3.0, 0.0),
                Vec3::new(2.0, 0.0, 4.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let n = normalize_mesh(&m).unwrap();
        let (lo, hi) = n.bounds();
        assert!((hi - lo - Vec3::new(0.0, 0.6, 0.8)).norm() < 1e-15);
        assert!(((hi + lo) * 0.5).norm() < 1e-15);
    }

    #[test]
    fn zero_extent_rejected() {
        // Construction drops degenerate faces, so build a valid mesh then collapse it.
        let m = single_triangle();
        let collapsed = TriMesh {
            vertices: vec![Vec3::repeat(0.3); 3],
            ..m
        };
        assert!(matches!(normalize_mesh(&collapsed), Err(Error::ZeroExtent)));
    }

    #[test]
    fn normalized_vertices_lie_in_half_ball() {
        let m = shapes::box_with_fin();
        let n = normalize_mesh(&m).unwrap();
        assert!(n.vertices().iter().all(|v| v.amax() <= 0.5));
    }

    #[test]
    fn closed_shapes_have_positive_volume() {
        for m in [
            shapes::icosphere(0.3, 2),
            shapes::torus(0.25, 0.08, 32, 12),
            shapes::box_with_fin(),
        ] {
            assert!(m.is_closed());
            assert!(m.signed_volume() > 0.0);
            assert!(m.flipped().signed_volume() < 0.0);
        }
    }
}
