//! Chamfer and Hausdorff distances between sampled surfaces.

use crate::error::{Error, Result};
use crate::mesh::{normalize_mesh, sample_surface, TriMesh};
use crate::par;
use crate::spatial::KdTree;
use crate::Vec3;

pub const DEFAULT_SAMPLES: usize = 100_000;

/// Squared nearest-neighbour distance from every point of `from` to `to`.
pub fn nearest_sq_distances(from: &[Vec3], to: &[Vec3]) -> Result<Vec<f64>> {
    if from.is_empty() || to.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let tree = KdTree::new(to);
    Ok(par::map_slice(from, |p| {
        tree.nearest(p).expect("tree is non-empty").1
    }))
}

/// Both directed distance sets between two clouds.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudDistances {
    pub a_to_b: Vec<f64>,
    pub b_to_a: Vec<f64>,
}

impl CloudDistances {
    pub fn new(a: &[Vec3], b: &[Vec3]) -> Result<Self> {
        Ok(Self {
            a_to_b: nearest_sq_distances(a, b)?,
            b_to_a: nearest_sq_distances(b, a)?,
        })
    }

    /// Mean squared distance A to B plus mean squared distance B to A.
    pub fn chamfer(&self) -> f64 {
        mean(&self.a_to_b) + mean(&self.b_to_a)
    }

    /// Largest nearest-neighbour distance in either direction.
    pub fn hausdorff(&self) -> f64 {
        self.a_to_b
            .iter()
            .chain(&self.b_to_a)
            .fold(0.0f64, |m, &d| m.max(d))
            .sqrt()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn chamfer_points(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    Ok(CloudDistances::new(a, b)?.chamfer())
}

pub fn hausdorff_points(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    Ok(CloudDistances::new(a, b)?.hausdorff())
}

/// Samples `n` points on each mesh with the same seed.
pub fn mesh_distances(
    a: &TriMesh,
    b: &TriMesh,
    n: usize,
    seed: u64,
    normalize: bool,
) -> Result<CloudDistances> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let (a, b) = if normalize {
        (normalize_mesh(a)?, normalize_mesh(b)?)
    } else {
        (a.clone(), b.clone())
    };
    let pa = sample_surface(&a, n, seed)?;
    let pb = sample_surface(&b, n, seed)?;
    CloudDistances::new(&pa.points, &pb.points)
}

pub fn chamfer(a: &TriMesh, b: &TriMesh, n: usize, seed: u64) -> Result<f64> {
    Ok(mesh_distances(a, b, n, seed, true)?.chamfer())
}

pub fn hausdorff(a: &TriMesh, b: &TriMesh, n: usize, seed: u64) -> Result<f64> {
    Ok(mesh_distances(a, b, n, seed, true)?.hausdorff())
}
