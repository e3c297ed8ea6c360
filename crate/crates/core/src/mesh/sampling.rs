use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TriMesh;
use crate::error::{Error, Result};
use crate::par;
use crate::Vec3;

/// Points on a mesh surface with the face normal of their source triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSamples {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub source_face: Vec<u32>,
}

impl SurfaceSamples {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn from_points(points: Vec<Vec3>, normals: Vec<Vec3>) -> Self {
        let n = points.len();
        Self {
            points,
            normals,
            source_face: vec![0; n],
        }
    }
}

/// Split of `count` proportional to `weights`: every entry gets the floor
/// of its quota, and the leftover goes out by systematic sampling over the
/// cumulative fractional remainders, starting at `offset` in `[0, 1)`.
/// Each share is the floor or ceiling of its quota, and any index-contiguous
/// run of entries receives its summed quota to within one.
pub fn apportion_by_area(weights: &[f64], count: usize, offset: f64) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    if weights.is_empty() || total.is_nan() || total <= 0.0 {
        return vec![0; weights.len()];
    }
    let mut shares = Vec::with_capacity(weights.len());
    let mut remainders = Vec::with_capacity(weights.len());
    let mut assigned = 0usize;
    for w in weights {
        let quota = count as f64 * w / total;
        let floor = quota.floor() as usize;
        shares.push(floor);
        remainders.push(quota - floor as f64);
        assigned += floor;
    }
    let leftover = count.saturating_sub(assigned);
    let mut given = 0usize;
    let mut next = offset.clamp(0.0, 1.0 - f64::EPSILON);
    let mut acc = 0.0;
    for (share, &r) in shares.iter_mut().zip(&remainders) {
        acc += r;
        if given < leftover && next < acc {
            *share += 1;
            given += 1;
            next += 1.0;
        }
    }
    // Rounding drift can leave a few unassigned; hand them to the largest
    // remainders that were skipped.
    if given < leftover {
        let mut order: Vec<usize> = (0..weights.len())
            .filter(|&i| shares[i] as f64 <= count as f64 * weights[i] / total)
            .collect();
        order.sort_by(|&a, &b| remainders[b].total_cmp(&remainders[a]).then(a.cmp(&b)));
        for &i in order.iter().cycle().take(leftover - given) {
            shares[i] += 1;
        }
    }
    shares
}

/// Area-proportional uniform sampling. Each triangle draws from its own
/// ChaCha stream keyed by `(seed, face)`, so the result does not depend on
/// thread scheduling.
pub fn sample_surface(mesh: &TriMesh, count: usize, seed: u64) -> Result<SurfaceSamples> {
    if count == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    let areas: Vec<f64> = (0..mesh.num_triangles())
        .map(|f| mesh.triangle_area(f))
        .collect();
    let total_area: f64 = areas.iter().sum();
    if total_area.is_nan() || total_area <= 0.0 {
        return Err(Error::EmptyMesh);
    }
    let offset: f64 = {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        rng.gen()
    };
    let shares = apportion_by_area(&areas, count, offset);
    let per_face: Vec<Vec<Vec3>> = par::map_range(mesh.num_triangles(), |face| {
        let k = shares[face];
        if k == 0 {
            return Vec::new();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(face as u64);
        let [a, b, c] = mesh.triangle(face);
        (0..k)
            .map(|_| {
                let r1: f64 = rng.gen();
                let r2: f64 = rng.gen();
                let s = r1.sqrt();
                a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2)
            })
            .collect()
    });
    let mut out = SurfaceSamples {
        points: Vec::with_capacity(count),
        normals: Vec::with_capacity(count),
        source_face: Vec::with_capacity(count),
    };
    for (face, pts) in per_face.into_iter().enumerate() {
        let n = mesh.face_normals()[face];
        for p in pts {
            out.points.push(p);
            out.normals.push(n);
            out.source_face.push(face as u32);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    fn two_triangles(ratio: f64) -> TriMesh {
        // Areas 0.5 and 0.5 * ratio, far apart.
        TriMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(5.0, 0.0, 0.0),
                Vec3::new(5.0 + ratio, 0.0, 0.0),
                Vec3::new(5.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap()
    }

    fn face_counts(s: &SurfaceSamples, faces: usize) -> Vec<usize> {
        let mut c = vec![0; faces];
        for &f in &s.source_face {
            c[f as usize] += 1;
        }
        c
    }

    #[test]
    fn exact_proportional_split() {
        let m = two_triangles(3.0);
        let s = sample_surface(&m, 4, 7).unwrap();
        assert_eq!(face_counts(&s, 2), vec![1, 3]);
    }

    #[test]
    fn apportionment_floor_or_ceiling() {
        assert_eq!(apportion_by_area(&[1.0, 3.0], 4, 0.9), vec![1, 3]);
        for offset in [0.0, 0.2, 0.5, 0.99] {
            let s = apportion_by_area(&[1.0, 1.0, 1.0], 4, offset);
            assert_eq!(s.iter().sum::<usize>(), 4);
            assert!(s.iter().all(|&k| k == 1 || k == 2));
            let w = [0.2, 0.3, 0.5, 0.013, 0.7];
            let s = apportion_by_area(&w, 7, offset);
            assert_eq!(s.iter().sum::<usize>(), 7);
            let total: f64 = w.iter().sum();
            for (k, wi) in s.iter().zip(w) {
                let q = 7.0 * wi / total;
                assert!(*k as f64 >= q.floor() && *k as f64 <= q.ceil());
            }
        }
    }

    #[test]
    fn sparse_samples_spread_over_equal_triangles() {
        // 100 x 100 unit cells, two triangles each, 5000 samples: every
        // 10 x 10 block expects 50. A block spans 10 index-contiguous runs,
        // each within one of its quota.
        let n = 100;
        let mut vertices = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                vertices.push(Vec3::new(i as f64, j as f64, 0.0));
            }
        }
        let v = |i: usize, j: usize| (j * (n + 1) + i) as u32;
        let mut triangles = Vec::new();
        for j in 0..n {
            for i in 0..n {
                triangles.push([v(i, j), v(i + 1, j), v(i + 1, j + 1)]);
                triangles.push([v(i, j), v(i + 1, j + 1), v(i, j + 1)]);
            }
        }
        let m = TriMesh::new(vertices, triangles).unwrap();
        let s = sample_surface(&m, 5000, 11).unwrap();
        let mut blocks = vec![0usize; 100];
        for p in &s.points {
            let bx = ((p.x / 10.0) as usize).min(9);
            let by = ((p.y / 10.0) as usize).min(9);
            blocks[by * 10 + bx] += 1;
        }
        for &b in &blocks {
            assert!((40..=60).contains(&b), "{blocks:?}");
        }
    }

    #[test]
    fn ten_per_triangle_default_count() {
        let m = shapes::icosphere(0.3, 3);
        let s = sample_surface(&m, 10 * m.num_triangles(), 0).unwrap();
        assert_eq!(s.len(), 10 * m.num_triangles());
    }

    #[test]
    fn samples_lie_on_source_triangles() {
        let m = shapes::torus(0.25, 0.08, 24, 10);
        let s = sample_surface(&m, 5000, 3).unwrap();
        for ((p, n), &f) in s.points.iter().zip(&s.normals).zip(&s.source_face) {
            let [a, b, c] = m.triangle(f as usize);
            // Solve barycentric coordinates by least squares on the triangle plane.
            let (e1, e2, d) = (b - a, c - a, p - a);
            let (d11, d12, d22) = (e1.dot(&e1), e1.dot(&e2), e2.dot(&e2));
            let (r1, r2) = (d.dot(&e1), d.dot(&e2));
            let det = d11 * d22 - d12 * d12;
            let v = (d22 * r1 - d12 * r2) / det;
            let w = (d11 * r2 - d12 * r1) / det;
            let recon = a + e1 * v + e2 * w;
            assert!((recon - p).norm() < 1e-9);
            assert!(v >= -1e-9 && w >= -1e-9 && v + w <= 1.0 + 1e-9);
            assert!((n.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn seed_determinism() {
        let m = shapes::icosphere(0.3, 2);
        let a = sample_surface(&m, 3333, 42).unwrap();
        let b = sample_surface(&m, 3333, 42).unwrap();
        let c = sample_surface(&m, 3333, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.points, c.points);
    }

    #[test]
    fn sequential_pool_gives_identical_samples() {
        let m = shapes::icosphere(0.3, 2);
        let a = sample_surface(&m, 2000, 5).unwrap();
        let b = par::with_threads(1, || sample_surface(&m, 2000, 5).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn empirical_ratio_tracks_area_ratio() {
        // Apportionment is deterministic, so the ratio holds far inside 5%.
        let r = 2.5;
        let m = two_triangles(r);
        let s = sample_surface(&m, 100_000, 1).unwrap();
        let c = face_counts(&s, 2);
        let ratio = c[1] as f64 / c[0] as f64;
        assert!((ratio - r).abs() <= 0.05 * r);
    }

    #[test]
    fn sample_mean_near_centroid() {
        let m = TriMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 2.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let n = 20_000;
        let s = sample_surface(&m, n, 11).unwrap();
        let mean = s.points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / n as f64;
        let centroid = Vec3::new(1.0 / 3.0, 2.0 / 3.0, 0.0);
        // Per-axis variance of a uniform triangle: (a² + b² + c² - ab - ac - bc) / 18.
        let var = |a: f64, b: f64, c: f64| (a * a + b * b + c * c - a * b - a * c - b * c) / 18.0;
        let sx = (var(0.0, 1.0, 0.0) / n as f64).sqrt();
        let sy = (var(0.0, 0.0, 2.0) / n as f64).sqrt();
        assert!((mean.x - centroid.x).abs() < 3.0 * sx);
        assert!((mean.y - centroid.y).abs() < 3.0 * sy);
    }

    #[test]
    fn zero_count_rejected() {
        assert!(sample_surface(&shapes::icosphere(1.0, 0), 0, 0).is_err());
    }
}
