//! Procedural watertight meshes used by tests, benchmarks and the acceptance suite.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mesh::TriMesh;
use crate::Vec3;

fn build(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> TriMesh {
    let mesh = TriMesh::new(vertices, triangles).expect("procedural mesh is valid");
    if mesh.signed_volume() < 0.0 {
        mesh.flipped()
    } else {
        mesh
    }
}

/// Subdivided icosahedron projected onto a sphere; `20 * 4^k` faces.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vec3>| -> u32 {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalize());
                (verts.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    build(verts.into_iter().map(|v| v * radius).collect(), faces)
}

/// Ring torus around the z axis.
pub fn torus(major: f64, minor: f64, major_segments: usize, minor_segments: usize) -> TriMesh {
    let (nu, nv) = (major_segments.max(3), minor_segments.max(3));
    let mut verts = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = std::f64::consts::TAU * i as f64 / nu as f64;
        for j in 0..nv {
            let v = std::f64::consts::TAU * j as f64 / nv as f64;
            let r = major + minor * v.cos();
            verts.push(Vec3::new(r * u.cos(), r * u.sin(), minor * v.sin()));
        }
    }
    let id = |i: usize, j: usize| ((i % nu) * nv + (j % nv)) as u32;
    let mut faces = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    build(verts, faces)
}

/// Boundary of a union of cells on a rectilinear lattice.
///
/// `xs`, `ys`, `zs` are sorted breakpoints; `occupied(i, j, k)` selects the
/// cell `[xs[i], xs[i+1]] x ...`. All faces share lattice vertices, so the
/// result has no T-junctions. Cells touching only along an edge produce
/// non-manifold edges and must be avoided by the caller.
pub fn lattice_solid(
    xs: &[f64],
    ys: &[f64],
    zs: &[f64],
    occupied: impl Fn(usize, usize, usize) -> bool,
) -> TriMesh {
    let (nx, ny, nz) = (xs.len() - 1, ys.len() - 1, zs.len() - 1);
    let cell = |i: isize, j: isize, k: isize| -> bool {
        i >= 0
            && j >= 0
            && k >= 0
            && (i as usize) < nx
            && (j as usize) < ny
            && (k as usize) < nz
            && occupied(i as usize, j as usize, k as usize)
    };
    let mut index: HashMap<(usize, usize, usize), u32> = HashMap::new();
    let mut verts = Vec::new();
    let mut vid = |i: usize, j: usize, k: usize, verts: &mut Vec<Vec3>| -> u32 {
        *index.entry((i, j, k)).or_insert_with(|| {
            verts.push(Vec3::new(xs[i], ys[j], zs[k]));
            (verts.len() - 1) as u32
        })
    };
    let mut faces = Vec::new();
    let mut quad = |q: [(usize, usize, usize); 4],
                    positive: bool,
                    verts: &mut Vec<Vec3>,
                    faces: &mut Vec<[u32; 3]>| {
        let ids = q.map(|(i, j, k)| vid(i, j, k, verts));
        if positive {
            faces.push([ids[0], ids[1], ids[2]]);
            faces.push([ids[0], ids[2], ids[3]]);
        } else {
            faces.push([ids[0], ids[2], ids[1]]);
            faces.push([ids[0], ids[3], ids[2]]);
        }
    };
    for i in 0..=nx {
        for j in 0..ny {
            for k in 0..nz {
                let (a, b) = (
                    cell(i as isize - 1, j as isize, k as isize),
                    cell(i as isize, j as isize, k as isize),
                );
                if a != b {
                    quad(
                        [(i, j, k), (i, j + 1, k), (i, j + 1, k + 1), (i, j, k + 1)],
                        a,
                        &mut verts,
                        &mut faces,
                    );
                }
            }
        }
    }
    for j in 0..=ny {
        for k in 0..nz {
            for i in 0..nx {
                let (a, b) = (
                    cell(i as isize, j as isize - 1, k as isize),
                    cell(i as isize, j as isize, k as isize),
                );
                if a != b {
                    quad(
                        [(i, j, k), (i, j, k + 1), (i + 1, j, k + 1), (i + 1, j, k)],
                        a,
                        &mut verts,
                        &mut faces,
                    );
                }
            }
        }
    }
    for k in 0..=nz {
        for i in 0..nx {
            for j in 0..ny {
                let (a, b) = (
                    cell(i as isize, j as isize, k as isize - 1),
                    cell(i as isize, j as isize, k as isize),
                );
                if a != b {
                    quad(
                        [(i, j, k), (i + 1, j, k), (i + 1, j + 1, k), (i, j + 1, k)],
                        a,
                        &mut verts,
                        &mut faces,
                    );
                }
            }
        }
    }
    build(verts, faces)
}

/// Sorted breakpoints covering `[lo, hi]` with spacing at most `step`,
/// always including every value in `required` that falls inside.
pub fn breakpoints(lo: f64, hi: f64, step: f64, required: &[f64]) -> Vec<f64> {
    let n = ((hi - lo) / step).ceil().max(1.0) as usize;
    let mut v: Vec<f64> = (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .collect();
    v.extend(required.iter().copied().filter(|&r| r >= lo && r <= hi));
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    v
}

/// Axis-aligned box with `n` lattice cells per axis.
pub fn axis_box(lo: Vec3, hi: Vec3, n: usize) -> TriMesh {
    let axis = |k: usize| breakpoints(lo[k], hi[k], (hi[k] - lo[k]) / n.max(1) as f64, &[]);
    lattice_solid(&axis(0), &axis(1), &axis(2), |_, _, _| true)
}

/// Geometry of [`box_with_fin`], before normalization.
pub mod fin {
    /// Box spans `[-0.25, 0.15] x [-0.15, 0.15] x [-0.15, 0.15]`.
    pub const BOX_LO: [f64; 3] = [-0.25, -0.15, -0.15];
    pub const BOX_HI: [f64; 3] = [0.15, 0.15, 0.15];
    /// Fin extends from the +x face.
    pub const FIN_LO: [f64; 3] = [0.15, -0.002, -0.1];
    pub const FIN_HI: [f64; 3] = [0.35, 0.002, 0.1];
    pub const THICKNESS: f64 = 0.004;
}

/// Box with a 0.004-thick plate attached to its +x face.
pub fn box_with_fin() -> TriMesh {
    box_with_fin_step(0.0125)
}

pub fn box_with_fin_step(step: f64) -> TriMesh {
    use fin::*;
    let xs = breakpoints(BOX_LO[0], FIN_HI[0], step, &[BOX_HI[0]]);
    let ys = breakpoints(BOX_LO[1], BOX_HI[1], step, &[FIN_LO[1], FIN_HI[1]]);
    let zs = breakpoints(BOX_LO[2], BOX_HI[2], step, &[FIN_LO[2], FIN_HI[2]]);
    let mid = |v: &[f64], i: usize| 0.5 * (v[i] + v[i + 1]);
    let inside =
        |p: [f64; 3], lo: [f64; 3], hi: [f64; 3]| (0..3).all(|k| p[k] > lo[k] && p[k] < hi[k]);
    lattice_solid(&xs, &ys, &zs, |i, j, k| {
        let c = [mid(&xs, i), mid(&ys, j), mid(&zs, k)];
        inside(c, BOX_LO, BOX_HI) || inside(c, FIN_LO, FIN_HI)
    })
}

/// Star-shaped blob: an icosphere with smooth random radial bumps.
pub fn random_blob(seed: u64, subdivisions: u32) -> TriMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = rng.gen_range(0.2..0.4);
    let stretch = Vec3::new(
        rng.gen_range(0.6..1.4),
        rng.gen_range(0.6..1.4),
        rng.gen_range(0.6..1.4),
    );
    let waves: Vec<(Vec3, f64, f64)> = (0..4)
        .map(|_| {
            let dir = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            (
                dir.normalize(),
                rng.gen_range(1.0..4.0),
                rng.gen_range(0.0..0.12),
            )
        })
        .collect();
    let sphere = icosphere(1.0, subdivisions);
    let mesh = sphere
        .map_vertices(|v| {
            let bump: f64 = waves.iter().map(|(d, f, a)| a * (f * d.dot(v)).sin()).sum();
            v.component_mul(&stretch) * base * (1.0 + bump)
        })
        .expect("blob is valid");
    if mesh.signed_volume() < 0.0 {
        mesh.flipped()
    } else {
        mesh
    }
}
