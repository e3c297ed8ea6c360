//! Builders and brute-force oracles shared by the integration tests and the
//! acceptance report.

#![allow(dead_code)]

use gala::fitting::{GalaRep, Hyperparameters, QueryBatch};
use gala::forest::{subdivide, RootVoxel};
use gala::grid::{ExtractionMode, GeometryCodes, LocalGrid};
use gala::quant::{EULER_CODES, MIN_SCALE_CODE, VALUE_RANGE};
use gala::{Mat3, Vec3};
use nalgebra::{Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rotation(rng: &mut impl Rng) -> Mat3 {
    let axis = Vec3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    );
    let axis = Unit::new_normalize(axis + Vec3::new(1e-3, 0.0, 0.0));
    Rotation3::from_axis_angle(&axis, rng.gen_range(0.0..std::f64::consts::TAU)).into_inner()
}

/// One root at the origin, depth 1, grids on the first `n` leaves. Grids are
/// rotated, anisotropic and centered near the origin so they overlap.
pub fn toy_rep(seed: u64, n: usize, m: usize) -> GalaRep {
    assert!(n <= 8);
    let mut rng = rng(seed);
    let roots = [RootVoxel {
        center: Vec3::zeros(),
        half_extent: 0.4,
    }];
    let mut forest = subdivide(&roots, 0.2, 1).unwrap();
    let mut flags = vec![false; 8];
    flags[..n].iter_mut().for_each(|f| *f = true);
    forest.set_occupancy(&flags).unwrap();
    let grids = (0..n)
        .map(|leaf| {
            let center = Vec3::new(
                rng.gen_range(-0.05..0.05),
                rng.gen_range(-0.05..0.05),
                rng.gen_range(-0.05..0.05),
            );
            let scales = Vec3::new(
                rng.gen_range(0.06..0.1),
                rng.gen_range(0.06..0.1),
                rng.gen_range(0.06..0.1),
            );
            let mut g = LocalGrid::new(leaf as u32, center, random_rotation(&mut rng), scales, m);
            g.values
                .iter_mut()
                .for_each(|v| *v = rng.gen_range(-0.1..0.1));
            g
        })
        .collect();
    let hyper = Hyperparameters {
        n_roots: 1,
        resolution: m,
        ..Hyperparameters::default()
    };
    GalaRep::new(hyper, forest, grids, false).unwrap()
}

/// Points spread over the toy rep's support, some outside every grid.
pub fn toy_points(seed: u64, n: usize) -> Vec<Vec3> {
    let mut rng = rng(seed);
    (0..n)
        .map(|_| {
            Vec3::new(
                rng.gen_range(-0.2..0.2),
                rng.gen_range(-0.2..0.2),
                rng.gen_range(-0.2..0.2),
            )
        })
        .collect()
}

pub fn toy_batch(seed: u64, n: usize) -> QueryBatch {
    let points = toy_points(seed, n);
    let mut rng = rng(seed ^ 0xFFFF);
    let targets = points.iter().map(|_| rng.gen_range(-0.1..0.1)).collect();
    QueryBatch { points, targets }
}

/// Random quantized representation with every stored field drawn from its
/// legal code range. Roots and alpha are f32-exact.
pub fn random_quantized_rep(rng: &mut impl Rng) -> GalaRep {
    let n_roots = rng.gen_range(1..6);
    let depth = rng.gen_range(1..3);
    let m = rng.gen_range(2..7);
    let adaptive = rng.gen_bool(0.7);
    let alpha = rng.gen_range(0.0f32..0.5) as f64;
    let roots: Vec<RootVoxel> = (0..n_roots)
        .map(|_| RootVoxel {
            center: Vec3::new(
                rng.gen_range(-0.4f32..0.4) as f64,
                rng.gen_range(-0.4f32..0.4) as f64,
                rng.gen_range(-0.4f32..0.4) as f64,
            ),
            half_extent: rng.gen_range(0.01f32..0.2) as f64,
        })
        .collect();
    let mut forest = subdivide(&roots, alpha, depth).unwrap();
    let flags: Vec<bool> = (0..forest.num_leaves())
        .map(|_| rng.gen_bool(0.4))
        .collect();
    forest.set_occupancy(&flags).unwrap();
    let grids = forest
        .non_empty_leaves()
        .into_iter()
        .map(|leaf| {
            let codes = GeometryCodes {
                euler: [0; 3].map(|_| rng.gen_range(0..EULER_CODES) as u8),
                scale: [0; 3].map(|_| rng.gen_range(MIN_SCALE_CODE..=255)),
                center: [0; 3].map(|_| rng.gen()),
            };
            let values = (0..m * m * m)
                .map(|_| VALUE_RANGE.dequantize(rng.gen_range(0..=255)))
                .collect();
            LocalGrid::from_codes(leaf as u32, codes, values)
        })
        .collect();
    let hyper = Hyperparameters {
        n_roots,
        alpha,
        resolution: m,
        depth,
        histogram_bins: if adaptive { rng.gen_range(1..20) } else { 0 },
        mode: if adaptive {
            ExtractionMode::NormalsHistogram
        } else {
            ExtractionMode::NoAdaptive
        },
    };
    GalaRep::new(hyper, forest, grids, true).unwrap()
}

/// Union-find over 4-connected cells holding exactly the truncation value.
/// A component is flipped when no cell touches the border and every
/// neighbouring cell outside it is negative.
pub fn brute_force_flip(values: &[f32], w: usize, h: usize) -> Vec<f32> {
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let trunc = |v: f32| v == 0.1f32;
    let mut parent: Vec<usize> = (0..w * h).collect();
    for z in 0..h {
        for x in 0..w {
            let c = x + w * z;
            if !trunc(values[c]) {
                continue;
            }
            for n in [(x + 1 < w).then(|| c + 1), (z + 1 < h).then(|| c + w)]
                .into_iter()
                .flatten()
            {
                if trunc(values[n]) {
                    let (a, b) = (find(&mut parent, c), find(&mut parent, n));
                    parent[a] = b;
                }
            }
        }
    }
    let mut enclosed = vec![true; w * h];
    for z in 0..h {
        for x in 0..w {
            let c = x + w * z;
            if !trunc(values[c]) {
                continue;
            }
            let root = find(&mut parent, c);
            if x == 0 || z == 0 || x + 1 == w || z + 1 == h {
                enclosed[root] = false;
            }
            let ns = [
                (x > 0).then(|| c - 1),
                (x + 1 < w).then(|| c + 1),
                (z > 0).then(|| c - w),
                (z + 1 < h).then(|| c + w),
            ];
            for n in ns.into_iter().flatten() {
                if !trunc(values[n]) && values[n] >= 0.0 {
                    enclosed[root] = false;
                }
            }
        }
    }
    (0..w * h)
        .map(|c| {
            if trunc(values[c]) && enclosed[find(&mut parent, c)] {
                -values[c]
            } else {
                values[c]
            }
        })
        .collect()
}

pub fn random_slice(rng: &mut impl Rng, w: usize, h: usize) -> Vec<f32> {
    // Per-slice mixture so that enclosed islands, border-touching regions
    // and positive-walled islands all occur across a run.
    let p_neg = rng.gen_range(0.2..0.8);
    let p_pos = rng.gen_range(0.0..0.2);
    (0..w * h)
        .map(|_| {
            let u: f64 = rng.gen();
            if u < p_neg {
                -0.05
            } else if u < p_neg + p_pos {
                0.05
            } else {
                0.1
            }
        })
        .collect()
}
