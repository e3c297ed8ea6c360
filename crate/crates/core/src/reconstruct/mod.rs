//! Dense SDF volumes, interior sign repair and marching cubes.

mod tables;

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::fitting::GalaRep;
use crate::grid::trilinear_stencil;
use crate::mesh::TriMesh;
use crate::par;
use crate::{Vec3, TRUNCATION};

pub use tables::{CORNER_OFFSETS, EDGE_CORNERS, EDGE_TABLE, TRIANGLE_TABLE};

/// Tolerance for recognising the truncation value in a volume.
pub const FLIP_EPS: f64 = 1e-6;
pub const MIN_RESOLUTION: usize = 8;
pub const DEFAULT_RESOLUTION: usize = 256;

/// Cubic scalar volume over `[-0.5, 0.5]^3`, sample `j` on an axis at
/// `-0.5 + j / (res - 1)`. Stored as contiguous y-slices:
/// `data[x + res * (z + res * y)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfVolume {
    res: usize,
    data: Vec<f32>,
}

impl SdfVolume {
    pub fn filled(res: usize, value: f32) -> Self {
        Self {
            res,
            data: vec![value; res * res * res],
        }
    }

    /// Samples `f` at every lattice point, one y-slice per task.
    pub fn from_fn(res: usize, f: impl Fn(&Vec3) -> f64 + Sync) -> Self {
        let mut vol = Self::filled(res, 0.0);
        par::for_each_chunk_mut(&mut vol.data, res * res, |y, slice| {
            for z in 0..res {
                for x in 0..res {
                    slice[x + res * z] =
                        f(&Vec3::new(coord(x, res), coord(y, res), coord(z, res))) as f32;
                }
            }
        });
        vol
    }

    pub fn resolution(&self) -> usize {
        self.res
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.res * (z + self.res * y)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.index(x, y, z)]
    }

    pub fn point(&self, x: usize, y: usize, z: usize) -> Vec3 {
        Vec3::new(coord(x, self.res), coord(y, self.res), coord(z, self.res))
    }

    /// The `res x res` slice at height `y`, laid out `x + res * z`.
    pub fn slice_mut(&mut self, y: usize) -> &mut [f32] {
        let n = self.res * self.res;
        &mut self.data[y * n..(y + 1) * n]
    }
}

#[inline]
pub fn coord(j: usize, res: usize) -> f64 {
    -0.5 + j as f64 / (res - 1) as f64
}

/// Inclusive range of lattice indices whose coordinate lies in `[lo, hi]`,
/// or `None` when empty.
fn index_range(lo: f64, hi: f64, res: usize) -> Option<(usize, usize)> {
    let scale = (res - 1) as f64;
    let a = ((lo + 0.5) * scale).ceil().max(0.0);
    let b = ((hi + 0.5) * scale).floor().min(scale);
    if a > b {
        return None;
    }
    // Guard against rounding at the ends: widen by one; the weight test rejects extras.
    let a = (a as usize).saturating_sub(1);
    let b = (b as usize + 1).min(res - 1);
    Some((a, b))
}

/// Evaluates the blended query on the `res^3` lattice. Each grid is splatted
/// over its footprint in ascending order, so every sample equals
/// [`GalaRep::query_sdf`] at that point bit for bit (rounded to `f32`).
pub fn sample_volume(rep: &GalaRep, res: usize) -> Result<SdfVolume> {
    if res < MIN_RESOLUTION {
        return Err(Error::InvalidArgument(format!(
            "volume resolution must be >= {MIN_RESOLUTION}, got {res}"
        )));
    }
    let m = rep.resolution();
    let grids = rep.grids();
    let footprints: Vec<Option<[(usize, usize); 3]>> = grids
        .iter()
        .map(|g| {
            let (lo, hi) = g.world_bounds();
            Some([
                index_range(lo.x, hi.x, res)?,
                index_range(lo.y, hi.y, res)?,
                index_range(lo.z, hi.z, res)?,
            ])
        })
        .collect();
    // Grids touching each y-slice, ascending.
    let mut per_slice: Vec<Vec<u32>> = vec![Vec::new(); res];
    for (gi, fp) in footprints.iter().enumerate() {
        if let Some(fp) = fp {
            for list in &mut per_slice[fp[1].0..=fp[1].1] {
                list.push(gi as u32);
            }
        }
    }
    let mut vol = SdfVolume::filled(res, TRUNCATION as f32);
    par::for_each_chunk_mut(&mut vol.data, res * res, |y, slice| {
        let list = &per_slice[y];
        if list.is_empty() {
            return;
        }
        let mut num = vec![0.0f64; res * res];
        let mut den = vec![0.0f64; res * res];
        let py = coord(y, res);
        for &gi in list {
            let g = &grids[gi as usize];
            let fp = footprints[gi as usize].expect("listed grids have footprints");
            for z in fp[2].0..=fp[2].1 {
                let pz = coord(z, res);
                for x in fp[0].0..=fp[0].1 {
                    let p = Vec3::new(coord(x, res), py, pz);
                    let xi = g.local_coords(&p);
                    let w = 1.0 - xi.amax();
                    if w > 0.0 {
                        let v: f64 = trilinear_stencil(&xi, m)
                            .iter()
                            .map(|&(k, b)| b * g.values[k])
                            .sum();
                        num[x + res * z] += w * v;
                        den[x + res * z] += w;
                    }
                }
            }
        }
        for i in 0..res * res {
            if den[i] > 0.0 {
                slice[i] = (num[i] / den[i]) as f32;
            }
        }
    });
    Ok(vol)
}

#[inline]
fn is_truncation(v: f32) -> bool {
    (v as f64 - TRUNCATION).abs() < FLIP_EPS
}

/// Flips enclosed truncation islands in one `w x h` slice (row-major,
/// `x + w * z`). A 4-connected component of truncation cells is negated when
/// it avoids the border and every neighbour outside it is negative.
pub fn flip_slice(values: &mut [f32], w: usize, h: usize) {
    let mut seen = vec![false; w * h];
    let mut stack = Vec::new();
    let mut component = Vec::new();
    for start in 0..w * h {
        if seen[start] || !is_truncation(values[start]) {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        component.clear();
        let mut surrounded = true;
        while let Some(c) = stack.pop() {
            component.push(c);
            let (x, z) = (c % w, c / w);
            if x == 0 || z == 0 || x + 1 == w || z + 1 == h {
                surrounded = false;
            }
            let neighbours = [
                (x > 0).then(|| c - 1),
                (x + 1 < w).then(|| c + 1),
                (z > 0).then(|| c - w),
                (z + 1 < h).then(|| c + w),
            ];
            for n in neighbours.into_iter().flatten() {
                let v = values[n];
                if is_truncation(v) {
                    if !seen[n] {
                        seen[n] = true;
                        stack.push(n);
                    }
                } else if v >= 0.0 {
                    surrounded = false;
                }
            }
        }
        if surrounded {
            for &c in &component {
                values[c] = -values[c];
            }
        }
    }
}

/// Applies [`flip_slice`] to every y-slice.
pub fn flip_interior_signs(vol: &mut SdfVolume) {
    let res = vol.res;
    par::for_each_chunk_mut(&mut vol.data, res * res, |_, slice| {
        flip_slice(slice, res, res)
    });
}

/// Whole-volume variant using 6-connected components.
pub fn flip_interior_signs_3d(vol: &mut SdfVolume) {
    let r = vol.res;
    let n = r * r * r;
    let mut seen = vec![false; n];
    let mut stack = Vec::new();
    let mut component = Vec::new();
    for start in 0..n {
        if seen[start] || !is_truncation(vol.data[start]) {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        component.clear();
        let mut surrounded = true;
        while let Some(c) = stack.pop() {
            component.push(c);
            let (x, z, y) = (c % r, (c / r) % r, c / (r * r));
            if [x, y, z].iter().any(|&v| v == 0 || v + 1 == r) {
                surrounded = false;
            }
            let neighbours = [
                (x > 0).then(|| c - 1),
                (x + 1 < r).then(|| c + 1),
                (z > 0).then(|| c - r),
                (z + 1 < r).then(|| c + r),
                (y > 0).then(|| c - r * r),
                (y + 1 < r).then(|| c + r * r),
            ];
            for nb in neighbours.into_iter().flatten() {
                let v = vol.data[nb];
                if is_truncation(v) {
                    if !seen[nb] {
                        seen[nb] = true;
                        stack.push(nb);
                    }
                } else if v >= 0.0 {
                    surrounded = false;
                }
            }
        }
        if surrounded {
            for &c in &component {
                vol.data[c] = -vol.data[c];
            }
        }
    }
}

/// Marching cubes at `iso`. Corners with value `< iso` are inside; faces
/// point towards increasing values. Vertices are shared between cubes, so a
/// closed level set yields a closed mesh. Returns an empty mesh when the
/// volume has no crossing.
pub fn marching_cubes(vol: &SdfVolume, iso: f64) -> Result<TriMesh> {
    let r = vol.res;
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    let mut weld: HashMap<u64, u32> = HashMap::new();
    let inside = |v: f32| (v as f64) < iso;
    for y in 0..r - 1 {
        for z in 0..r - 1 {
            for x in 0..r - 1 {
                let mut vals = [0.0f64; 8];
                let mut case = 0usize;
                for (c, o) in CORNER_OFFSETS.iter().enumerate() {
                    let v = vol.get(x + o[0], y + o[1], z + o[2]);
                    vals[c] = v as f64;
                    if inside(v) {
                        case |= 1 << c;
                    }
                }
                if EDGE_TABLE[case] == 0 {
                    continue;
                }
                let mut edge_vertex = [u32::MAX; 12];
                for (e, &[a, b]) in EDGE_CORNERS.iter().enumerate() {
                    if EDGE_TABLE[case] & (1 << e) == 0 {
                        continue;
                    }
                    let (oa, ob) = (CORNER_OFFSETS[a], CORNER_OFFSETS[b]);
                    let (lo, hi, vlo, vhi) = if oa <= ob {
                        (oa, ob, vals[a], vals[b])
                    } else {
                        (ob, oa, vals[b], vals[a])
                    };
                    let axis = (0..3)
                        .find(|&k| lo[k] != hi[k])
                        .expect("edge spans one axis");
                    let (gx, gy, gz) = (x + lo[0], y + lo[1], z + lo[2]);
                    let key = ((gx + r * (gy + r * gz)) * 3 + axis) as u64;
                    edge_vertex[e] = *weld.entry(key).or_insert_with(|| {
                        let t = ((iso - vlo) / (vhi - vlo)).clamp(0.0, 1.0);
                        let p0 = Vec3::new(coord(gx, r), coord(gy, r), coord(gz, r));
                        let mut p1 = p0;
                        p1[axis] = coord([gx, gy, gz][axis] + 1, r);
                        vertices.push(p0 + (p1 - p0) * t);
                        (vertices.len() - 1) as u32
                    });
                }
                for tri in TRIANGLE_TABLE[case].chunks_exact(3) {
                    if tri[0] < 0 {
                        break;
                    }
                    // The tables wind counter-clockwise seen from the inside.
                    triangles.push([
                        edge_vertex[tri[0] as usize],
                        edge_vertex[tri[2] as usize],
                        edge_vertex[tri[1] as usize],
                    ]);
                }
            }
        }
    }
    TriMesh::from_raw_parts(vertices, triangles)
}

/// Samples, optionally repairs interior signs, and meshes a representation.
pub fn reconstruct(rep: &GalaRep, res: usize, flip: bool) -> Result<TriMesh> {
    let mut vol = sample_volume(rep, res)?;
    if flip {
        flip_interior_signs(&mut vol);
    }
    marching_cubes(&vol, 0.0)
}
