//! Local adaptive grids: one oriented, anisotropically scaled `m^3` lattice
//! per non-empty leaf.

use nalgebra::{Rotation3, UnitQuaternion};

use crate::error::{Error, Result};
use crate::forest::{Forest, TreeNode};
use crate::mesh::SurfaceSamples;
use crate::par;
use crate::quant::{self, CENTER_RANGE, SCALE_RANGE};
use crate::sdf::SdfOracle;
use crate::spatial::PointGrid;
use crate::{Mat3, Vec3, TRUNCATION};

/// Absolute lower bound on a grid half-scale.
pub const MIN_HALF_SCALE: f64 = 1e-4;
/// Upper bound on a grid half-scale (top of the scale code range).
pub const MAX_HALF_SCALE: f64 = 0.1;

pub const JACOBI_MAX_SWEEPS: usize = 50;
pub const JACOBI_TOLERANCE: f64 = 1e-10;

/// Quantized grid geometry as stored on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GeometryCodes {
    pub euler: [u8; 3],
    pub scale: [u8; 3],
    pub center: [u8; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalGrid {
    /// Index of the owning leaf in the forest's leaf level.
    pub leaf: u32,
    pub center: Vec3,
    pub rotation: UnitQuaternion<f64>,
    /// Rotation matrix; column `i` is grid axis `u_i`.
    pub axes: Mat3,
    /// Per-axis half-scales.
    pub scales: Vec3,
    /// Lattice values, `x` fastest: `k = kx + m * (ky + m * kz)`.
    pub values: Vec<f64>,
    pub codes: Option<GeometryCodes>,
}

impl LocalGrid {
    pub fn new(leaf: u32, center: Vec3, axes: Mat3, scales: Vec3, resolution: usize) -> Self {
        let rotation =
            UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(axes));
        Self {
            leaf,
            center,
            rotation,
            axes: rotation.to_rotation_matrix().into_inner(),
            scales,
            values: vec![TRUNCATION; resolution.pow(3)],
            codes: None,
        }
    }

    /// Rebuilds float geometry from stored codes.
    pub fn from_codes(leaf: u32, codes: GeometryCodes, values: Vec<f64>) -> Self {
        let rotation = quant::dequantize_rotation(codes.euler);
        let axes = rotation.to_rotation_matrix().into_inner();
        Self {
            leaf,
            center: Vec3::from(codes.center.map(|c| CENTER_RANGE.dequantize(c as u32))),
            rotation,
            axes,
            scales: Vec3::from(codes.scale.map(|c| SCALE_RANGE.dequantize(c as u32))),
            values,
            codes: Some(codes),
        }
    }

    /// Snaps center, orientation and scales to their codes.
    pub fn quantize_geometry(&mut self) {
        let codes = GeometryCodes {
            euler: quant::quantize_rotation(&self.rotation),
            scale: [0, 1, 2].map(|k| quant::quantize_scale(self.scales[k])),
            center: [0, 1, 2].map(|k| CENTER_RANGE.quantize(self.center[k]) as u8),
        };
        let values = std::mem::take(&mut self.values);
        *self = Self::from_codes(self.leaf, codes, values);
    }

    pub fn resolution(&self) -> usize {
        (self.values.len() as f64).cbrt().round() as usize
    }

    /// `xi = O^T (x - p) / s`; the lattice spans `[-1, 1]^3`.
    #[inline]
    pub fn local_coords(&self, x: &Vec3) -> Vec3 {
        (self.axes.tr_mul(&(x - self.center))).component_div(&self.scales)
    }

    /// Infinity-ball hat weight `max(0, 1 - |xi|_inf)`.
    #[inline]
    pub fn weight(&self, x: &Vec3) -> f64 {
        (1.0 - self.local_coords(x).amax()).max(0.0)
    }

    pub fn lattice_point(&self, k: [usize; 3]) -> Vec3 {
        let m = self.resolution();
        let u = Vec3::from(k.map(|ki| -1.0 + 2.0 * ki as f64 / (m - 1) as f64));
        self.center + self.axes * u.component_mul(&self.scales)
    }

    /// World-space axis-aligned bounds of the oriented box.
    pub fn world_bounds(&self) -> (Vec3, Vec3) {
        let r = self.axes.abs() * self.scales;
        (self.center - r, self.center + r)
    }
}

/// Trilinear stencil at local coordinate `xi` on an `m^3` lattice over
/// `[-1, 1]^3`: eight (flat index, basis weight) pairs.
#[inline]
pub fn trilinear_stencil(xi: &Vec3, m: usize) -> [(usize, f64); 8] {
    let mut base = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for a in 0..3 {
        let t = (xi[a] + 1.0) * 0.5 * (m - 1) as f64;
        let i0 = (t.floor().max(0.0) as usize).min(m - 2);
        base[a] = i0;
        frac[a] = (t - i0 as f64).clamp(0.0, 1.0);
    }
    let mut out = [(0usize, 0.0f64); 8];
    for (c, slot) in out.iter_mut().enumerate() {
        let (dx, dy, dz) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
        let w = (if dx == 1 { frac[0] } else { 1.0 - frac[0] })
            * (if dy == 1 { frac[1] } else { 1.0 - frac[1] })
            * (if dz == 1 { frac[2] } else { 1.0 - frac[2] });
        let idx = (base[0] + dx) + m * ((base[1] + dy) + m * (base[2] + dz));
        *slot = (idx, w);
    }
    out
}

#[inline]
pub fn trilinear(values: &[f64], xi: &Vec3, m: usize) -> f64 {
    trilinear_stencil(xi, m)
        .iter()
        .map(|&(i, w)| w * values[i])
        .sum()
}

/// Cyclic Jacobi eigen-decomposition of a symmetric 3x3 matrix.
/// Returns eigenvalues and the matrix whose columns are the eigenvectors,
/// both unsorted.
pub fn jacobi_eigen(mut a: Mat3, max_sweeps: usize, tolerance: f64) -> ([f64; 3], Mat3) {
    let mut v = Mat3::identity();
    for _ in 0..max_sweeps {
        let off = a[(0, 1)].abs().max(a[(0, 2)].abs()).max(a[(1, 2)].abs());
        if off < tolerance {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[(p, q)];
            if apq.abs() < f64::MIN_POSITIVE {
                continue;
            }
            let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut rot = Mat3::identity();
            rot[(p, p)] = c;
            rot[(q, q)] = c;
            rot[(p, q)] = s;
            rot[(q, p)] = -s;
            a = rot.transpose() * a * rot;
            a[(p, q)] = 0.0;
            a[(q, p)] = 0.0;
            v *= rot;
        }
    }
    ([a[(0, 0)], a[(1, 1)], a[(2, 2)]], v)
}

/// Second-moment matrix `mean(n n^T)`.
pub fn normal_moment(normals: &[Vec3]) -> Mat3 {
    let mut m = Mat3::zeros();
    for n in normals {
        m += n * n.transpose();
    }
    m / normals.len().max(1) as f64
}

/// Rotation whose columns are the principal axes of the normals' second
/// moment, in descending eigenvalue order, right-handed.
pub fn pca_orientation(normals: &[Vec3]) -> (Mat3, [f64; 3]) {
    let (vals, vecs) = jacobi_eigen(normal_moment(normals), JACOBI_MAX_SWEEPS, JACOBI_TOLERANCE);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]).then(i.cmp(&j)));
    let mut o = Mat3::from_columns(&order.map(|i| vecs.column(i).normalize()));
    if o.determinant() < 0.0 {
        o.set_column(2, &(-o.column(2)));
    }
    (o, order.map(|i| vals[i]))
}

/// Tight box of `points` in the frame `axes`, returned as world center and
/// half-extents clamped to `[floor, 0.1]`.
pub fn initial_box(reference: &Vec3, points: &[Vec3], axes: &Mat3, floor: f64) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        let l = axes.tr_mul(&(p - reference));
        lo = lo.inf(&l);
        hi = hi.sup(&l);
    }
    let mid = (lo + hi) * 0.5;
    let half = ((hi - lo) * 0.5).map(|h| h.max(floor).min(MAX_HALF_SCALE));
    (reference + axes * mid, half)
}

/// Histogram peak rescaling along one axis.
///
/// Projected distances `|(x - p) . u| / s` are binned over `[0, 1]`. With `c`
/// the center of the fullest bin (innermost on ties) and `I` the largest
/// integer with `2I/m < c`, the scale becomes `s * m c / (2 I)` so lattice
/// fraction `2I/m` lands on the peak. Nothing changes when `I = 0`.
pub fn histogram_rescale(
    axis: &Vec3,
    scale: f64,
    center: &Vec3,
    points: &[Vec3],
    m: usize,
    bins: usize,
) -> f64 {
    let peak = histogram_peak(axis, scale, center, points, bins);
    scale * rescale_factor(peak, m)
}

/// Center of the fullest bin of the normalized projected-distance histogram.
pub fn histogram_peak(axis: &Vec3, scale: f64, center: &Vec3, points: &[Vec3], bins: usize) -> f64 {
    let bins = bins.max(1);
    let mut counts = vec![0usize; bins];
    for p in points {
        let f = ((p - center).dot(axis).abs() / scale).clamp(0.0, 1.0);
        let b = ((f * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    (best as f64 + 0.5) / bins as f64
}

/// Multiplier applied to a half-scale for histogram peak `c`.
pub fn rescale_factor(peak: f64, m: usize) -> f64 {
    let mf = m as f64;
    // Largest integer I >= 0 with 2I/m < c.
    let mut i_g = ((peak * mf / 2.0).ceil() as i64 - 1).max(0);
    while 2.0 * (i_g + 1) as f64 / mf < peak {
        i_g += 1;
    }
    while i_g > 0 && 2.0 * i_g as f64 / mf >= peak {
        i_g -= 1;
    }
    if i_g > 0 {
        mf * peak / (2.0 * i_g as f64)
    } else {
        1.0
    }
}

/// Which extraction components are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExtractionMode {
    /// Uniform axis-aligned lattice filling the leaf voxel.
    NoAdaptive,
    /// Axis-aligned tight box around the leaf's samples.
    Vanilla,
    /// Box oriented by PCA of bounded normals.
    Normals,
    /// Oriented box plus histogram rescaling.
    NormalsHistogram,
}

impl ExtractionMode {
    pub fn is_adaptive(self) -> bool {
        self != ExtractionMode::NoAdaptive
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionConfig {
    pub mode: ExtractionMode,
    pub resolution: usize,
    pub histogram_bins: usize,
    /// Half-scale floor as a fraction of the leaf half-extent, applied on
    /// top of [`MIN_HALF_SCALE`].
    pub thickness_fraction: f64,
}

impl ExtractionConfig {
    pub fn new(mode: ExtractionMode, resolution: usize) -> Self {
        Self {
            mode,
            resolution,
            histogram_bins: 2 * resolution,
            thickness_fraction: 0.25,
        }
    }
}

/// Builds one leaf's grid geometry from the samples inside the leaf ball.
/// Values are left at the truncation default.
pub fn extract_grid(
    leaf_index: usize,
    leaf: &TreeNode,
    points: &[Vec3],
    normals: &[Vec3],
    cfg: &ExtractionConfig,
) -> LocalGrid {
    let m = cfg.resolution;
    let floor = MIN_HALF_SCALE.max(cfg.thickness_fraction * leaf.half_extent);
    if cfg.mode == ExtractionMode::NoAdaptive || points.is_empty() {
        let h = leaf.half_extent.clamp(MIN_HALF_SCALE, MAX_HALF_SCALE);
        return LocalGrid::new(
            leaf_index as u32,
            leaf.center,
            Mat3::identity(),
            Vec3::repeat(h),
            m,
        );
    }
    let axes = match cfg.mode {
        ExtractionMode::Vanilla => Mat3::identity(),
        _ => pca_orientation(normals).0,
    };
    let (center, mut scales) = initial_box(&leaf.center, points, &axes, floor);
    if cfg.mode == ExtractionMode::NormalsHistogram {
        for i in 0..3 {
            let u = axes.column(i).into_owned();
            let s = histogram_rescale(&u, scales[i], &center, points, m, cfg.histogram_bins);
            scales[i] = s.clamp(MIN_HALF_SCALE, MAX_HALF_SCALE);
        }
    }
    LocalGrid::new(leaf_index as u32, center, axes, scales, m)
}

/// Extracts a grid for every non-empty leaf, in ascending leaf order.
pub fn extract_grids(
    forest: &Forest,
    samples: &SurfaceSamples,
    cfg: &ExtractionConfig,
) -> Result<Vec<LocalGrid>> {
    if cfg.resolution < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid resolution must be >= 2 for trilinear interpolation, got {}",
            cfg.resolution
        )));
    }
    let leaves = forest.non_empty_leaves();
    let cell = forest
        .leaves()
        .iter()
        .map(|n| n.half_extent)
        .fold(0.0, f64::max)
        .max(1e-3);
    let index = PointGrid::new(&samples.points, cell);
    Ok(par::map_slice(&leaves, |&li| {
        let leaf = &forest.leaves()[li];
        let ids = index.within_inf_ball(&samples.points, &leaf.center, leaf.half_extent);
        let pts: Vec<Vec3> = ids.iter().map(|&i| samples.points[i]).collect();
        let nrm: Vec<Vec3> = ids.iter().map(|&i| samples.normals[i]).collect();
        extract_grid(li, leaf, &pts, &nrm, cfg)
    }))
}

/// Fills every lattice value with the truncated ground-truth SDF.
pub fn init_grid_values(grid: &mut LocalGrid, oracle: &SdfOracle) {
    let m = grid.resolution();
    for kz in 0..m {
        for ky in 0..m {
            for kx in 0..m {
                let p = grid.lattice_point([kx, ky, kz]);
                grid.values[kx + m * (ky + m * kz)] = oracle.truncated_sdf(&p);
            }
        }
    }
}

pub fn init_all_values(grids: &mut [LocalGrid], oracle: &SdfOracle) {
    par::for_each_chunk_mut(grids, 16, |_, chunk| {
        for g in chunk {
            init_grid_values(g, oracle);
        }
    });
}
