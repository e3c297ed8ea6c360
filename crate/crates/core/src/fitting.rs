//! Blended SDF query, MSE loss, analytic value gradients and refinement.
//!
//! The query is linear in the lattice values at fixed geometry, so the
//! gradient is exact and cheap: each point touches at most eight nodes of
//! every grid that covers it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::grid::{trilinear_stencil, ExtractionMode, LocalGrid};
use crate::mesh::SurfaceSamples;
use crate::par;
use crate::quant::VALUE_RANGE;
use crate::sdf::SdfOracle;
use crate::{Vec3, TRUNCATION};

/// Structural hyperparameters of a representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparameters {
    /// Number of root voxels `N_o`.
    pub n_roots: usize,
    /// Child expansion ratio.
    pub alpha: f64,
    /// Lattice resolution `m` per axis.
    pub resolution: usize,
    /// Subdivision depth `d`.
    pub depth: usize,
    /// Histogram bins `n_h` for scale rescaling.
    pub histogram_bins: usize,
    pub mode: ExtractionMode,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            n_roots: 256,
            alpha: 0.2,
            resolution: 5,
            depth: 1,
            histogram_bins: 10,
            mode: ExtractionMode::NormalsHistogram,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        if self.n_roots == 0 {
            return Err(Error::InvalidArgument(
                "at least one root is required".into(),
            ));
        }
        if self.resolution < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid resolution must be >= 2 for trilinear interpolation, got {}",
                self.resolution
            )));
        }
        if self.resolution > 40 {
            return Err(Error::InvalidArgument(format!(
                "grid resolution {} too large",
                self.resolution
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.depth == 0 || self.depth > 4 {
            return Err(Error::InvalidArgument(format!(
                "depth must lie in 1..=4, got {}",
                self.depth
            )));
        }
        if self.mode.is_adaptive() && self.histogram_bins == 0 {
            return Err(Error::InvalidArgument(
                "histogram needs at least one bin".into(),
            ));
        }
        Ok(())
    }

    /// Per-grid parameter count: `m^3` values plus geometry. Adaptive grids
    /// carry a quaternion, scales and a center (10); uniform grids only a
    /// center (3).
    pub fn params_per_grid(&self) -> usize {
        self.resolution.pow(3) + if self.mode.is_adaptive() { 10 } else { 3 }
    }

    pub fn param_count(&self, grids: usize) -> usize {
        self.n_roots * 4 + grids * self.params_per_grid()
    }
}

/// Uniform bucket grid over the grids' world bounds. Each bucket lists, in
/// ascending order, every grid whose bounds overlap it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridIndex {
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<u32>,
    items: Vec<u32>,
}

const INDEX_MAX_DIM: usize = 64;

impl GridIndex {
    pub fn new(grids: &[LocalGrid]) -> Self {
        if grids.is_empty() {
            return Self::default();
        }
        let bounds: Vec<(Vec3, Vec3)> = grids.iter().map(LocalGrid::world_bounds).collect();
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        let mut mean_width = 0.0;
        for (a, b) in &bounds {
            lo = lo.inf(a);
            hi = hi.sup(b);
            mean_width += (b - a).max();
        }
        mean_width /= bounds.len() as f64;
        let extent = (hi - lo).max();
        let cell = mean_width.max(extent / INDEX_MAX_DIM as f64).max(1e-6);
        let dims = [0, 1, 2]
            .map(|k| (((hi[k] - lo[k]) / cell).floor() as usize + 1).min(INDEX_MAX_DIM + 1));
        let mut index = Self {
            origin: lo,
            cell,
            dims,
            starts: vec![0; dims[0] * dims[1] * dims[2] + 1],
            items: Vec::new(),
        };
        let ranges: Vec<([usize; 3], [usize; 3])> = bounds
            .iter()
            .map(|(a, b)| (index.coords(a), index.coords(b)))
            .collect();
        let for_cells = |r: &([usize; 3], [usize; 3]), f: &mut dyn FnMut(usize)| {
            for z in r.0[2]..=r.1[2] {
                for y in r.0[1]..=r.1[1] {
                    for x in r.0[0]..=r.1[0] {
                        f(x + dims[0] * (y + dims[1] * z));
                    }
                }
            }
        };
        for r in &ranges {
            for_cells(r, &mut |c| index.starts[c + 1] += 1);
        }
        for i in 1..index.starts.len() {
            index.starts[i] += index.starts[i - 1];
        }
        let mut fill = index.starts.clone();
        let mut items = vec![0u32; *index.starts.last().unwrap() as usize];
        for (g, r) in ranges.iter().enumerate() {
            for_cells(r, &mut |c| {
                items[fill[c] as usize] = g as u32;
                fill[c] += 1;
            });
        }
        index.items = items;
        index
    }

    fn coords(&self, p: &Vec3) -> [usize; 3] {
        [0, 1, 2].map(|k| {
            let c = ((p[k] - self.origin[k]) / self.cell).floor();
            (c.max(0.0) as usize).min(self.dims[k] - 1)
        })
    }

    /// Grids that may cover `x`, ascending.
    #[inline]
    pub fn candidates(&self, x: &Vec3) -> &[u32] {
        if self.items.is_empty() {
            return &[];
        }
        for k in 0..3 {
            let t = (x[k] - self.origin[k]) / self.cell;
            if !(t >= 0.0 && t < self.dims[k] as f64 + 1.0) {
                return &[];
            }
        }
        let c = self.coords(x);
        let key = c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2]);
        &self.items[self.starts[key] as usize..self.starts[key + 1] as usize]
    }
}

/// Training or evaluation points with their truncated ground-truth values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryBatch {
    pub points: Vec<Vec3>,
    pub targets: Vec<f64>,
}

impl QueryBatch {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A fitted representation: forest, one grid per non-empty leaf and a
/// lookup index.
#[derive(Debug, Clone, PartialEq)]
pub struct GalaRep {
    hyper: Hyperparameters,
    forest: Forest,
    grids: Vec<LocalGrid>,
    quantized: bool,
    index: GridIndex,
}

impl GalaRep {
    /// Grid `i` must belong to the `i`-th non-empty leaf.
    pub fn new(
        hyper: Hyperparameters,
        forest: Forest,
        grids: Vec<LocalGrid>,
        quantized: bool,
    ) -> Result<Self> {
        let leaves = forest.non_empty_leaves();
        if leaves.len() != grids.len() {
            return Err(Error::Malformed(format!(
                "{} grids for {} non-empty leaves",
                grids.len(),
                leaves.len()
            )));
        }
        let m3 = hyper.resolution.pow(3);
        for (g, &l) in grids.iter().zip(&leaves) {
            if g.leaf as usize != l || g.values.len() != m3 {
                return Err(Error::Malformed(format!(
                    "grid for leaf {} does not match leaf {l}",
                    g.leaf
                )));
            }
        }
        let index = GridIndex::new(&grids);
        Ok(Self {
            hyper,
            forest,
            grids,
            quantized,
            index,
        })
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn forest(&self) -> &Forest {
        &self.forest
    }

    pub fn grids(&self) -> &[LocalGrid] {
        &self.grids
    }

    pub fn index(&self) -> &GridIndex {
        &self.index
    }

    pub fn is_quantized(&self) -> bool {
        self.quantized
    }

    pub fn resolution(&self) -> usize {
        self.hyper.resolution
    }

    pub fn param_count(&self) -> usize {
        self.hyper.param_count(self.grids.len())
    }

    /// All lattice values, grid-major.
    pub fn values_flat(&self) -> Vec<f64> {
        self.grids
            .iter()
            .flat_map(|g| g.values.iter().copied())
            .collect()
    }

    /// Replaces all lattice values; geometry and index are untouched.
    pub fn set_values_flat(&mut self, values: &[f64]) -> Result<()> {
        let m3 = self.hyper.resolution.pow(3);
        if values.len() != m3 * self.grids.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for {} grids of {m3}",
                values.len(),
                self.grids.len()
            )));
        }
        for (g, chunk) in self.grids.iter_mut().zip(values.chunks_exact(m3)) {
            g.values.copy_from_slice(chunk);
        }
        Ok(())
    }

    /// Snaps every lattice value to its 8-bit code and marks the
    /// representation quantized. Geometry must already be quantized.
    pub fn quantize_values(&mut self) {
        for g in &mut self.grids {
            for v in &mut g.values {
                *v = VALUE_RANGE.fake_quantize(*v);
            }
        }
        self.quantized = true;
    }

    /// Quantizes geometry and values, rebuilding the index.
    pub fn into_quantized(mut self) -> Self {
        for g in &mut self.grids {
            if g.codes.is_none() {
                g.quantize_geometry();
            }
        }
        self.index = GridIndex::new(&self.grids);
        self.quantize_values();
        self
    }

    /// Blended SDF at `x`; [`TRUNCATION`] outside every grid.
    pub fn query_sdf(&self, x: &Vec3) -> f64 {
        let m = self.hyper.resolution;
        let mut num = 0.0;
        let mut den = 0.0;
        for &gi in self.index.candidates(x) {
            let g = &self.grids[gi as usize];
            let xi = g.local_coords(x);
            let w = 1.0 - xi.amax();
            if w > 0.0 {
                let v: f64 = trilinear_stencil(&xi, m)
                    .iter()
                    .map(|&(k, b)| b * g.values[k])
                    .sum();
                num += w * v;
                den += w;
            }
        }
        if den > 0.0 {
            num / den
        } else {
            TRUNCATION
        }
    }

    /// Normalized blending coefficients `(grid, w_i / sum w)` at `x`.
    pub fn blend_weights(&self, x: &Vec3) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        let mut den = 0.0;
        for &gi in self.index.candidates(x) {
            let w = self.grids[gi as usize].weight(x);
            if w > 0.0 {
                out.push((gi as usize, w));
                den += w;
            }
        }
        for e in &mut out {
            e.1 /= den;
        }
        out
    }

    /// Appends `(flat value index, d value / d V)` for every value `x`
    /// depends on. Returns the query value.
    fn query_with_jacobian(&self, x: &Vec3, out: &mut Vec<(u32, f64)>) -> f64 {
        let m = self.hyper.resolution;
        let m3 = m * m * m;
        let start = out.len();
        let mut num = 0.0;
        let mut den = 0.0;
        for &gi in self.index.candidates(x) {
            let g = &self.grids[gi as usize];
            let xi = g.local_coords(x);
            let w = 1.0 - xi.amax();
            if w > 0.0 {
                let mut v = 0.0;
                for (k, b) in trilinear_stencil(&xi, m) {
                    v += b * g.values[k];
                    out.push(((gi as usize * m3 + k) as u32, w * b));
                }
                num += w * v;
                den += w;
            }
        }
        if den > 0.0 {
            for e in &mut out[start..] {
                e.1 /= den;
            }
            num / den
        } else {
            TRUNCATION
        }
    }

    /// Mean squared error of the query against the batch targets.
    pub fn mse_loss(&self, batch: &QueryBatch) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty query batch".into()));
        }
        let partial = par::map_range(batch.len().div_ceil(LOSS_CHUNK), |c| {
            let lo = c * LOSS_CHUNK;
            let hi = (lo + LOSS_CHUNK).min(batch.len());
            (lo..hi)
                .map(|i| {
                    let r = self.query_sdf(&batch.points[i]) - batch.targets[i];
                    r * r
                })
                .sum::<f64>()
        });
        Ok(partial.iter().sum::<f64>() / batch.len() as f64)
    }

    /// MSE restricted to batch points inside at least one grid, with the
    /// number of such points. `None` when no point is covered.
    pub fn covered_mse(&self, batch: &QueryBatch) -> Option<(f64, usize)> {
        let per_point = par::map_range(batch.len(), |i| {
            let x = &batch.points[i];
            (!self.blend_weights(x).is_empty())
                .then(|| (self.query_sdf(x) - batch.targets[i]).powi(2))
        });
        let covered: Vec<f64> = per_point.into_iter().flatten().collect();
        (!covered.is_empty()).then(|| {
            (
                covered.iter().sum::<f64>() / covered.len() as f64,
                covered.len(),
            )
        })
    }

    /// Loss and its gradient with respect to every lattice value, flattened
    /// grid-major like [`Self::values_flat`]. The result does not depend on
    /// the thread count.
    pub fn loss_and_grad(&self, batch: &QueryBatch) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty query batch".into()));
        }
        let scale = 2.0 / batch.len() as f64;
        let chunks = par::map_range(batch.len().div_ceil(LOSS_CHUNK), |c| {
            let lo = c * LOSS_CHUNK;
            let hi = (lo + LOSS_CHUNK).min(batch.len());
            let mut contrib = Vec::with_capacity((hi - lo) * 32);
            let mut sq = 0.0;
            let mut jac = Vec::with_capacity(64);
            for i in lo..hi {
                jac.clear();
                let r = self.query_with_jacobian(&batch.points[i], &mut jac) - batch.targets[i];
                sq += r * r;
                contrib.extend(jac.iter().map(|&(k, d)| (k, scale * r * d)));
            }
            (sq, contrib)
        });
        let mut grad = vec![0.0; self.grids.len() * self.hyper.resolution.pow(3)];
        let mut total = 0.0;
        for (sq, contrib) in &chunks {
            total += sq;
            for &(k, g) in contrib {
                grad[k as usize] += g;
            }
        }
        Ok((total / batch.len() as f64, grad))
    }

    pub fn grad_values(&self, batch: &QueryBatch) -> Result<Vec<f64>> {
        Ok(self.loss_and_grad(batch)?.1)
    }
}

const LOSS_CHUNK: usize = 256;

/// Fraction of a training batch drawn near the surface.
pub const SURFACE_FRACTION: f64 = 0.9;
/// Half-width of the normal offset for near-surface points.
pub const SURFACE_BAND: f64 = 0.05;

pub fn sample_training_batch(
    oracle: &SdfOracle,
    samples: &SurfaceSamples,
    n: usize,
    seed: u64,
) -> Result<QueryBatch> {
    sample_training_batch_with(oracle, samples, n, seed, SURFACE_FRACTION)
}

/// `round(n * surface_fraction)` points are surface samples pushed along their
/// normal by `U[-0.05, 0.05]`; the rest are uniform in `[-0.5, 0.5]^3`.
pub fn sample_training_batch_with(
    oracle: &SdfOracle,
    samples: &SurfaceSamples,
    n: usize,
    seed: u64,
    surface_fraction: f64,
) -> Result<QueryBatch> {
    if n == 0 {
        return Err(Error::InvalidArgument("batch size must be >= 1".into()));
    }
    let n_surface = if samples.is_empty() {
        0
    } else {
        ((n as f64 * surface_fraction.clamp(0.0, 1.0)).round() as usize).min(n)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n_surface {
        let i = rng.gen_range(0..samples.len());
        let t: f64 = rng.gen_range(-SURFACE_BAND..=SURFACE_BAND);
        points.push(samples.points[i] + samples.normals[i] * t);
    }
    for _ in n_surface..n {
        points.push(Vec3::new(
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
        ));
    }
    let targets = par::map_slice(&points, |p| oracle.truncated_sdf(p));
    Ok(QueryBatch { points, targets })
}

/// Refinement schedule and sampling settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Iterations at which the learning rate is multiplied by `lr_decay`.
    pub milestones: Vec<usize>,
    pub lr_decay: f64,
    pub seed: u64,
    /// Forward passes see 8-bit values; updates go to full-precision copies.
    pub quantize: bool,
    pub surface_fraction: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            iterations: 400,
            batch_size: 8192,
            learning_rate: 1e-4,
            milestones: vec![200, 300],
            lr_decay: 0.5,
            seed: 0,
            quantize: true,
            surface_fraction: SURFACE_FRACTION,
        }
    }
}

impl RefineConfig {
    pub fn learning_rate_at(&self, iteration: usize) -> f64 {
        let passed = self.milestones.iter().filter(|&&m| iteration >= m).count();
        self.learning_rate * self.lr_decay.powi(passed as i32)
    }
}

/// Per-iteration batch MSE, measured before each update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefineReport {
    pub losses: Vec<f64>,
}

impl RefineReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }
}

/// Seed of the batch drawn at `iteration`.
pub fn batch_seed(seed: u64, iteration: usize) -> u64 {
    // SplitMix64 finalizer over the pair.
    let mut z = seed
        ^ (iteration as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam on the lattice values only. With `quantize`, the representation
/// ends with 8-bit values.
pub fn refine(
    rep: &mut GalaRep,
    oracle: &SdfOracle,
    samples: &SurfaceSamples,
    cfg: &RefineConfig,
) -> Result<RefineReport> {
    refine_observed(rep, oracle, samples, cfg, |_, _| {})
}

/// As [`refine`], calling `observe(iteration, rep)` with the forward values
/// in place before each step.
pub fn refine_observed(
    rep: &mut GalaRep,
    oracle: &SdfOracle,
    samples: &SurfaceSamples,
    cfg: &RefineConfig,
    mut observe: impl FnMut(usize, &GalaRep),
) -> Result<RefineReport> {
    let mut report = RefineReport::default();
    if cfg.iterations == 0 {
        return Ok(report);
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be >= 1".into()));
    }
    let mut master = rep.values_flat();
    let mut m1 = vec![0.0; master.len()];
    let mut m2 = vec![0.0; master.len()];
    let forward = |master: &[f64]| -> Vec<f64> {
        if cfg.quantize {
            master
                .iter()
                .map(|&v| VALUE_RANGE.fake_quantize(v))
                .collect()
        } else {
            master.to_vec()
        }
    };
    for it in 0..cfg.iterations {
        rep.set_values_flat(&forward(&master))?;
        observe(it, rep);
        let batch = sample_training_batch_with(
            oracle,
            samples,
            cfg.batch_size,
            batch_seed(cfg.seed, it),
            cfg.surface_fraction,
        )?;
        let (loss, grad) = rep.loss_and_grad(&batch)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                iteration: it,
                loss,
            });
        }
        report.losses.push(loss);
        let lr = cfg.learning_rate_at(it);
        let t = (it + 1) as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        for k in 0..master.len() {
            let g = grad[k];
            m1[k] = ADAM_BETA1 * m1[k] + (1.0 - ADAM_BETA1) * g;
            m2[k] = ADAM_BETA2 * m2[k] + (1.0 - ADAM_BETA2) * g * g;
            master[k] -= lr * (m1[k] / c1) / ((m2[k] / c2).sqrt() + ADAM_EPS);
        }
    }
    rep.set_values_flat(&forward(&master))?;
    if cfg.quantize {
        rep.quantize_values();
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{subdivide, RootVoxel};
    use crate::Mat3;
    use nalgebra::Rotation3;

    /// Representation with explicit grids on a one-root, depth-1 forest.
    fn toy(grids: Vec<LocalGrid>, m: usize) -> GalaRep {
        let roots = [RootVoxel {
            center: Vec3::zeros(),
            half_extent: 0.4,
        }];
        let mut forest = subdivide(&roots, 0.2, 1).unwrap();
        let mut flags = vec![false; 8];
        let mut grids = grids;
        for (i, g) in grids.iter_mut().enumerate() {
            flags[i] = true;
            g.leaf = i as u32;
        }
        forest.set_occupancy(&flags).unwrap();
        let hyper = Hyperparameters {
            n_roots: 1,
            resolution: m,
            ..Hyperparameters::default()
        };
        GalaRep::new(hyper, forest, grids, false).unwrap()
    }

    fn grid(center: Vec3, scale: f64, values: impl Fn(usize) -> f64, m: usize) -> LocalGrid {
        let mut g = LocalGrid::new(0, center, Mat3::identity(), Vec3::repeat(scale), m);
        for (k, v) in g.values.iter_mut().enumerate() {
            *v = values(k);
        }
        g
    }

    #[test]
    fn covered_mse_ignores_uncovered_points() {
        let rep = toy(vec![grid(Vec3::zeros(), 0.1, |k| k as f64 * 1e-3, 3)], 3);
        let inside = Vec3::new(0.01, -0.02, 0.03);
        let batch = QueryBatch {
            points: vec![inside, Vec3::new(0.3, 0.3, 0.3)],
            targets: vec![0.0, -0.5],
        };
        let (mse, n) = rep.covered_mse(&batch).unwrap();
        assert_eq!(n, 1);
        assert_eq!(mse, rep.query_sdf(&inside).powi(2));
        let outside = QueryBatch {
            points: vec![Vec3::new(0.3, 0.3, 0.3)],
            targets: vec![0.0],
        };
        assert!(rep.covered_mse(&outside).is_none());
    }

    #[test]
    fn parameter_accounting() {
        let h = Hyperparameters::default();
        assert_eq!(h.param_count(2048), 277_504);
        let u = Hyperparameters {
            mode: ExtractionMode::NoAdaptive,
            ..h
        };
        assert_eq!(u.param_count(2048), 263_168);
        assert_eq!(h.param_count(100), 1024 + 135 * 100);
    }

    #[test]
    fn center_of_isolated_grid_reads_center_node() {
        let rep = toy(
            vec![grid(Vec3::new(0.1, 0.0, 0.0), 0.05, |k| k as f64 * 1e-3, 5)],
            5,
        );
        assert!((rep.query_sdf(&Vec3::new(0.1, 0.0, 0.0)) - 62e-3).abs() < 1e-15);
    }

    #[test]
    fn outside_all_grids_is_truncation() {
        let rep = toy(vec![grid(Vec3::zeros(), 0.05, |_| -0.02, 5)], 5);
        assert_eq!(rep.query_sdf(&Vec3::new(0.3, 0.0, 0.0)), 0.1);
        assert_eq!(rep.query_sdf(&Vec3::new(0.05, 0.0, 0.0)), 0.1);
        assert_eq!(rep.query_sdf(&Vec3::new(9.0, 0.0, 0.0)), 0.1);
    }

    #[test]
    fn two_grid_overlap_by_hand() {
        let (a, b) = (0.03, -0.02);
        let rep = toy(
            vec![
                grid(Vec3::new(-0.02, 0.0, 0.0), 0.05, |_| a, 3),
                grid(Vec3::new(0.02, 0.0, 0.0), 0.05, |_| b, 3),
            ],
            3,
        );
        let x = Vec3::new(0.01, 0.0, 0.0);
        // |xi|_inf = 0.03/0.05 and 0.01/0.05.
        let (w1, w2) = (1.0 - 0.6, 1.0 - 0.2);
        let expect = (w1 * a + w2 * b) / (w1 + w2);
        assert!((rep.query_sdf(&x) - expect).abs() < 1e-15);
        let bw = rep.blend_weights(&x);
        assert_eq!(bw.len(), 2);
        assert!((bw[0].1 - w1 / (w1 + w2)).abs() < 1e-15);
    }

    #[test]
    fn mse_examples() {
        let rep = toy(vec![grid(Vec3::zeros(), 0.05, |_| 0.05, 3)], 3);
        let batch = QueryBatch {
            points: vec![Vec3::zeros()],
            targets: vec![0.1],
        };
        assert!((rep.mse_loss(&batch).unwrap() - 0.0025).abs() < 1e-15);
        let points = vec![Vec3::zeros(), Vec3::new(0.01, 0.02, 0.0)];
        let exact = QueryBatch {
            targets: points.iter().map(|p| rep.query_sdf(p)).collect(),
            points,
        };
        assert_eq!(rep.mse_loss(&exact).unwrap(), 0.0);
        assert!(rep.mse_loss(&QueryBatch::default()).is_err());
    }

    #[test]
    fn node_gradient_is_kronecker() {
        let m = 5;
        let rep = toy(
            vec![grid(
                Vec3::zeros(),
                0.05,
                |k| if k == 62 { 0.04 } else { 0.0 },
                m,
            )],
            m,
        );
        let batch = QueryBatch {
            points: vec![Vec3::zeros(), Vec3::new(0.4, 0.4, 0.4)],
            targets: vec![0.01, 0.0],
        };
        let g = rep.grad_values(&batch).unwrap();
        let expect = 2.0 * (0.04 - 0.01) / 2.0;
        for (k, &v) in g.iter().enumerate() {
            if k == 62 {
                assert!((v - expect).abs() < 1e-15);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn outside_point_has_zero_gradient() {
        let rep = toy(vec![grid(Vec3::zeros(), 0.05, |_| 0.02, 3)], 3);
        let batch = QueryBatch {
            points: vec![Vec3::new(0.3, 0.3, 0.3)],
            targets: vec![-0.1],
        };
        let (loss, g) = rep.loss_and_grad(&batch).unwrap();
        assert!((loss - 0.04).abs() < 1e-15);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rotated_grid_query_and_index() {
        let r = *Rotation3::from_euler_angles(0.4, 0.2, -0.7).matrix();
        let mut g = LocalGrid::new(
            0,
            Vec3::new(0.1, -0.05, 0.02),
            r,
            Vec3::new(0.04, 0.02, 0.01),
            4,
        );
        g.values
            .iter_mut()
            .enumerate()
            .for_each(|(k, v)| *v = (k as f64).sin() * 0.05);
        let rep = toy(vec![g.clone()], 4);
        for k in [[0, 0, 0], [3, 1, 2], [1, 2, 3]] {
            // Lattice nodes sit on the box boundary or inside; test interior nodes only.
            let p = g.lattice_point(k);
            let xi = g.local_coords(&p);
            if xi.amax() < 1.0 - 1e-9 {
                let flat = k[0] + 4 * (k[1] + 4 * k[2]);
                assert!((rep.query_sdf(&p) - g.values[flat]).abs() < 1e-12);
            }
        }
        let p = g.lattice_point([1, 2, 1]);
        assert!((rep.query_sdf(&p) - g.values[1 + 4 * (2 + 4)]).abs() < 1e-12);
    }

    #[test]
    fn learning_rate_schedule() {
        let cfg = RefineConfig::default();
        assert_eq!(cfg.learning_rate_at(0), 1e-4);
        assert_eq!(cfg.learning_rate_at(199), 1e-4);
        assert_eq!(cfg.learning_rate_at(200), 5e-5);
        assert_eq!(cfg.learning_rate_at(300), 2.5e-5);
    }

    #[test]
    fn batch_seeds_differ() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|i| batch_seed(7, i)).collect();
        assert_eq!(s.len(), 1000);
        assert_ne!(batch_seed(0, 0), batch_seed(1, 0));
    }

    #[test]
    fn index_empty_rep() {
        let idx = GridIndex::new(&[]);
        assert!(idx.candidates(&Vec3::zeros()).is_empty());
    }
}
