//! End-to-end fitting: normalize, sample, place roots, subdivide, extract,
//! initialize and refine.

use std::time::{Duration, Instant};

use crate::error::Result;
use crate::fitting::{
    batch_seed, refine_observed, sample_training_batch_with, GalaRep, Hyperparameters, QueryBatch,
    RefineConfig,
};
use crate::forest::{
    assign_clusters, classify_nonempty, cluster_scales, init_roots, subdivide, RootVoxel,
    MIN_ROOT_SCALE,
};
use crate::grid::{extract_grids, init_all_values, ExtractionConfig};
use crate::mesh::{normalize_mesh, sample_surface, SurfaceSamples, TriMesh};
use crate::sdf::SdfOracle;
use crate::Vec3;

/// Surface samples drawn per triangle.
pub const SAMPLES_PER_TRIANGLE: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub hyper: Hyperparameters,
    pub refine: RefineConfig,
    /// Sample index that seeds farthest point sampling.
    pub fps_initial: usize,
    /// Grid half-scale floor as a fraction of the leaf half-extent.
    pub thickness_fraction: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            hyper: Hyperparameters::default(),
            refine: RefineConfig::default(),
            fps_initial: 0,
            thickness_fraction: ExtractionConfig::new(Hyperparameters::default().mode, 5)
                .thickness_fraction,
        }
    }
}

/// Wall-clock split of a fit.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timings {
    pub sampling: Duration,
    pub oracle: Duration,
    pub forest: Duration,
    /// Grid geometry plus value initialization.
    pub extraction: Duration,
    pub refinement: Duration,
    pub total: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub samples: usize,
    pub leaves: usize,
    pub grids: usize,
    pub param_count: usize,
    /// Batch MSE before each refinement step.
    pub losses: Vec<f64>,
    /// MSE on a fresh held-out batch after refinement.
    pub final_mse: f64,
    /// Held-out MSE over points inside some grid, and their count. The
    /// full MSE is dominated by the truncation default off the grids.
    pub final_covered: Option<(f64, usize)>,
    pub held_out_points: usize,
    pub timings: Timings,
}

/// Everything produced by a fit; the oracle and samples refer to the
/// normalized mesh.
pub struct Fitted {
    pub rep: GalaRep,
    pub report: FitReport,
    pub mesh: TriMesh,
    pub oracle: SdfOracle,
    pub samples: SurfaceSamples,
}

fn round_up_f32(v: f64) -> f64 {
    let f = v as f32;
    if (f as f64) < v {
        f.next_up() as f64
    } else {
        f as f64
    }
}

/// Roots stored at `f32` precision. Scales are recomputed around the
/// rounded centers and rounded up, so every sample stays covered.
pub fn f32_roots(points: &[Vec3], roots: &[RootVoxel]) -> Vec<RootVoxel> {
    let centers: Vec<Vec3> = roots
        .iter()
        .map(|r| r.center.map(|c| c as f32 as f64))
        .collect();
    let assignment = assign_clusters(points, &centers);
    cluster_scales(points, &centers, &assignment)
        .into_iter()
        .zip(centers)
        .map(|(s, center)| RootVoxel {
            center,
            half_extent: round_up_f32(s.max(MIN_ROOT_SCALE)),
        })
        .collect()
}

/// Evaluation batch drawn from a stream the refinement never uses.
pub fn held_out_batch(
    oracle: &SdfOracle,
    samples: &SurfaceSamples,
    cfg: &RefineConfig,
) -> Result<QueryBatch> {
    sample_training_batch_with(
        oracle,
        samples,
        cfg.batch_size.max(1),
        batch_seed(cfg.seed ^ 0xA5A5_A5A5, cfg.iterations),
        cfg.surface_fraction,
    )
}

pub fn fit(mesh: &TriMesh, cfg: &FitConfig) -> Result<Fitted> {
    fit_observed(mesh, cfg, |_, _, _| {})
}

/// As [`fit`], calling `observe(iteration, rep, oracle)` before each
/// refinement step.
pub fn fit_observed(
    mesh: &TriMesh,
    cfg: &FitConfig,
    mut observe: impl FnMut(usize, &GalaRep, &SdfOracle),
) -> Result<Fitted> {
    let mut hyper = cfg.hyper;
    hyper.validate()?;
    hyper.alpha = hyper.alpha as f32 as f64;
    let start = Instant::now();
    let mut timings = Timings::default();

    let t = Instant::now();
    let mesh = normalize_mesh(mesh)?;
    let samples = sample_surface(
        &mesh,
        SAMPLES_PER_TRIANGLE * mesh.num_triangles(),
        cfg.refine.seed,
    )?;
    timings.sampling = t.elapsed();

    let t = Instant::now();
    let oracle = SdfOracle::new(mesh.clone())?;
    timings.oracle = t.elapsed();

    let t = Instant::now();
    let roots = init_roots(&samples.points, hyper.n_roots, cfg.fps_initial)?;
    let roots = f32_roots(&samples.points, &roots);
    let mut forest = subdivide(&roots, hyper.alpha, hyper.depth)?;
    classify_nonempty(&mut forest, &samples.points);
    timings.forest = t.elapsed();

    let t = Instant::now();
    let ex = ExtractionConfig {
        mode: hyper.mode,
        resolution: hyper.resolution,
        histogram_bins: hyper.histogram_bins,
        thickness_fraction: cfg.thickness_fraction,
    };
    let mut grids = extract_grids(&forest, &samples, &ex)?;
    if cfg.refine.quantize {
        grids.iter_mut().for_each(|g| g.quantize_geometry());
    }
    init_all_values(&mut grids, &oracle);
    let leaves = forest.num_leaves();
    let mut rep = GalaRep::new(hyper, forest, grids, false)?;
    if cfg.refine.quantize {
        rep.quantize_values();
    }
    timings.extraction = t.elapsed();

    let t = Instant::now();
    let refined = refine_observed(&mut rep, &oracle, &samples, &cfg.refine, |it, rep| {
        observe(it, rep, &oracle)
    })?;
    timings.refinement = t.elapsed();

    let held_out = held_out_batch(&oracle, &samples, &cfg.refine)?;
    let final_mse = rep.mse_loss(&held_out)?;
    let final_covered = rep.covered_mse(&held_out);
    timings.total = start.elapsed();

    let report = FitReport {
        samples: samples.len(),
        leaves,
        grids: rep.grids().len(),
        param_count: rep.param_count(),
        losses: refined.losses,
        final_mse,
        final_covered,
        held_out_points: held_out.len(),
        timings,
    };
    Ok(Fitted {
        rep,
        report,
        mesh,
        oracle,
        samples,
    })
}
