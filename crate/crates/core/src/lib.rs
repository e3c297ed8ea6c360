//! Oriented local SDF lattices on a forest of shallow octrees.
//!
//! A shape is covered by a forest of shallow octrees whose roots are placed on
//! the surface by farthest point sampling. Every non-empty leaf carries a small
//! `m x m x m` lattice of truncated signed distances that is rotated and scaled
//! to hug the local surface. Blending the lattices with infinity-norm hat
//! weights gives a continuous SDF that can be meshed with marching cubes.
//!
//! The crate is organised bottom-up:
//!
//! * [`mesh`]: triangle meshes, OBJ/STL IO, normalization and surface sampling.
//! * [`sdf`]: BVH-backed signed distance queries against a watertight mesh.
//! * [`forest`]: root placement, overlapping subdivision and leaf occupancy.
//! * [`grid`]: per-leaf orientation, bounding box and histogram rescaling.
//! * [`fitting`]: the blended query, MSE loss, analytic gradients and refinement.
//! * [`quant`]: 8-bit scalar codes and Euler-angle orientation codes.
//! * [`reconstruct`]: dense volume sampling, interior sign flipping, marching cubes.
//! * [`io`]: the binary `.gala` container and flattened generation export.
//! * [`metrics`]: Chamfer and Hausdorff distances between sampled surfaces.
//! * [`pipeline`]: the end-to-end fit driver used by the CLI.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled (the default) and plain iterators otherwise.

pub mod error;
pub mod fitting;
pub mod forest;
pub mod grid;
pub mod io;
pub mod mesh;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod quant;
pub mod reconstruct;
pub mod sdf;
pub mod shapes;
pub mod spatial;

pub use error::{Error, ErrorClass, Result};
pub use fitting::{GalaRep, Hyperparameters};
pub use mesh::{SurfaceSamples, TriMesh};
pub use pipeline::{fit, FitConfig, FitReport};
pub use sdf::SdfOracle;

/// 3-vector used throughout the crate.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3x3 matrix used for grid orientations.
pub type Mat3 = nalgebra::Matrix3<f64>;

/// Truncation bound of the signed distance field. Also the value reported
/// for points that no local grid covers.
pub const TRUNCATION: f64 = 0.1;
