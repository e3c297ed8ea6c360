//! The `.gala` container and the flattened generation-data export.
//!
//! `.gala` layout, little-endian:
//!
//! ```text
//! magic "GALA" | version u32
//! N_o u16 | d u16 | m u16 | n_h u16 | alpha f32 | grid count u32
//! min/max f32 pairs for root centers, root scales, grid centers, grid scales
//! N_o x { center 3 x f32, half-extent f32 }
//! grids x { parent u32, sibling u8, euler 3 x u8, scale 3 x u8, center 3 x u8, values m^3 x u8 }
//! ```
//!
//! `n_h = 0` marks a representation with uniform (non-adaptive) grids.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fitting::{GalaRep, Hyperparameters};
use crate::forest::{subdivide, RootVoxel};
use crate::grid::{ExtractionMode, GeometryCodes, LocalGrid};
use crate::quant::{EULER_CODES, MIN_SCALE_CODE, VALUE_RANGE};
use crate::{Vec3, TRUNCATION};

pub const MAGIC: &[u8; 4] = b"GALA";
pub const VERSION: u32 = 1;
/// Bytes before the root records.
pub const FIXED_HEADER_BYTES: usize = 56;
pub const ROOT_RECORD_BYTES: usize = 16;
/// Leaf record bytes excluding the `m^3` values.
pub const GRID_RECORD_BASE_BYTES: usize = 14;

pub const GEN_MAGIC: &[u8; 4] = b"GALX";
pub const GEN_VERSION: u32 = 1;
pub const GEN_HEADER_BYTES: usize = 88;

/// Exact `.gala` size for a representation.
pub fn file_size(n_roots: usize, grids: usize, resolution: usize) -> usize {
    FIXED_HEADER_BYTES
        + ROOT_RECORD_BYTES * n_roots
        + (GRID_RECORD_BASE_BYTES + resolution.pow(3)) * grids
}

/// Min/max pairs per data domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainStats {
    pub root_center: [f32; 2],
    pub root_scale: [f32; 2],
    pub grid_center: [f32; 2],
    pub grid_scale: [f32; 2],
}

const STAT_KEYS: [&str; 8] = [
    "root_center_min",
    "root_center_max",
    "root_scale_min",
    "root_scale_max",
    "grid_center_min",
    "grid_center_max",
    "grid_scale_min",
    "grid_scale_max",
];

fn min_max(values: impl Iterator<Item = f64>) -> [f32; 2] {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if lo > hi {
        [0.0, 0.0]
    } else {
        [lo as f32, hi as f32]
    }
}

impl DomainStats {
    pub fn of(rep: &GalaRep) -> Self {
        let roots = rep.forest().roots();
        let grids = rep.grids();
        Self {
            root_center: min_max(
                roots
                    .iter()
                    .flat_map(|r| r.center.iter().copied().collect::<Vec<_>>()),
            ),
            root_scale: min_max(roots.iter().map(|r| r.half_extent)),
            grid_center: min_max(
                grids
                    .iter()
                    .flat_map(|g| g.center.iter().copied().collect::<Vec<_>>()),
            ),
            grid_scale: min_max(
                grids
                    .iter()
                    .flat_map(|g| g.scales.iter().copied().collect::<Vec<_>>()),
            ),
        }
    }

    fn as_array(&self) -> [f32; 8] {
        [
            self.root_center[0],
            self.root_center[1],
            self.root_scale[0],
            self.root_scale[1],
            self.grid_center[0],
            self.grid_center[1],
            self.grid_scale[0],
            self.grid_scale[1],
        ]
    }

    fn from_array(a: [f32; 8]) -> Self {
        Self {
            root_center: [a[0], a[1]],
            root_scale: [a[2], a[3]],
            grid_center: [a[4], a[5]],
            grid_scale: [a[6], a[7]],
        }
    }

    /// `key=value` lines, one per bound.
    pub fn to_sidecar(&self) -> String {
        STAT_KEYS
            .iter()
            .zip(self.as_array())
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn parse_sidecar(text: &str) -> Result<Self> {
        let mut vals = [None; 8];
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                msg: "expected key=value".into(),
            })?;
            let slot = STAT_KEYS
                .iter()
                .position(|s| *s == k.trim())
                .ok_or_else(|| Error::Parse {
                    line: n + 1,
                    msg: format!("unknown statistic '{}'", k.trim()),
                })?;
            let v: f32 = v.trim().parse().map_err(|_| Error::Parse {
                line: n + 1,
                msg: format!("bad number '{}'", v.trim()),
            })?;
            vals[slot] = Some(v);
        }
        let mut out = [0.0f32; 8];
        for (i, v) in vals.iter().enumerate() {
            out[i] =
                v.ok_or_else(|| Error::Malformed(format!("statistic '{}' missing", STAT_KEYS[i])))?;
        }
        Ok(Self::from_array(out))
    }
}

/// Decoded fixed header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Header {
    pub version: u32,
    pub n_roots: u16,
    pub depth: u16,
    pub resolution: u16,
    pub histogram_bins: u16,
    pub alpha: f32,
    pub grid_count: u32,
    pub stats: DomainStats,
}

impl Header {
    pub fn hyperparameters(&self) -> Hyperparameters {
        Hyperparameters {
            n_roots: self.n_roots as usize,
            alpha: self.alpha as f64,
            resolution: self.resolution as usize,
            depth: self.depth as usize,
            histogram_bins: self.histogram_bins as usize,
            mode: if self.histogram_bins == 0 {
                ExtractionMode::NoAdaptive
            } else {
                ExtractionMode::NormalsHistogram
            },
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated {
                offset: self.pos,
                needed: n,
                available: self.bytes.len() - self.pos,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn arr3(&mut self) -> Result<[u8; 3]> {
        Ok(self.take(3)?.try_into().unwrap())
    }
}

fn narrow_u16(v: usize, what: &str) -> Result<u16> {
    u16::try_from(v)
        .map_err(|_| Error::InvalidArgument(format!("{what} {v} does not fit the file format")))
}

/// Serializes a quantized representation.
pub fn encode(rep: &GalaRep) -> Result<Vec<u8>> {
    if !rep.is_quantized() || rep.grids().iter().any(|g| g.codes.is_none()) {
        return Err(Error::NotQuantized);
    }
    let h = rep.hyperparameters();
    let forest = rep.forest();
    let m3 = h.resolution.pow(3);
    let mut out = Vec::with_capacity(file_size(h.n_roots, rep.grids().len(), h.resolution));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&narrow_u16(h.n_roots, "root count")?.to_le_bytes());
    out.extend_from_slice(&narrow_u16(h.depth, "depth")?.to_le_bytes());
    out.extend_from_slice(&narrow_u16(h.resolution, "resolution")?.to_le_bytes());
    let n_h = if h.mode.is_adaptive() {
        narrow_u16(h.histogram_bins.max(1), "histogram bins")?
    } else {
        0
    };
    out.extend_from_slice(&n_h.to_le_bytes());
    out.extend_from_slice(&(h.alpha as f32).to_le_bytes());
    out.extend_from_slice(&(rep.grids().len() as u32).to_le_bytes());
    for v in DomainStats::of(rep).as_array() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for r in forest.roots() {
        for k in 0..3 {
            out.extend_from_slice(&(r.center[k] as f32).to_le_bytes());
        }
        out.extend_from_slice(&(r.half_extent as f32).to_le_bytes());
    }
    for g in rep.grids() {
        let codes = g.codes.expect("checked above");
        out.extend_from_slice(&(g.leaf / 8).to_le_bytes());
        out.push((g.leaf % 8) as u8);
        out.extend_from_slice(&codes.euler);
        out.extend_from_slice(&codes.scale);
        out.extend_from_slice(&codes.center);
        debug_assert_eq!(g.values.len(), m3);
        out.extend(g.values.iter().map(|&v| VALUE_RANGE.quantize(v) as u8));
    }
    Ok(out)
}

pub fn decode_header(bytes: &[u8]) -> Result<Header> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            expected: *MAGIC,
            found: magic.try_into().unwrap(),
        });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: VERSION,
        });
    }
    let n_roots = r.u16()?;
    let depth = r.u16()?;
    let resolution = r.u16()?;
    let histogram_bins = r.u16()?;
    let alpha = r.f32()?;
    let grid_count = r.u32()?;
    let mut stats = [0.0f32; 8];
    for s in &mut stats {
        *s = r.f32()?;
    }
    Ok(Header {
        version,
        n_roots,
        depth,
        resolution,
        histogram_bins,
        alpha,
        grid_count,
        stats: DomainStats::from_array(stats),
    })
}

/// Parses and validates a `.gala` byte stream.
pub fn decode(bytes: &[u8]) -> Result<GalaRep> {
    let header = decode_header(bytes)?;
    let hyper = header.hyperparameters();
    hyper.validate()?;
    let m3 = hyper.resolution.pow(3);
    let total_leaves = hyper.n_roots * 8usize.pow(hyper.depth as u32);
    let grids = header.grid_count as usize;
    if grids > total_leaves {
        return Err(Error::Malformed(format!(
            "{grids} grids for {total_leaves} leaves"
        )));
    }
    let expected = file_size(hyper.n_roots, grids, hyper.resolution);
    if bytes.len() < expected {
        return Err(Error::Truncated {
            offset: bytes.len(),
            needed: expected - bytes.len(),
            available: 0,
        });
    }
    if bytes.len() > expected {
        return Err(Error::Malformed(format!(
            "{} trailing bytes",
            bytes.len() - expected
        )));
    }
    let mut r = Reader {
        bytes,
        pos: FIXED_HEADER_BYTES,
    };
    let mut roots = Vec::with_capacity(hyper.n_roots);
    for _ in 0..hyper.n_roots {
        let c = [r.f32()?, r.f32()?, r.f32()?];
        let s = r.f32()?;
        if c.iter().any(|v| !v.is_finite()) || !s.is_finite() || s < 0.0 {
            return Err(Error::Malformed("non-finite root record".into()));
        }
        roots.push(RootVoxel {
            center: Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64),
            half_extent: s as f64,
        });
    }
    let parents = total_leaves / 8;
    let mut records = Vec::with_capacity(grids);
    let mut last_leaf: Option<u32> = None;
    for _ in 0..grids {
        let parent = r.u32()?;
        let sibling = r.u8()?;
        if parent as usize >= parents {
            return Err(Error::CodeOutOfRange {
                field: "parent index",
                code: parent,
            });
        }
        if sibling >= 8 {
            return Err(Error::CodeOutOfRange {
                field: "sibling index",
                code: sibling as u32,
            });
        }
        let leaf = parent * 8 + sibling as u32;
        if last_leaf.is_some_and(|l| leaf <= l) {
            return Err(Error::Malformed(format!(
                "grid records out of order at leaf {leaf}"
            )));
        }
        last_leaf = Some(leaf);
        let euler = r.arr3()?;
        if let Some(&c) = euler.iter().find(|&&c| c as u32 >= EULER_CODES) {
            return Err(Error::CodeOutOfRange {
                field: "euler angle",
                code: c as u32,
            });
        }
        let scale = r.arr3()?;
        if let Some(&c) = scale.iter().find(|&&c| c < MIN_SCALE_CODE) {
            return Err(Error::CodeOutOfRange {
                field: "grid scale",
                code: c as u32,
            });
        }
        let center = r.arr3()?;
        let values: Vec<f64> = r
            .take(m3)?
            .iter()
            .map(|&c| VALUE_RANGE.dequantize(c as u32))
            .collect();
        records.push((
            leaf,
            GeometryCodes {
                euler,
                scale,
                center,
            },
            values,
        ));
    }
    let mut forest = subdivide(&roots, hyper.alpha, hyper.depth)?;
    let mut flags = vec![false; total_leaves];
    for (leaf, _, _) in &records {
        flags[*leaf as usize] = true;
    }
    forest.set_occupancy(&flags)?;
    let grid_list = records
        .into_iter()
        .map(|(leaf, codes, values)| LocalGrid::from_codes(leaf, codes, values))
        .collect();
    let rep = GalaRep::new(hyper, forest, grid_list, true)?;
    if DomainStats::of(&rep) != header.stats {
        return Err(Error::Malformed(
            "normalization statistics do not match the data".into(),
        ));
    }
    Ok(rep)
}

pub fn save(rep: &GalaRep, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(rep)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<GalaRep> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Flattened, `[0, 1]`-normalized tensors for generative modelling.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationData {
    pub n_roots: usize,
    pub resolution: usize,
    pub depth: usize,
    pub stats: DomainStats,
    /// `N_o x 4`: root center, root half-extent.
    pub roots: Vec<[f64; 4]>,
    /// One byte per leaf slot: 1 for a real grid, 0 for padding.
    pub mask: Vec<u8>,
    /// `rows x 10`: quaternion `(w, x, y, z)`, scales, center.
    pub geometry: Vec<[f64; 10]>,
    /// `rows x m^3` lattice values.
    pub values: Vec<Vec<f64>>,
}

fn unit(v: f64, [lo, hi]: [f32; 2]) -> f64 {
    let (lo, hi) = (lo as f64, hi as f64);
    if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Inverse of the per-domain normalization.
pub fn denormalize(u: f64, [lo, hi]: [f32; 2]) -> f64 {
    lo as f64 + u * (hi as f64 - lo as f64)
}

/// Builds the export rows. Leaf slots follow leaf order, so the eight
/// children of a parent are consecutive. `stats` overrides the per-file
/// statistics (for dataset-wide normalization).
pub fn generation_data(rep: &GalaRep, stats: Option<DomainStats>) -> Result<GenerationData> {
    if !rep.is_quantized() {
        return Err(Error::NotQuantized);
    }
    let stats = stats.unwrap_or_else(|| DomainStats::of(rep));
    let h = rep.hyperparameters();
    let forest = rep.forest();
    let rows = forest.num_leaves();
    let m3 = h.resolution.pow(3);
    let roots = forest
        .roots()
        .iter()
        .map(|r| {
            [
                unit(r.center.x, stats.root_center),
                unit(r.center.y, stats.root_center),
                unit(r.center.z, stats.root_center),
                unit(r.half_extent, stats.root_scale),
            ]
        })
        .collect();
    let mut mask = vec![0u8; rows];
    let mut geometry = vec![[0.0; 10]; rows];
    let mut values = vec![vec![0.0; m3]; rows];
    for g in rep.grids() {
        let row = g.leaf as usize;
        mask[row] = 1;
        let mut q = *g.rotation.quaternion();
        if q.w < 0.0 {
            q = -q;
        }
        let mut geo = [0.0; 10];
        for (k, c) in [q.w, q.i, q.j, q.k].iter().enumerate() {
            geo[k] = ((c + 1.0) * 0.5).clamp(0.0, 1.0);
        }
        for k in 0..3 {
            geo[4 + k] = unit(g.scales[k], stats.grid_scale);
            geo[7 + k] = unit(g.center[k], stats.grid_center);
        }
        geometry[row] = geo;
        values[row] = g
            .values
            .iter()
            .map(|&v| ((v + TRUNCATION) / (2.0 * TRUNCATION)).clamp(0.0, 1.0))
            .collect();
    }
    Ok(GenerationData {
        n_roots: h.n_roots,
        resolution: h.resolution,
        depth: h.depth,
        stats,
        roots,
        mask,
        geometry,
        values,
    })
}

impl GenerationData {
    pub fn rows(&self) -> usize {
        self.mask.len()
    }

    /// Flat binary form:
    ///
    /// ```text
    /// magic "GALX" | version u32 | N_o u32 | rows u32 | m u32 | d u32
    /// 8 x f64 statistics (same order as the .gala header)
    /// X_o: N_o x 4 f64 | mask: rows x u8 | X_geo: rows x 10 f64 | X_V: rows x m^3 f64
    /// ```
    pub fn to_bytes(&self) -> Vec<u8> {
        let m3 = self.resolution.pow(3);
        let rows = self.rows();
        let mut out =
            Vec::with_capacity(GEN_HEADER_BYTES + 32 * self.n_roots + rows * (1 + 8 * (10 + m3)));
        out.extend_from_slice(GEN_MAGIC);
        for v in [
            GEN_VERSION,
            self.n_roots as u32,
            rows as u32,
            self.resolution as u32,
            self.depth as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in self.stats.as_array() {
            out.extend_from_slice(&(v as f64).to_le_bytes());
        }
        for r in &self.roots {
            r.iter()
                .for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        }
        out.extend_from_slice(&self.mask);
        for g in &self.geometry {
            g.iter()
                .for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        }
        for row in &self.values {
            row.iter()
                .for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        }
        out
    }
}

pub fn export_generation_data(
    rep: &GalaRep,
    path: impl AsRef<Path>,
    stats: Option<DomainStats>,
) -> Result<GenerationData> {
    let path = path.as_ref();
    let data = generation_data(rep, stats)?;
    std::fs::write(path, data.to_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(data)
}

pub fn read_stats_sidecar(path: impl AsRef<Path>) -> Result<DomainStats> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DomainStats::parse_sidecar(&text)
}

pub fn write_stats_sidecar(stats: &DomainStats, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, stats.to_sidecar()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::subdivide;
    use crate::Mat3;

    fn tiny_rep(depth: usize) -> GalaRep {
        let roots = vec![
            RootVoxel {
                center: Vec3::new(0.125, -0.25, 0.0),
                half_extent: 0.25,
            },
            RootVoxel {
                center: Vec3::new(-0.125, 0.25, 0.0),
                half_extent: 0.125,
            },
        ];
        let mut forest = subdivide(&roots, 0.2f32 as f64, depth).unwrap();
        let n = forest.num_leaves();
        let occupied: Vec<usize> = (0..n).filter(|i| i % 3 == 1).collect();
        let mut flags = vec![false; n];
        occupied.iter().for_each(|&i| flags[i] = true);
        forest.set_occupancy(&flags).unwrap();
        let grids = occupied
            .iter()
            .map(|&leaf| {
                let node = forest.leaves()[leaf];
                let mut g = LocalGrid::new(
                    leaf as u32,
                    node.center,
                    Mat3::identity(),
                    Vec3::repeat(0.03),
                    3,
                );
                g.quantize_geometry();
                g.values
                    .iter_mut()
                    .enumerate()
                    .for_each(|(k, v)| *v = VALUE_RANGE.fake_quantize(k as f64 * 0.01 - 0.1));
                g
            })
            .collect();
        let hyper = Hyperparameters {
            n_roots: 2,
            alpha: 0.2f32 as f64,
            resolution: 3,
            depth,
            histogram_bins: 6,
            mode: ExtractionMode::NormalsHistogram,
        };
        GalaRep::new(hyper, forest, grids, true).unwrap()
    }

    #[test]
    fn roundtrip_and_size() {
        for depth in [1, 2] {
            let rep = tiny_rep(depth);
            let bytes = encode(&rep).unwrap();
            assert_eq!(bytes.len(), file_size(2, rep.grids().len(), 3));
            let back = decode(&bytes).unwrap();
            assert_eq!(back, rep);
            assert_eq!(encode(&back).unwrap(), bytes);
        }
    }

    #[test]
    fn default_fit_size() {
        let size = file_size(256, 2048, 5);
        assert_eq!(size, 56 + 4096 + 2048 * 139);
        assert!((size as f64 / 1e6 - 0.28).abs() / 0.28 < 0.05);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode(&tiny_rep(1)).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::BadMagic { .. })));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(
            decode(&v2),
            Err(Error::UnsupportedVersion { found: 2, .. })
        ));
        assert!(matches!(
            decode(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated { .. })
        ));
        assert!(matches!(decode(&bytes[..10]), Err(Error::Truncated { .. })));
        let first_grid = FIXED_HEADER_BYTES + 2 * ROOT_RECORD_BYTES;
        let mut euler = bytes.clone();
        euler[first_grid + 5] = 200;
        assert!(matches!(
            decode(&euler),
            Err(Error::CodeOutOfRange {
                field: "euler angle",
                ..
            })
        ));
        let mut scale = bytes.clone();
        scale[first_grid + 8] = 0;
        assert!(matches!(
            decode(&scale),
            Err(Error::CodeOutOfRange {
                field: "grid scale",
                ..
            })
        ));
        let mut sib = bytes.clone();
        sib[first_grid + 4] = 8;
        assert!(matches!(decode(&sib), Err(Error::CodeOutOfRange { .. })));
        let mut stats = bytes.clone();
        stats[24] ^= 1;
        assert!(decode(&stats).is_err());
    }

    #[test]
    fn unquantized_rep_is_refused() {
        let rep = tiny_rep(1);
        let raw = GalaRep::new(
            *rep.hyperparameters(),
            rep.forest().clone(),
            rep.grids().to_vec(),
            false,
        )
        .unwrap();
        assert!(matches!(encode(&raw), Err(Error::NotQuantized)));
    }

    #[test]
    fn empty_rep_roundtrip() {
        let roots = vec![RootVoxel {
            center: Vec3::zeros(),
            half_extent: 0.5,
        }];
        let forest = subdivide(&roots, 0.0, 1).unwrap();
        let rep = GalaRep::new(
            Hyperparameters {
                n_roots: 1,
                alpha: 0.0,
                ..Hyperparameters::default()
            },
            forest,
            Vec::new(),
            true,
        )
        .unwrap();
        let bytes = encode(&rep).unwrap();
        assert_eq!(bytes.len(), FIXED_HEADER_BYTES + ROOT_RECORD_BYTES);
        assert_eq!(decode(&bytes).unwrap(), rep);
    }

    #[test]
    fn generation_rows_and_range() {
        let rep = tiny_rep(1);
        let data = generation_data(&rep, None).unwrap();
        assert_eq!(data.rows(), 16);
        assert_eq!(
            data.mask.iter().filter(|&&b| b == 1).count(),
            rep.grids().len()
        );
        let all = data
            .roots
            .iter()
            .flatten()
            .chain(data.geometry.iter().flatten())
            .chain(data.values.iter().flatten());
        for &v in all {
            assert!((0.0..=1.0).contains(&v));
        }
        for (r, row) in rep.forest().roots().iter().zip(&data.roots) {
            for (v, c) in row[..3].iter().zip(r.center.iter()) {
                assert_eq!(denormalize(*v, data.stats.root_center) as f32, *c as f32);
            }
            assert_eq!(
                denormalize(row[3], data.stats.root_scale) as f32,
                r.half_extent as f32
            );
        }
        let bytes = data.to_bytes();
        assert_eq!(
            bytes.len(),
            GEN_HEADER_BYTES + 32 * 2 + 16 + 16 * 8 * (10 + 27)
        );
        assert_eq!(&bytes[..4], GEN_MAGIC);
    }

    #[test]
    fn sidecar_roundtrip() {
        let s = DomainStats::of(&tiny_rep(1));
        assert_eq!(DomainStats::parse_sidecar(&s.to_sidecar()).unwrap(), s);
        assert!(DomainStats::parse_sidecar("root_center_min=0").is_err());
        assert!(DomainStats::parse_sidecar("bogus=1").is_err());
    }
}
