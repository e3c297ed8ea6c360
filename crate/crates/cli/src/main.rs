use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gala::fitting::RefineConfig;
use gala::grid::ExtractionMode;
use gala::io::{self, DomainStats};
use gala::mesh::{load_mesh, save_mesh};
use gala::metrics::{mesh_distances, DEFAULT_SAMPLES};
use gala::pipeline::{fit, held_out_batch, FitConfig};
use gala::reconstruct::{reconstruct, DEFAULT_RESOLUTION};
use gala::{par, ErrorClass, Hyperparameters};

#[derive(Parser)]
#[command(
    name = "gala",
    version,
    about = "Fit, reconstruct and evaluate local adaptive SDF grid representations"
)]
struct Cli {
    /// Worker threads for all parallel stages.
    #[arg(long, global = true, env = "GALA_THREADS")]
    threads: Option<usize>,

    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    /// `key=value` lines.
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a mesh and write a .gala file.
    Fit(FitArgs),
    /// Mesh a .gala file with marching cubes.
    Reconstruct(ReconstructArgs),
    /// Chamfer and Hausdorff distances between two meshes.
    Eval(EvalArgs),
    /// Write the flattened generation tensors of a .gala file.
    ExportGen(ExportArgs),
    /// Print a .gala header and summary.
    Info(InfoArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Oriented grids with histogram rescaling (same as normals-hist).
    Full,
    /// Uniform axis-aligned grids filling each leaf.
    NoAdaptive,
    /// Axis-aligned tight boxes.
    Vanilla,
    /// PCA-oriented boxes without rescaling.
    Normals,
    NormalsHist,
}

impl From<Mode> for ExtractionMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Full | Mode::NormalsHist => ExtractionMode::NormalsHistogram,
            Mode::NoAdaptive => ExtractionMode::NoAdaptive,
            Mode::Vanilla => ExtractionMode::Vanilla,
            Mode::Normals => ExtractionMode::Normals,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// OBJ or STL mesh.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 256)]
    roots: usize,
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    #[arg(long, default_value_t = 5)]
    grid_res: usize,
    #[arg(long, default_value_t = 1)]
    depth: usize,
    #[arg(long, default_value_t = 400)]
    iters: usize,
    #[arg(long, default_value_t = 8192)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sample index that seeds farthest point sampling.
    #[arg(long, default_value_t = 0)]
    fps_init: usize,
    /// Refine at full precision; values are quantized only when saving.
    #[arg(long)]
    no_quantize: bool,
    #[arg(long, value_enum, default_value_t = Mode::Full)]
    mode: Mode,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    input: PathBuf,
    /// OBJ or STL output mesh.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    res: usize,
    /// Skip the interior sign-flip pass.
    #[arg(long)]
    no_flip: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Compare raw coordinates instead of normalizing both meshes first.
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Dataset-level min/max statistics (key=value sidecar). Defaults to the
    /// file's own statistics.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Write the statistics used to this sidecar.
    #[arg(long)]
    write_stats: Option<PathBuf>,
}

#[derive(Args)]
struct InfoArgs {
    #[arg(long)]
    input: PathBuf,
}

/// Ordered report fields.
#[derive(Default)]
struct Report(Vec<(&'static str, serde_json::Value)>);

impl Report {
    fn put(&mut self, key: &'static str, value: impl Into<serde_json::Value>) {
        self.0.push((key, value.into()));
    }

    fn secs(&mut self, key: &'static str, d: Duration) {
        self.put(key, d.as_secs_f64());
    }

    fn print(&self, format: Format) {
        match format {
            Format::Text => {
                for (k, v) in &self.0 {
                    match v {
                        serde_json::Value::String(s) => println!("{k}={s}"),
                        other => println!("{k}={other}"),
                    }
                }
            }
            Format::Json => {
                let map: serde_json::Map<String, serde_json::Value> = self
                    .0
                    .iter()
                    .map(|(k, v)| (k.to_string(), v.clone()))
                    .collect();
                println!("{}", serde_json::Value::Object(map));
            }
        }
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn cmd_fit(a: &FitArgs) -> Result<Report> {
    let mesh = load_mesh(&a.input).with_context(|| format!("loading {}", a.input.display()))?;
    let cfg = FitConfig {
        hyper: Hyperparameters {
            n_roots: a.roots,
            alpha: a.alpha,
            resolution: a.grid_res,
            depth: a.depth,
            histogram_bins: 2 * a.grid_res,
            mode: a.mode.into(),
        },
        refine: RefineConfig {
            iterations: a.iters,
            batch_size: a.batch,
            seed: a.seed,
            quantize: !a.no_quantize,
            ..RefineConfig::default()
        },
        fps_initial: a.fps_init,
        ..FitConfig::default()
    };
    let fitted = fit(&mesh, &cfg)?;
    let report = &fitted.report;
    let mut out = Report::default();
    out.put("input", path_str(&a.input));
    out.put("triangles", mesh.num_triangles());
    out.put("samples", report.samples);
    out.put("leaves", report.leaves);
    out.put("grids", report.grids);
    out.put("occupancy", report.grids as f64 / report.leaves as f64);
    out.put("param_count", report.param_count);
    out.put("final_mse", report.final_mse);
    if let Some((mse, n)) = report.final_covered {
        out.put("final_mse_covered", mse);
        out.put("covered_fraction", n as f64 / report.held_out_points as f64);
    }
    if let (Some(first), Some(last)) = (report.losses.first(), report.losses.last()) {
        out.put("batch_mse_first", *first);
        out.put("batch_mse_last", *last);
    }
    let rep = if fitted.rep.is_quantized() {
        fitted.rep
    } else {
        let batch = held_out_batch(&fitted.oracle, &fitted.samples, &cfg.refine)?;
        let q = fitted.rep.into_quantized();
        out.put("final_mse_quantized", q.mse_loss(&batch)?);
        q
    };
    let t = &report.timings;
    out.secs("time_sampling_s", t.sampling);
    out.secs("time_oracle_s", t.oracle);
    out.secs("time_forest_s", t.forest);
    out.secs("time_extraction_s", t.extraction);
    out.secs("time_refinement_s", t.refinement);
    out.secs("time_total_s", t.total);
    io::save(&rep, &a.output)?;
    out.put("output", path_str(&a.output));
    out.put(
        "bytes",
        io::file_size(
            rep.hyperparameters().n_roots,
            rep.grids().len(),
            rep.resolution(),
        ),
    );
    Ok(out)
}

fn cmd_reconstruct(a: &ReconstructArgs) -> Result<Report> {
    let rep = io::load(&a.input)?;
    let t = Instant::now();
    let mesh = reconstruct(&rep, a.res, !a.no_flip)?;
    let elapsed = t.elapsed();
    save_mesh(&mesh, &a.output)?;
    let mut out = Report::default();
    out.put("input", path_str(&a.input));
    out.put("resolution", a.res);
    out.put("flip", !a.no_flip);
    out.put("vertices", mesh.vertices().len());
    out.put("triangles", mesh.num_triangles());
    out.put("closed", mesh.is_closed());
    out.secs("time_s", elapsed);
    out.put("output", path_str(&a.output));
    Ok(out)
}

fn cmd_eval(a: &EvalArgs) -> Result<Report> {
    let ma = load_mesh(&a.a).with_context(|| format!("loading {}", a.a.display()))?;
    let mb = load_mesh(&a.b).with_context(|| format!("loading {}", a.b.display()))?;
    let d = mesh_distances(&ma, &mb, a.samples, a.seed, !a.no_normalize)?;
    let mut out = Report::default();
    out.put("a", path_str(&a.a));
    out.put("b", path_str(&a.b));
    out.put("samples", a.samples);
    out.put("seed", a.seed);
    out.put("normalized", !a.no_normalize);
    out.put("chamfer", d.chamfer());
    out.put("hausdorff", d.hausdorff());
    Ok(out)
}

fn cmd_export(a: &ExportArgs) -> Result<Report> {
    let rep = io::load(&a.input)?;
    let stats = match &a.stats {
        Some(p) => io::read_stats_sidecar(p)?,
        None => DomainStats::of(&rep),
    };
    let data = io::export_generation_data(&rep, &a.output, Some(stats))?;
    if let Some(p) = &a.write_stats {
        io::write_stats_sidecar(&stats, p)?;
    }
    let h = rep.hyperparameters();
    let mut out = Report::default();
    out.put("input", path_str(&a.input));
    out.put("roots", h.n_roots);
    out.put("rows", data.rows());
    out.put("real_rows", rep.grids().len());
    out.put("values_per_row", h.resolution.pow(3));
    out.put("bytes", data.to_bytes().len());
    out.put("output", path_str(&a.output));
    Ok(out)
}

fn cmd_info(a: &InfoArgs) -> Result<Report> {
    let bytes =
        std::fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let header = io::decode_header(&bytes)?;
    let rep = io::decode(&bytes)?;
    let h = rep.hyperparameters();
    let s = header.stats;
    let mut out = Report::default();
    out.put("input", path_str(&a.input));
    out.put("version", header.version);
    out.put("roots", h.n_roots);
    out.put("depth", h.depth);
    out.put("resolution", h.resolution);
    out.put("histogram_bins", h.histogram_bins);
    out.put("adaptive", h.mode.is_adaptive());
    out.put("alpha", header.alpha as f64);
    out.put("leaves", rep.forest().num_leaves());
    out.put("grids", rep.grids().len());
    out.put(
        "occupancy",
        rep.grids().len() as f64 / rep.forest().num_leaves() as f64,
    );
    out.put("param_count", rep.param_count());
    out.put("bytes", bytes.len());
    for (key, pair) in [
        ("root_center", s.root_center),
        ("root_scale", s.root_scale),
        ("grid_center", s.grid_center),
        ("grid_scale", s.grid_scale),
    ] {
        out.put(key, format!("{},{}", pair[0], pair[1]));
    }
    Ok(out)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<gala::Error>() {
            return match e.class() {
                ErrorClass::BadInput => 2,
                ErrorClass::Numeric => 3,
                ErrorClass::Io => 4,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 4;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| -> Result<Report> {
        if let Some(n) = cli.threads {
            par::set_global_threads(n)?;
        }
        match &cli.command {
            Command::Fit(a) => cmd_fit(a),
            Command::Reconstruct(a) => cmd_reconstruct(a),
            Command::Eval(a) => cmd_eval(a),
            Command::ExportGen(a) => cmd_export(a),
            Command::Info(a) => cmd_info(a),
        }
    })();
    match result {
        Ok(report) => {
            report.print(cli.format);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
