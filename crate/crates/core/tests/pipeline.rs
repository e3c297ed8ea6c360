use gala::fitting::RefineConfig;
use gala::forest::init_roots;
use gala::grid::ExtractionMode;
use gala::io::{decode, encode, file_size};
use gala::mesh::{normalize_mesh, sample_surface};
use gala::par;
use gala::pipeline::{f32_roots, fit, FitConfig, SAMPLES_PER_TRIANGLE};
use gala::reconstruct::sample_volume;
use gala::{shapes, Hyperparameters};

fn quick(n_roots: usize, iterations: usize) -> FitConfig {
    FitConfig {
        hyper: Hyperparameters {
            n_roots,
            ..Hyperparameters::default()
        },
        refine: RefineConfig {
            iterations,
            batch_size: 1024,
            ..RefineConfig::default()
        },
        ..FitConfig::default()
    }
}

#[test]
fn fit_is_deterministic_across_runs_and_thread_counts() {
    let mesh = shapes::torus(0.25, 0.08, 32, 16);
    let cfg = quick(32, 15);
    let a = fit(&mesh, &cfg).unwrap();
    let b = fit(&mesh, &cfg).unwrap();
    let c = par::with_threads(1, || fit(&mesh, &cfg).unwrap());
    let bytes = encode(&a.rep).unwrap();
    assert_eq!(bytes, encode(&b.rep).unwrap());
    assert_eq!(bytes, encode(&c.rep).unwrap());
    assert_eq!(a.report.losses, c.report.losses);
    assert_eq!(a.report.final_mse, c.report.final_mse);
}

#[test]
fn default_structure_at_full_occupancy() {
    // No refinement: only the structure is under test.
    for (mode, expected) in [
        (ExtractionMode::NormalsHistogram, 277_504),
        (ExtractionMode::NoAdaptive, 263_168),
    ] {
        let mut cfg = quick(256, 0);
        cfg.hyper.mode = mode;
        let f = fit(&shapes::icosphere(0.3, 4), &cfg).unwrap();
        assert_eq!(f.rep.forest().non_empty_count(), 2048);
        assert_eq!(f.report.param_count, expected);
        let bytes = encode(&f.rep).unwrap();
        assert_eq!(bytes.len(), file_size(256, 2048, 5));
    }
}

#[test]
fn saved_fit_reconstructs_identically() {
    let f = fit(&shapes::icosphere(0.3, 3), &quick(24, 10)).unwrap();
    let back = decode(&encode(&f.rep).unwrap()).unwrap();
    assert_eq!(
        sample_volume(&f.rep, 48).unwrap(),
        sample_volume(&back, 48).unwrap()
    );
}

#[test]
fn unquantized_fit_quantizes_for_storage() {
    let mut cfg = quick(16, 10);
    cfg.refine.quantize = false;
    let f = fit(&shapes::icosphere(0.3, 2), &cfg).unwrap();
    assert!(!f.rep.is_quantized());
    assert!(encode(&f.rep).is_err());
    let q = f.rep.into_quantized();
    assert!(q.is_quantized());
    assert!(decode(&encode(&q).unwrap()).is_ok());
}

#[test]
fn roots_cover_samples_of_random_blobs() {
    for seed in 0..20 {
        let mesh = normalize_mesh(&shapes::random_blob(seed, 3)).unwrap();
        let s = sample_surface(&mesh, SAMPLES_PER_TRIANGLE * mesh.num_triangles(), seed).unwrap();
        let roots = f32_roots(&s.points, &init_roots(&s.points, 64, 0).unwrap());
        for p in &s.points {
            assert!(
                roots.iter().any(|r| r.contains(p)),
                "blob {seed}: {p:?} uncovered"
            );
        }
    }
}

#[test]
fn invalid_hyperparameters_are_rejected() {
    let mesh = shapes::icosphere(0.3, 1);
    for bad in [
        Hyperparameters {
            n_roots: 0,
            ..Hyperparameters::default()
        },
        Hyperparameters {
            resolution: 1,
            ..Hyperparameters::default()
        },
        Hyperparameters {
            depth: 0,
            ..Hyperparameters::default()
        },
        Hyperparameters {
            alpha: 1.5,
            ..Hyperparameters::default()
        },
    ] {
        let cfg = FitConfig {
            hyper: bad,
            ..quick(1, 0)
        };
        assert!(matches!(
            fit(&mesh, &cfg),
            Err(gala::Error::InvalidArgument(_))
        ));
    }
}
