mod common;

use common::{brute_force_flip, random_slice, rng, toy_rep};
use gala::reconstruct::{
    flip_interior_signs, flip_slice, marching_cubes, reconstruct, sample_volume, SdfVolume,
};
use gala::Vec3;

#[test]
fn flip_matches_union_find_on_random_slices() {
    let mut r = rng(808);
    let mut flipped_any = 0;
    for _ in 0..1000 {
        let slice = random_slice(&mut r, 32, 32);
        let expected = brute_force_flip(&slice, 32, 32);
        let mut got = slice.clone();
        flip_slice(&mut got, 32, 32);
        assert_eq!(got, expected);
        flipped_any += (got != slice) as usize;
    }
    // The generator must exercise both outcomes.
    assert!(flipped_any > 50 && flipped_any < 1000, "{flipped_any}");
}

#[test]
fn flip_on_rectangular_and_degenerate_slices() {
    let mut r = rng(9);
    for (w, h) in [(1, 1), (1, 7), (7, 1), (2, 2), (3, 3), (17, 5)] {
        for _ in 0..50 {
            let slice = random_slice(&mut r, w, h);
            let mut got = slice.clone();
            flip_slice(&mut got, w, h);
            assert_eq!(got, brute_force_flip(&slice, w, h), "{w}x{h}");
        }
    }
}

#[test]
fn flip_is_idempotent_per_volume() {
    let rep = toy_rep(5, 6, 5);
    let mut vol = sample_volume(&rep, 48).unwrap();
    flip_interior_signs(&mut vol);
    let once = vol.clone();
    flip_interior_signs(&mut vol);
    assert_eq!(vol, once);
}

/// Sphere of radius 0.3 with a hollow truncation core, as a sparse grid
/// field would produce: flipping must make the core negative so marching
/// cubes emits only the outer surface.
#[test]
fn hollow_core_is_filled_by_flipping() {
    let res = 64;
    let field = |p: &Vec3| {
        let d = p.norm() - 0.3;
        if d < -0.05 {
            0.1
        } else {
            d.clamp(-0.1, 0.1)
        }
    };
    let mut vol = SdfVolume::from_fn(res, field);
    let raw = marching_cubes(&vol, 0.0).unwrap();
    flip_interior_signs(&mut vol);
    let mesh = marching_cubes(&vol, 0.0).unwrap();
    assert!(mesh.is_closed());
    let exact = 4.0 / 3.0 * std::f64::consts::PI * 0.3f64.powi(3);
    assert!(
        (mesh.signed_volume() - exact).abs() < 0.03 * exact,
        "{}",
        mesh.signed_volume()
    );
    // Without flipping the spurious inner shell subtracts volume.
    assert!(raw.signed_volume() < 0.9 * exact);
}

#[test]
fn toy_reconstruction_is_watertight() {
    let rep = toy_rep(12, 8, 5);
    let mesh = reconstruct(&rep, 64, true).unwrap();
    assert!(!mesh.is_empty());
    assert!(mesh.is_closed());
    assert_eq!(mesh.non_manifold_edge_count(), 0);
}
