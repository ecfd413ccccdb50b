use std::fs;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use clifford_core::datagen::*;
use clifford_core::layers::Dtype;
use clifford_core::Error;

fn small_advection(velocity: VelocityLaw, max_speed: f64) -> AdvectionParams {
    AdvectionParams {
        grid: 16,
        trajectories: 3,
        steps: 5,
        dt: 0.05,
        velocity,
        max_speed,
        blobs: 2,
        seed: 7,
    }
}

#[test]
fn zero_velocity_is_static() {
    for law in [VelocityLaw::Constant, VelocityLaw::SolidRotation] {
        let set = gen_advection2d(&small_advection(law, 0.0)).unwrap();
        for tr in 0..set.trajectories {
            let f0 = set.frame(tr, 0);
            for t in 1..set.steps {
                let d = f0.iter().zip(set.frame(tr, t)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(d <= 1e-12, "{law:?}: {d}");
            }
        }
    }
}

#[test]
fn full_period_translation_returns_initial_field() {
    // velocity (1, 0) over T = M·dx/v = 1 wraps the unit domain exactly once
    let m = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s0 = blob_field(m, 3, &mut rng);
    let s1 = spectral_shift(&s0, m, [1.0, 0.0]);
    let d = s0.iter().zip(&s1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(d <= 1e-8, "{d}");
    // a whole-cell shift is an index permutation
    let s2 = spectral_shift(&s0, m, [3.0 / m as f64, -2.0 / m as f64]);
    for i in 0..m {
        for j in 0..m {
            let src = ((i + m - 3) % m) * m + (j + 2) % m;
            assert!((s2[i * m + j] - s0[src]).abs() <= 1e-10);
        }
    }
}

#[test]
fn advection_conserves_mass() {
    let set = gen_advection2d(&small_advection(VelocityLaw::Constant, 1.0)).unwrap();
    let n = set.spatial_len();
    for tr in 0..set.trajectories {
        let mass0: f64 = set.frame(tr, 0)[..n].iter().sum();
        for t in 1..set.steps {
            let mass: f64 = set.frame(tr, t)[..n].iter().sum();
            assert!((mass - mass0).abs() <= 1e-10, "{}", mass - mass0);
        }
    }
}

#[test]
fn generators_are_deterministic() {
    let p = small_advection(VelocityLaw::SolidRotation, 0.5);
    assert_eq!(gen_advection2d(&p).unwrap(), gen_advection2d(&p).unwrap());
    let q = MaxwellParams { grid: 8, trajectories: 2, steps: 3, ..Default::default() };
    assert_eq!(gen_maxwell3d(&q).unwrap(), gen_maxwell3d(&q).unwrap());
    let mut r = p.clone();
    r.seed += 1;
    assert_ne!(gen_advection2d(&p).unwrap().data, gen_advection2d(&r).unwrap().data);
}

#[test]
fn maxwell_without_sources_stays_zero() {
    let q = MaxwellParams {
        grid: 8,
        trajectories: 2,
        steps: 4,
        min_sources: 0,
        max_sources: 0,
        ..Default::default()
    };
    let set = gen_maxwell3d(&q).unwrap();
    assert!(set.data.iter().all(|&v| v == 0.0));
}

#[test]
fn maxwell_rejects_courant_violation() {
    let q = MaxwellParams { grid: 8, dt: Some(0.2), ..Default::default() };
    assert!(matches!(gen_maxwell3d(&q), Err(Error::Courant { .. })));
    assert!(matches!(Yee::new(8, 1.0, 0.6), Err(Error::Courant { .. })));
}

#[test]
fn maxwell_energy_is_conserved() {
    let m = 16;
    let dx = 1.0 / m as f64;
    let mut yee = Yee::new(m, dx, 0.5 * courant_limit(dx)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for a in 0..3 {
        yee.d[a] = smooth_field(m, 2, &mut rng);
        yee.h[a] = smooth_field(m, 2, &mut rng);
    }
    let (e0, s0) = (yee.energy(), yee.staggered_energy());
    let mut drift: f64 = 0.0;
    for _ in 0..100 {
        yee.step(&[]);
        drift = drift.max((yee.energy() - e0).abs() / e0);
    }
    assert!(drift <= 0.01, "{drift}");
    let s = yee.staggered_energy();
    assert!((s - s0).abs() / s0 <= 1e-10, "{}", (s - s0) / s0);
}

#[test]
fn plane_wave_travels_at_unit_speed() {
    let dx = 1.0 / 32.0;
    let c = plane_wave_phase_speed(32, 1, 0.5 * courant_limit(dx), 32).unwrap();
    assert!((c - 1.0).abs() <= 0.05, "{c}");
}

#[test]
fn sources_drive_the_field() {
    let q = MaxwellParams { grid: 8, trajectories: 1, steps: 3, min_sources: 1, ..Default::default() };
    let set = gen_maxwell3d(&q).unwrap();
    assert!(set.frame(0, 2).iter().any(|&v| v != 0.0));
    assert!(set.frame(0, 0).iter().all(|&v| v == 0.0));
}

#[test]
fn clf_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.clf");
    let mut set = gen_advection2d(&small_advection(VelocityLaw::Constant, 1.0)).unwrap();
    set.dtype = Dtype::F64;
    write_clf(&path, &set).unwrap();
    assert_eq!(read_clf(&path).unwrap(), set);

    // f32 storage: a second write of the widened values is byte-identical
    set.dtype = Dtype::F32;
    write_clf(&path, &set).unwrap();
    let widened = read_clf(&path).unwrap();
    let bytes = fs::read(&path).unwrap();
    write_clf(&path, &widened).unwrap();
    assert_eq!(fs::read(&path).unwrap(), bytes);

    let header = read_clf_header(&path).unwrap();
    assert_eq!(header.shape, vec![3, 5, 4, 1, 16, 16]);
    assert_eq!(header.provenance.generator, "advection2d");

    // header-only inspection works on a file whose payload is cut short
    let cut = &bytes[..bytes.len() - 100];
    fs::write(&path, cut).unwrap();
    assert_eq!(read_clf_header(&path).unwrap(), header);
    assert!(matches!(read_clf(&path), Err(Error::Truncated { .. })));

    let mut bad = bytes.clone();
    bad[0] = b'X';
    fs::write(&path, &bad).unwrap();
    assert!(matches!(read_clf(&path), Err(Error::BadMagic(_))));

    let mut extra = bytes.clone();
    extra.extend_from_slice(&[0u8; 4]);
    fs::write(&path, &extra).unwrap();
    assert!(matches!(read_clf(&path), Err(Error::HeaderMismatch(_))));
}
