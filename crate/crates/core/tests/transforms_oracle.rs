use clifford_core::algebra::Signature;
use clifford_core::fields::MultivectorField;
use clifford_core::transforms::*;
use clifford_oracle::oracle_dft;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(sig: Signature, c: usize, dims: &[usize], seed: u64) -> MultivectorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = sig.blade_count() * c * dims.iter().product::<usize>();
    MultivectorField::from_data(sig, c, dims, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn restrict(f: &MultivectorField, blades: &[usize]) -> MultivectorField {
    let mut g = f.clone();
    for b in 0..f.blades() {
        if !blades.contains(&b) {
            for c in 0..f.channels() {
                g.plane_mut(b, c).iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }
    g
}

#[test]
fn fast_dft_matches_naive_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for dims in [vec![8, 8], vec![6, 10], vec![5, 4, 3], vec![7, 7, 7]] {
        let n: usize = dims.iter().product();
        let re: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let im: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for inverse in [false, true] {
            let g = ComplexGrid::new(1, dims.clone(), re.clone(), im.clone()).unwrap();
            let fast = if dims.len() == 2 { dft_2d(&g, inverse) } else { dft_3d(&g, inverse) }.unwrap();
            let (ore, oim) = oracle_dft(&re, &im, &dims, inverse);
            let err = fast.re.iter().zip(&ore).chain(fast.im.iter().zip(&oim))
                .map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err <= 1e-10, "{dims:?} inverse={inverse}: {err}");
        }
    }
}

#[test]
fn reassembly_equals_two_complex_dfts() {
    let f = random_field(Signature::CL20, 2, &[6, 5], 11);
    let s = clifford_ft_2d(&f).unwrap();
    for c in 0..2 {
        for &(r, i) in &[(0usize, 3usize), (1, 2)] {
            let (ore, oim) = oracle_dft(f.plane(r, c), f.plane(i, c), &[6, 5], false);
            for k in 0..30 {
                assert!((s.plane(r, c)[k] - ore[k]).abs() < 1e-10);
                assert!((s.plane(i, c)[k] - oim[k]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn single_mode_synthesis() {
    let dims = [4usize, 6];
    let mut s = CliffordSpectrum::zeros(Signature::CL20, 1, &dims);
    let xi = (1usize, 2usize);
    let flat = xi.0 * 6 + xi.1;
    s.set_at(0, flat, &[0.5, 1.0, -2.0, 0.25]);
    let f = clifford_ift_2d(&s).unwrap();
    for x0 in 0..4 {
        for x1 in 0..6 {
            let th = 2.0 * std::f64::consts::PI * ((xi.0 * x0) as f64 / 4.0 + (xi.1 * x1) as f64 / 6.0);
            let (c, sn) = (th.cos() / 24.0, th.sin() / 24.0);
            let k = x0 * 6 + x1;
            // (a + b i) e^{iθ} / N per pair
            assert!((f.plane(0, 0)[k] - (0.5 * c - 0.25 * sn)).abs() < 1e-12);
            assert!((f.plane(3, 0)[k] - (0.5 * sn + 0.25 * c)).abs() < 1e-12);
            assert!((f.plane(1, 0)[k] - (1.0 * c + 2.0 * sn)).abs() < 1e-12);
            assert!((f.plane(2, 0)[k] - (1.0 * sn - 2.0 * c)).abs() < 1e-12);
        }
    }
    let z = clifford_ift_2d(&CliffordSpectrum::zeros(Signature::CL20, 1, &dims)).unwrap();
    assert!(z.data().iter().all(|&v| v == 0.0));
}

#[test]
fn round_trip_up_to_32_cubed() {
    let f = random_field(Signature::CL30, 1, &[32, 32, 32], 5);
    let g = clifford_ift_3d(&clifford_ft_3d(&f).unwrap()).unwrap();
    assert!(g.rel_l2(&f) <= 1e-10);
    let f = random_field(Signature::CL20, 3, &[32, 32], 6);
    let g = clifford_ift_2d(&clifford_ft_2d(&f).unwrap()).unwrap();
    assert!(g.rel_l2(&f) <= 1e-10);
}

#[test]
fn constant_scalar_3d_is_dc_only() {
    let mut f = MultivectorField::zeros(Signature::CL30, 1, &[4, 4, 4]).unwrap();
    f.plane_mut(0, 0).iter_mut().for_each(|v| *v = 1.5);
    let s = clifford_ft_3d(&f).unwrap();
    assert!((s.plane(0, 0)[0] - 96.0).abs() < 1e-12);
    let rest = s.data().iter().enumerate().filter(|&(i, _)| i != 0).map(|(_, v)| v.abs()).fold(0.0, f64::max);
    assert!(rest < 1e-12);
}

#[test]
fn spinor_kernel_convolution_theorem() {
    let f = random_field(Signature::CL20, 1, &[6, 6], 1);
    let k = restrict(&random_field(Signature::CL20, 1, &[6, 6], 2), &[0, 3]);
    let lhs = clifford_ft_2d(&circular_convolve_direct(&f, &k, KernelKind::Spinor).unwrap()).unwrap();
    let rhs = clifford_ft_2d(&f).unwrap().product(&clifford_ft_2d(&k).unwrap().dagger()).unwrap();
    assert!(lhs.max_abs_diff(&rhs) <= 1e-9, "{}", lhs.max_abs_diff(&rhs));
}

#[test]
fn vector_kernel_convolution_identity_at_negated_frequency() {
    let f = random_field(Signature::CL20, 1, &[6, 5], 3);
    let k = restrict(&random_field(Signature::CL20, 1, &[6, 5], 4), &[1, 2]);
    let lhs = clifford_ft_2d(&circular_convolve_direct(&f, &k, KernelKind::Vector).unwrap()).unwrap();
    let rhs = clifford_ft_2d(&f).unwrap().product(&clifford_ft_2d(&k).unwrap()).unwrap();
    assert!(lhs.dagger().max_abs_diff(&rhs) <= 1e-9);
}

#[test]
fn full_kernel_convolution_theorem_3d() {
    let f = random_field(Signature::CL30, 1, &[4, 3, 5], 7);
    let k = random_field(Signature::CL30, 1, &[4, 3, 5], 8);
    let lhs = clifford_ft_3d(&circular_convolve_direct(&f, &k, KernelKind::Full).unwrap()).unwrap();
    let rhs = clifford_ft_3d(&f).unwrap().product(&clifford_ft_3d(&k).unwrap().dagger()).unwrap();
    assert!(lhs.max_abs_diff(&rhs) <= 1e-9, "{}", lhs.max_abs_diff(&rhs));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn linearity(seed in 0u64..1000, a in -3.0f64..3.0) {
        let f = random_field(Signature::CL20, 1, &[5, 4], seed);
        let g = random_field(Signature::CL20, 1, &[5, 4], seed + 1);
        let lhs = clifford_ft_2d(&f.scale(a).add(&g).unwrap()).unwrap();
        let sf = clifford_ft_2d(&f).unwrap();
        let sg = clifford_ft_2d(&g).unwrap();
        let err = lhs.data().iter().zip(sf.data().iter().zip(sg.data()))
            .map(|(l, (x, y))| (l - (a * x + y)).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-12 * 20.0);
    }

    #[test]
    fn round_trip_3d(seed in 0u64..1000, d0 in 1usize..6, d1 in 1usize..6, d2 in 1usize..6) {
        let f = random_field(Signature::CL30, 2, &[d0, d1, d2], seed);
        let g = clifford_ift_3d(&clifford_ft_3d(&f).unwrap()).unwrap();
        prop_assert!(g.rel_l2(&f) <= 1e-10);
    }

    #[test]
    fn shift_theorem(seed in 0u64..1000, t0 in -6isize..6, t1 in -6isize..6) {
        let dims = [6usize, 4];
        let f = random_field(Signature::CL20, 1, &dims, seed);
        let lhs = clifford_ft_2d(&f.circular_shift(&[t0, t1]).unwrap()).unwrap();
        let s = clifford_ft_2d(&f).unwrap();
        for x0 in 0..6 {
            for x1 in 0..4 {
                let th = -2.0 * std::f64::consts::PI * ((x0 as isize * t0) as f64 / 6.0 + (x1 as isize * t1) as f64 / 4.0);
                let k = x0 * 4 + x1;
                for &(r, i) in &[(0usize, 3usize), (1, 2)] {
                    let (a, b) = (s.plane(r, 0)[k], s.plane(i, 0)[k]);
                    let (er, ei) = (a * th.cos() - b * th.sin(), a * th.sin() + b * th.cos());
                    prop_assert!((lhs.plane(r, 0)[k] - er).abs() <= 1e-10);
                    prop_assert!((lhs.plane(i, 0)[k] - ei).abs() <= 1e-10);
                }
            }
        }
    }
}
