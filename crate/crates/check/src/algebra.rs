//! Products against the symbolic oracle, isomorphisms, duals and rotations.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use clifford_core::algebra::{
    build_blade_table, dual, geometric_product_3d, gp2_with, quaternion_rotation_matrix, Cl2Table, Multivector3,
    Quaternion, Signature, CL02_PRODUCT,
};
use clifford_oracle::{hamilton, oracle_gp, rotate_vector, SymbolicBladeProduct};

use crate::{max_abs_diff, measure, CheckConfig, Property, Suite};

pub const RANDOM_CASES: usize = 10_000;

fn mv<const N: usize>(rng: &mut ChaCha8Rng) -> [f64; N] {
    std::array::from_fn(|_| rng.gen_range(-1.0..1.0))
}

fn basis<const N: usize>(i: usize) -> [f64; N] {
    let mut a = [0.0; N];
    a[i] = 1.0;
    a
}

fn gp3(a: &[f64; 8], b: &[f64; 8]) -> [f64; 8] {
    geometric_product_3d(&Multivector3(*a), &Multivector3(*b)).0
}

fn basis_pairs_2d(table: &Cl2Table, p: usize, q: usize) -> (usize, f64) {
    let mut err: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let (a, b) = (basis::<4>(i), basis::<4>(j));
            err = err.max(max_abs_diff(&gp2_with(table, &a, &b), &oracle_gp(p, q, &a, &b)));
        }
    }
    (16, err)
}

fn random_2d(table: &Cl2Table, p: usize, q: usize, rng: &mut ChaCha8Rng) -> (usize, f64) {
    let mut err: f64 = 0.0;
    for _ in 0..RANDOM_CASES {
        let (a, b) = (mv::<4>(rng), mv::<4>(rng));
        err = err.max(max_abs_diff(&gp2_with(table, &a, &b), &oracle_gp(p, q, &a, &b)));
    }
    (RANDOM_CASES, err)
}

/// Criterion-level checks of the specialised products against the oracle.
pub fn oracle_equivalence(cfg: &CheckConfig) -> Vec<Property> {
    let s = Suite::Algebra;
    let mut rng = cfg.rng(1);
    vec![
        measure(s, "cl20_basis_pairs_exact", 0.0, || basis_pairs_2d(&cfg.cl20, 2, 0)),
        measure(s, "cl02_basis_pairs_exact", 0.0, || basis_pairs_2d(&CL02_PRODUCT, 0, 2)),
        measure(s, "cl30_basis_pairs_exact", 0.0, || {
            let mut err: f64 = 0.0;
            for i in 0..8 {
                for j in 0..8 {
                    let (a, b) = (basis::<8>(i), basis::<8>(j));
                    err = err.max(max_abs_diff(&gp3(&a, &b), &oracle_gp(3, 0, &a, &b)));
                }
            }
            (64, err)
        }),
        measure(s, "cl20_random_vs_oracle", 1e-12, || random_2d(&cfg.cl20, 2, 0, &mut rng)),
        measure(s, "cl02_random_vs_oracle", 1e-12, || random_2d(&CL02_PRODUCT, 0, 2, &mut rng)),
        measure(s, "cl30_random_vs_oracle", 1e-12, || {
            let mut err: f64 = 0.0;
            for _ in 0..RANDOM_CASES {
                let (a, b) = (mv::<8>(&mut rng), mv::<8>(&mut rng));
                err = err.max(max_abs_diff(&gp3(&a, &b), &oracle_gp(3, 0, &a, &b)));
            }
            (RANDOM_CASES, err)
        }),
    ]
}

/// Cl(0,1) against complex numbers and Cl(0,2) against quaternions.
pub fn isomorphisms(cfg: &CheckConfig) -> Vec<Property> {
    let s = Suite::Algebra;
    let mut rng = cfg.rng(2);
    let cl01 = build_blade_table(0, 1).expect("Cl(0,1) exists");
    vec![
        measure(s, "cl01_complex_exact_on_integers", 0.0, || {
            let mut err: f64 = 0.0;
            for _ in 0..1000 {
                let v: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-50i32..50) as f64);
                let z = Complex64::new(v[0], v[1]) * Complex64::new(v[2], v[3]);
                err = err.max(max_abs_diff(&cl01.product(&v[..2], &v[2..]), &[z.re, z.im]));
            }
            (1000, err)
        }),
        measure(s, "cl01_complex_random", 1e-12, || {
            let mut err: f64 = 0.0;
            for _ in 0..RANDOM_CASES {
                let v = mv::<4>(&mut rng);
                let z = Complex64::new(v[0], v[1]) * Complex64::new(v[2], v[3]);
                err = err.max(max_abs_diff(&cl01.product(&v[..2], &v[2..]), &[z.re, z.im]));
            }
            (RANDOM_CASES, err)
        }),
        measure(s, "cl02_hamilton_random", 1e-12, || {
            let mut err: f64 = 0.0;
            for _ in 0..RANDOM_CASES {
                let (a, b) = (mv::<4>(&mut rng), mv::<4>(&mut rng));
                err = err.max(max_abs_diff(&gp2_with(&CL02_PRODUCT, &a, &b), &hamilton(a, b)));
                let q = Quaternion::from_array(a) * Quaternion::from_array(b);
                err = err.max(max_abs_diff(&q.to_array(), &hamilton(a, b)));
            }
            (RANDOM_CASES, err)
        }),
    ]
}

pub fn run(cfg: &CheckConfig) -> Vec<Property> {
    let s = Suite::Algebra;
    let mut out = oracle_equivalence(cfg);
    out.extend(isomorphisms(cfg));
    let mut rng = cfg.rng(3);
    out.push(measure(s, "blade_tables_vs_symbolic", 0.0, || {
        let mut err: f64 = 0.0;
        let mut cases = 0;
        for (p, q) in [(1u8, 0u8), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3)] {
            let table = build_blade_table(p, q).expect("dimension at most three");
            let sym = SymbolicBladeProduct::new(p as usize, q as usize);
            for &(i, j, k, sign) in &sym.entries {
                let (k2, s2) = table.entry(i, j);
                err = err.max(if k2 == k { (s2 - sign as f64).abs() } else { f64::INFINITY });
                cases += 1;
            }
        }
        (cases, err)
    }));
    out.push(measure(s, "bilinearity", 1e-12, || {
        let mut err: f64 = 0.0;
        for _ in 0..1000 {
            let (al, be) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let (a, a2, b) = (mv::<4>(&mut rng), mv::<4>(&mut rng), mv::<4>(&mut rng));
            let mix: [f64; 4] = std::array::from_fn(|k| al * a[k] + be * a2[k]);
            let (l, r1, r2) = (gp2_with(&cfg.cl20, &mix, &b), gp2_with(&cfg.cl20, &a, &b), gp2_with(&cfg.cl20, &a2, &b));
            let r: Vec<f64> = (0..4).map(|k| al * r1[k] + be * r2[k]).collect();
            err = err.max(max_abs_diff(&l, &r));
            let (a, a2, b) = (mv::<8>(&mut rng), mv::<8>(&mut rng), mv::<8>(&mut rng));
            let mix: [f64; 8] = std::array::from_fn(|k| al * a[k] + be * a2[k]);
            let (l, r1, r2) = (gp3(&mix, &b), gp3(&a, &b), gp3(&a2, &b));
            let r: Vec<f64> = (0..8).map(|k| al * r1[k] + be * r2[k]).collect();
            err = err.max(max_abs_diff(&l, &r));
        }
        (1000, err)
    }));
    out.push(measure(s, "associativity", 1e-10, || {
        let rel = |l: &[f64], r: &[f64]| max_abs_diff(l, r) / l.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut err: f64 = 0.0;
        for _ in 0..1000 {
            let (a, b, c) = (mv::<4>(&mut rng), mv::<4>(&mut rng), mv::<4>(&mut rng));
            for t in [&cfg.cl20, &CL02_PRODUCT] {
                let l = gp2_with(t, &gp2_with(t, &a, &b), &c);
                let r = gp2_with(t, &a, &gp2_with(t, &b, &c));
                err = err.max(rel(&l, &r));
            }
            let (a, b, c) = (mv::<8>(&mut rng), mv::<8>(&mut rng), mv::<8>(&mut rng));
            err = err.max(rel(&gp3(&gp3(&a, &b), &c), &gp3(&a, &gp3(&b, &c))));
        }
        (1000, err)
    }));
    out.push(measure(s, "rotation_matrix_vs_sandwich", 1e-10, || {
        let mut err: f64 = 0.0;
        let mut cases = 0;
        while cases < 1000 {
            let q = Quaternion::from_array(mv::<4>(&mut rng));
            if q.norm() < 1e-3 {
                continue;
            }
            let v: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let r = quaternion_rotation_matrix(q, 0.0).expect("non-zero quaternion");
            let u = q.normalized(0.0).expect("non-zero quaternion").to_array();
            let rv: Vec<f64> = (0..3).map(|i| (0..3).map(|k| r[i][k] * v[k]).sum()).collect();
            err = err.max(max_abs_diff(&rv, &rotate_vector(u, v)));
            cases += 1;
        }
        (cases, err)
    }));
    out.push(measure(s, "double_dual_is_pseudoscalar_square", 0.0, || {
        let mut err: f64 = 0.0;
        let mut cases = 0;
        for sig in [Signature::CL20, Signature::CL02, Signature::CL30] {
            let table = build_blade_table(sig.p(), sig.q()).expect("supported signature");
            let nb = sig.blade_count();
            let mut pseudo = vec![0.0; nb];
            pseudo[nb - 1] = 1.0;
            let i2 = table.product(&pseudo, &pseudo);
            for b in 0..nb {
                let mut a = vec![0.0; nb];
                a[b] = 1.0;
                let dd = dual(&dual(&a, sig).expect("blade count"), sig).expect("blade count");
                err = err.max(max_abs_diff(&dd, &table.product(&a, &i2)));
                cases += 1;
            }
        }
        (cases, err)
    }));
    out
}
