//! Equivariance, oracle equivalence, spectral identity, whitening and
//! parameter counts of the Clifford layers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use clifford_core::algebra::{product_table_2d, Signature};
use clifford_core::fields::MultivectorField;
use clifford_core::layers::{
    clifford_conv3d, clifford_conv_with, clifford_spectral_conv_with, groupnorm_forward, product_terms,
    rotational_clifford_conv2d, CliffordKernel, NormSpec, Padding, RotationalKernel, SpectralWeights, NORM_EPS,
};
use clifford_oracle as oracle;

use crate::{max_abs_diff, measure, random_field, random_shift, random_vec, CheckConfig, Property, Suite};

pub const EQUIVARIANCE_CASES: usize = 100;

fn random_kernel(sig: Signature, cin: usize, cout: usize, kdims: &[usize], rng: &mut ChaCha8Rng) -> CliffordKernel {
    let mut k = CliffordKernel::zeros(sig, cin, cout, kdims);
    k.weights = random_vec(k.weights.len(), rng);
    k.bias = Some(random_vec(sig.blade_count() * cout, rng));
    k
}

/// `layer(shift(f, t))` against `shift(layer(f), t)` for random fields and shifts.
fn equivariance(
    sig: Signature,
    dims: &[usize],
    channels: usize,
    cases: usize,
    rng: &mut ChaCha8Rng,
    mut layer: impl FnMut(&MultivectorField, &mut ChaCha8Rng) -> Box<dyn Fn(&MultivectorField) -> MultivectorField>,
) -> (usize, f64) {
    let mut err: f64 = 0.0;
    for _ in 0..cases {
        let f = random_field(sig, channels, dims, rng);
        let apply = layer(&f, rng);
        let t = random_shift(dims, rng);
        let a = apply(&f.circular_shift(&t).expect("one offset per axis"));
        let b = apply(&f).circular_shift(&t).expect("one offset per axis");
        err = err.max(max_abs_diff(a.data(), b.data()));
    }
    (cases, err)
}

/// Translation equivariance of every layer type.
pub fn equivariance_checks(cfg: &CheckConfig) -> Vec<Property> {
    let s = Suite::Layers;
    let n = EQUIVARIANCE_CASES;
    let mut rng = cfg.rng(30);
    let cl20 = cfg.terms();
    let cl02 = product_table_2d(Signature::CL02).expect("Cl(0,2) table").to_vec();
    vec![
        measure(s, "equivariance_conv2d", 1e-12, || {
            let (c1, e1) = equivariance(Signature::CL20, &[16, 16], 2, n, &mut rng, |_, rng| {
                let k = random_kernel(Signature::CL20, 2, 2, &[3, 3], rng);
                let terms = cl20.clone();
                Box::new(move |f| clifford_conv_with(&terms, f, &k, Padding::Periodic, 1).expect("valid conv"))
            });
            let (c2, e2) = equivariance(Signature::CL02, &[16, 16], 2, n, &mut rng, |_, rng| {
                let k = random_kernel(Signature::CL02, 2, 2, &[5, 3], rng);
                let terms = cl02.clone();
                Box::new(move |f| clifford_conv_with(&terms, f, &k, Padding::Periodic, 1).expect("valid conv"))
            });
            (c1 + c2, e1.max(e2))
        }),
        measure(s, "equivariance_conv3d", 1e-12, || {
            equivariance(Signature::CL30, &[8, 8, 8], 2, n, &mut rng, |_, rng| {
                let k = random_kernel(Signature::CL30, 2, 2, &[3, 3, 3], rng);
                Box::new(move |f| clifford_conv3d(f, &k, Padding::Periodic, 1).expect("valid conv"))
            })
        }),
        measure(s, "equivariance_rotational_conv2d", 1e-12, || {
            equivariance(Signature::CL02, &[16, 16], 2, n, &mut rng, |_, rng| {
                let faithful = rng.gen_bool(0.5);
                let mut k = RotationalKernel::zeros(2, 2, &[3, 3], faithful);
                k.weights = random_vec(k.weights.len(), rng);
                Box::new(move |f| rotational_clifford_conv2d(f, &k, Padding::Periodic, 1).expect("valid conv"))
            })
        }),
        measure(s, "equivariance_spectral_2d", 1e-9, || {
            equivariance(Signature::CL20, &[16, 16], 2, n, &mut rng, |_, rng| {
                let w = SpectralWeights::random(Signature::CL20, 2, 2, &[5, 4], 1.0, rng.gen());
                let terms = cl20.clone();
                Box::new(move |f| clifford_spectral_conv_with(&terms, f, &w).expect("valid spectral layer"))
            })
        }),
        measure(s, "equivariance_spectral_3d", 1e-9, || {
            let terms = product_terms(Signature::CL30);
            equivariance(Signature::CL30, &[8, 8, 8], 1, n, &mut rng, |_, rng| {
                let w = SpectralWeights::random(Signature::CL30, 1, 2, &[3, 2, 3], 1.0, rng.gen());
                let terms = terms.clone();
                Box::new(move |f| clifford_spectral_conv_with(&terms, f, &w).expect("valid spectral layer"))
            })
        }),
    ]
}

/// Identity weights with every mode retained.
pub fn spectral_identity(cfg: &CheckConfig) -> Property {
    let mut rng = cfg.rng(31);
    measure(Suite::Layers, "spectral_identity_full_modes", 1e-9, || {
        let mut err: f64 = 0.0;
        for _ in 0..10 {
            let f = random_field(Signature::CL20, 3, &[16, 16], &mut rng);
            let w = SpectralWeights::identity(Signature::CL20, 3, &[8, 8]);
            let y = clifford_spectral_conv_with(&cfg.terms(), &f, &w).expect("valid spectral layer");
            err = err.max(max_abs_diff(y.data(), f.data()));
            let f = random_field(Signature::CL30, 2, &[8, 8, 8], &mut rng);
            let w = SpectralWeights::identity(Signature::CL30, 2, &[4, 4, 4]);
            let y = clifford_spectral_conv_with(&product_terms(Signature::CL30), &f, &w).expect("valid spectral layer");
            err = err.max(max_abs_diff(y.data(), f.data()));
        }
        (20, err)
    })
}

/// Random correlated batches: per-sample group covariance after whitening.
pub fn whitening(cfg: &CheckConfig) -> Vec<Property> {
    let s = Suite::Layers;
    let mut rng = cfg.rng(32);
    let mut cov_err: f64 = 0.0;
    let mut root_err: f64 = 0.0;
    let mut cases = 0;
    let t = std::time::Instant::now();
    for (nb, channels, groups, spatial) in [(4usize, 4usize, 2usize, 64usize), (8, 4, 1, 64), (4, 6, 3, 100)] {
        let spec = NormSpec { blades: nb, channels, groups, eps: NORM_EPS };
        let batch = 3;
        for _ in 0..10 {
            // mix blades with a random matrix and offset so the covariance is far from identity
            let mix: Vec<f64> = random_vec(nb * nb, &mut rng);
            let offset: Vec<f64> = random_vec(nb, &mut rng).iter().map(|v| 5.0 * v).collect();
            let raw = random_vec(batch * nb * channels * spatial, &mut rng);
            let mut x = vec![0.0; raw.len()];
            let plane = |b: usize, c: usize, s0: usize| ((s0 * nb + b) * channels + c) * spatial;
            for s0 in 0..batch {
                for c in 0..channels {
                    for p in 0..spatial {
                        for b in 0..nb {
                            let v: f64 = (0..nb).map(|l| mix[b * nb + l] * raw[plane(l, c, s0) + p]).sum();
                            x[plane(b, c, s0) + p] = v + offset[b];
                        }
                    }
                }
            }
            let mut gamma = vec![0.0; channels * nb * nb];
            for c in 0..channels {
                for k in 0..nb {
                    gamma[(c * nb + k) * nb + k] = 1.0;
                }
            }
            let beta = vec![0.0; channels * nb];
            let (y, _) = groupnorm_forward(&spec, &x, batch, spatial, &gamma, &beta).expect("valid norm");
            let cg = channels / groups;
            for s0 in 0..batch {
                for g in 0..groups {
                    let samples = |d: &[f64]| -> Vec<Vec<f64>> {
                        (g * cg..(g + 1) * cg)
                            .flat_map(|c| (0..spatial).map(move |p| (c, p)))
                            .map(|(c, p)| (0..nb).map(|b| d[plane(b, c, s0) + p]).collect())
                            .collect()
                    };
                    let cov = oracle::covariance(&samples(&y));
                    for i in 0..nb {
                        for j in 0..nb {
                            let want = if i == j { 1.0 } else { 0.0 };
                            cov_err = cov_err.max((cov[i][j] - want).abs());
                        }
                    }
                    // against an independent inverse square root
                    let xs = samples(&x);
                    let isq = oracle::inv_sqrt_spd(&oracle::covariance(&xs));
                    let mean: Vec<f64> = (0..nb).map(|b| xs.iter().map(|v| v[b]).sum::<f64>() / xs.len() as f64).collect();
                    for (k, v) in xs.iter().enumerate().step_by(7) {
                        let c = g * cg + k / spatial;
                        let p = k % spatial;
                        for b in 0..nb {
                            let expect: f64 = (0..nb).map(|l| isq[b][l] * (v[l] - mean[l])).sum();
                            root_err = root_err.max((y[plane(b, c, s0) + p] - expect).abs());
                        }
                    }
                    cases += 1;
                }
            }
        }
    }
    let seconds = t.elapsed().as_secs_f64();
    vec![
        Property { suite: s, name: "whitening_identity_covariance", cases, max_error: cov_err, tolerance: 1e-6, seconds },
        Property { suite: s, name: "whitening_vs_oracle_inverse_root", cases, max_error: root_err, tolerance: 1e-8, seconds: 0.0 },
    ]
}

/// `4·c_out·c_in·k²` weights for a Cl(2,0) kernel.
pub fn parameter_count(_cfg: &CheckConfig) -> Property {
    measure(Suite::Layers, "cl20_conv_parameter_count", 0.0, || {
        let mut err: f64 = 0.0;
        let mut cases = 0;
        for cin in [1, 3, 16] {
            for cout in [1, 2, 16] {
                for k in [1, 3, 5] {
                    let kernel = CliffordKernel::zeros(Signature::CL20, cin, cout, &[k, k]);
                    err = err.max((kernel.parameter_count() as f64 - (4 * cout * cin * k * k) as f64).abs());
                    let k3 = CliffordKernel::zeros(Signature::CL30, cin, cout, &[k, k, k]);
                    err = err.max((k3.parameter_count() as f64 - (8 * cout * cin * k * k * k) as f64).abs());
                    cases += 2;
                }
            }
        }
        (cases, err)
    })
}

/// Algorithm 2 assembled per tap as a 4×4 matrix, rotation from the oracle sandwich.
fn rotational_reference(f: &MultivectorField, k: &RotationalKernel) -> Vec<f64> {
    let (n0, n1) = (f.dims()[0], f.dims()[1]);
    let (kh, kw) = (k.kdims[0], k.kdims[1]);
    let taps = kh * kw;
    let plane = k.cout * k.cin * taps;
    let mut out = vec![0.0; 4 * k.cout * n0 * n1];
    for co in 0..k.cout {
        for ci in 0..k.cin {
            for t in 0..taps {
                let p = (co * k.cin + ci) * taps + t;
                let w: Vec<f64> = (0..6)
                    .map(|m| {
                        if m < 4 || !k.faithful {
                            k.weights[m * plane + p]
                        } else if m == 4 {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let n = (w[..4].iter().map(|v| v * v).sum::<f64>() + k.epsilon).sqrt();
                let u = [w[0] / n, w[1] / n, w[2] / n, w[3] / n];
                let mut m = [[0.0; 4]; 4];
                m[0] = [w[0], -w[1], -w[2], -w[3]];
                for c in 0..3 {
                    let mut e = [0.0; 3];
                    e[c] = 1.0;
                    let r = oracle::rotate_vector(u, e);
                    for row in 0..3 {
                        m[row + 1][c + 1] = w[4] * r[row];
                    }
                }
                for row in m.iter_mut().skip(1) {
                    row[0] = w[5];
                }
                let (t0, t1) = (t / kw, t % kw);
                for x0 in 0..n0 {
                    for x1 in 0..n1 {
                        let s0 = (x0 + t0 + n0 - kh / 2) % n0;
                        let s1 = (x1 + t1 + n1 - kw / 2) % n1;
                        let fv = f.at(ci, s0 * n1 + s1);
                        for (o, row) in m.iter().enumerate() {
                            let v: f64 = row.iter().zip(&fv).map(|(a, b)| a * b).sum();
                            out[(o * k.cout + co) * n0 * n1 + x0 * n1 + x1] += v;
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn run(cfg: &CheckConfig) -> Vec<Property> {
    let s = Suite::Layers;
    let mut out = equivariance_checks(cfg);
    let mut rng = cfg.rng(33);
    out.push(measure(s, "conv2d_vs_oracle", 1e-10, || {
        let mut err: f64 = 0.0;
        for (i, padding) in [Padding::Periodic, Padding::Zero].into_iter().enumerate() {
            for _ in 0..5 {
                let f = random_field(Signature::CL20, 2, &[8, 8], &mut rng);
                let mut k = random_kernel(Signature::CL20, 2, 3, &[3, 5], &mut rng);
                k.bias = None;
                let y = clifford_conv_with(&cfg.terms(), &f, &k, padding, 1).expect("valid conv");
                let op = [oracle::Padding::Periodic, oracle::Padding::Zero][i];
                let o = oracle::oracle_conv(2, 0, f.data(), 2, &[8, 8], &k.weights, 3, &[3, 5], op);
                err = err.max(max_abs_diff(y.data(), &o));
            }
        }
        (10, err)
    }));
    out.push(measure(s, "conv3d_vs_oracle", 1e-10, || {
        let mut err: f64 = 0.0;
        for _ in 0..3 {
            let f = random_field(Signature::CL30, 2, &[6, 6, 6], &mut rng);
            let mut k = random_kernel(Signature::CL30, 2, 2, &[3, 3, 3], &mut rng);
            k.bias = None;
            let y = clifford_conv3d(&f, &k, Padding::Periodic, 1).expect("valid conv");
            let o = oracle::oracle_conv(3, 0, f.data(), 2, &[6, 6, 6], &k.weights, 2, &[3, 3, 3], oracle::Padding::Periodic);
            err = err.max(max_abs_diff(y.data(), &o));
        }
        (3, err)
    }));
    out.push(measure(s, "rotational_vs_matrix_assembly", 1e-12, || {
        let mut err: f64 = 0.0;
        for faithful in [false, true] {
            for _ in 0..5 {
                let f = random_field(Signature::CL02, 2, &[6, 5], &mut rng);
                let mut k = RotationalKernel::zeros(2, 3, &[3, 3], faithful);
                k.weights = random_vec(k.weights.len(), &mut rng);
                k.epsilon = 0.0;
                let y = rotational_clifford_conv2d(&f, &k, Padding::Periodic, 1).expect("valid conv");
                err = err.max(max_abs_diff(y.data(), &rotational_reference(&f, &k)));
            }
        }
        (10, err)
    }));
    out.push(spectral_identity(cfg));
    out.extend(whitening(cfg));
    out.push(parameter_count(cfg));
    out
}
