//! Clifford Fourier transform structure and convolution theorems.

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;

use clifford_core::algebra::Signature;
use clifford_core::fields::MultivectorField;
use clifford_core::layers::{clifford_conv_with, CliffordKernel, Padding};
use clifford_core::transforms::{
    circular_convolve_direct, clifford_ft_2d, clifford_ft_3d, clifford_ift_2d, clifford_ift_3d, CliffordSpectrum,
    KernelKind,
};
use clifford_oracle::oracle_dft;

use crate::{measure, random_field, random_shift, random_vec, scaled_diff, CheckConfig, Property, Suite};

pub const THEOREM_CASES: usize = 50;

/// `(real blade, imaginary blade, sign)`: the imaginary part of a pair is
/// `sign · f[imaginary blade]`. In 3D the stored e1e3 enters as −e3e1.
const PAIRS_2D: [(usize, usize, f64); 2] = [(0, 3, 1.0), (1, 2, 1.0)];
const PAIRS_3D: [(usize, usize, f64); 4] = [(0, 7, 1.0), (1, 6, 1.0), (2, 5, -1.0), (3, 4, 1.0)];

fn pairs(sig: Signature) -> &'static [(usize, usize, f64)] {
    if sig.dim() == 2 {
        &PAIRS_2D
    } else {
        &PAIRS_3D
    }
}

fn ft(f: &MultivectorField) -> CliffordSpectrum {
    if f.dims().len() == 2 {
        clifford_ft_2d(f).expect("2D Clifford field")
    } else {
        clifford_ft_3d(f).expect("3D Clifford field")
    }
}

fn ift(s: &CliffordSpectrum) -> MultivectorField {
    if s.dims().len() == 2 {
        clifford_ift_2d(s).expect("2D spectrum")
    } else {
        clifford_ift_3d(s).expect("3D spectrum")
    }
}

/// The transform assembled from one oracle DFT per dual pair.
fn oracle_ft(f: &MultivectorField) -> Vec<f64> {
    let mut out = vec![0.0; f.data().len()];
    let n = f.spatial_len();
    for c in 0..f.channels() {
        for &(r, i, sign) in pairs(f.signature()) {
            let im: Vec<f64> = f.plane(i, c).iter().map(|v| sign * v).collect();
            let (yr, yi) = oracle_dft(f.plane(r, c), &im, f.dims(), false);
            let base = |b: usize| (b * f.channels() + c) * n;
            out[base(r)..base(r) + n].copy_from_slice(&yr);
            for (k, v) in yi.iter().enumerate() {
                out[base(i) + k] = sign * v;
            }
        }
    }
    out
}

fn structure(sig: Signature, dims: &[usize], cases: usize, rng: &mut ChaCha8Rng) -> (usize, f64) {
    let mut err: f64 = 0.0;
    for _ in 0..cases {
        let f = random_field(sig, 1, dims, rng);
        err = err.max(scaled_diff(ft(&f).data(), &oracle_ft(&f)));
    }
    (cases, err)
}

fn round_trip(sig: Signature, dims: &[usize], cases: usize, rng: &mut ChaCha8Rng) -> (usize, f64) {
    let mut err: f64 = 0.0;
    for _ in 0..cases {
        let f = random_field(sig, 2, dims, rng);
        err = err.max(ift(&ft(&f)).rel_l2(&f));
    }
    (cases, err)
}

/// `ft(shift(f, t))(ξ) = ft(f)(ξ)·e^{−2πi⟨t,ξ⟩}` within every dual pair.
fn shift_theorem(sig: Signature, dims: &[usize], cases: usize, rng: &mut ChaCha8Rng) -> (usize, f64) {
    let mut err: f64 = 0.0;
    let n: usize = dims.iter().product();
    for _ in 0..cases {
        let f = random_field(sig, 1, dims, rng);
        let t = random_shift(dims, rng);
        let lhs = ft(&f.circular_shift(&t).expect("one offset per axis"));
        let s = ft(&f);
        let mut expect = s.data().to_vec();
        for k in 0..n {
            let mut rem = k;
            let mut theta = 0.0;
            for a in (0..dims.len()).rev() {
                let x = rem % dims[a];
                rem /= dims[a];
                theta -= 2.0 * std::f64::consts::PI * (x as f64 * t[a] as f64) / dims[a] as f64;
            }
            let phase = Complex64::from_polar(1.0, theta);
            for &(r, i, sign) in pairs(sig) {
                let z = Complex64::new(s.plane(r, 0)[k], sign * s.plane(i, 0)[k]) * phase;
                expect[r * n + k] = z.re;
                expect[i * n + k] = sign * z.im;
            }
        }
        err = err.max(scaled_diff(lhs.data(), &expect));
    }
    (cases, err)
}

fn restrict(mut f: MultivectorField, blades: &[usize]) -> MultivectorField {
    for b in 0..f.blades() {
        if !blades.contains(&b) {
            for c in 0..f.channels() {
                f.plane_mut(b, c).iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }
    f
}

fn kernel_blades(kind: KernelKind) -> &'static [usize] {
    match kind {
        KernelKind::Spinor => &[0, 3],
        KernelKind::Vector => &[1, 2],
        KernelKind::Full => &[0, 1, 2, 3, 4, 5, 6, 7],
    }
}

/// Which right-hand side a theorem is compared against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Form {
    /// `F{f⋆k}(ξ) = F{f}(ξ)·F{k}(−ξ)`.
    Negated,
    /// `F{f⋆k}(ξ) = F{f}(ξ)·F{k}(ξ)`.
    Plain,
    /// `F{f⋆k}(−ξ) = F{f}(ξ)·F{k}(ξ)`.
    PlainAtNegated,
}

fn compare(conv: &MultivectorField, f: &MultivectorField, k: &MultivectorField, form: Form) -> f64 {
    let (fc, ff, fk) = (ft(conv), ft(f), ft(k));
    let rhs = match form {
        Form::Negated => ff.product(&fk.dagger()),
        Form::Plain | Form::PlainAtNegated => ff.product(&fk),
    }
    .expect("matching spectra");
    let lhs = if form == Form::PlainAtNegated { fc.dagger() } else { fc };
    scaled_diff(lhs.data(), rhs.data())
}

fn direct_theorem(
    sig: Signature,
    dims: &[usize],
    kind: KernelKind,
    form: Form,
    cases: usize,
    rng: &mut ChaCha8Rng,
) -> (usize, f64) {
    let mut err: f64 = 0.0;
    for _ in 0..cases {
        let f = random_field(sig, 1, dims, rng);
        let k = restrict(random_field(sig, 1, dims, rng), kernel_blades(kind));
        let conv = circular_convolve_direct(&f, &k, kind).expect("kernel matches its kind");
        err = err.max(compare(&conv, &f, &k, form));
    }
    (cases, err)
}

/// The convolution layer itself (with the table under test) against the
/// theorem, for a compact 5×5 kernel embedded periodically in the grid.
fn layer_theorem(cfg: &CheckConfig, kind: KernelKind, form: Form, cases: usize, rng: &mut ChaCha8Rng) -> (usize, f64) {
    let (dims, kd) = ([16usize, 16], 5usize);
    let terms = cfg.terms();
    let mut err: f64 = 0.0;
    for _ in 0..cases {
        let f = random_field(Signature::CL20, 1, &dims, rng);
        let mut w = CliffordKernel::zeros(Signature::CL20, 1, 1, &[kd, kd]);
        let taps = kd * kd;
        let mut k = MultivectorField::zeros(Signature::CL20, 1, &dims).expect("valid grid");
        for &b in kernel_blades(kind) {
            let vals = random_vec(taps, rng);
            w.weights[b * taps..(b + 1) * taps].copy_from_slice(&vals);
            for (t, v) in vals.iter().enumerate() {
                let u0 = (t / kd + dims[0] - kd / 2) % dims[0];
                let u1 = (t % kd + dims[1] - kd / 2) % dims[1];
                k.plane_mut(b, 0)[u0 * dims[1] + u1] = *v;
            }
        }
        let conv = clifford_conv_with(&terms, &f, &w, Padding::Periodic, 1).expect("valid kernel");
        err = err.max(compare(&conv, &f, &k, form));
    }
    (cases, err)
}

/// Clifford FT against independent complex DFTs, plus the round trip.
pub fn structure_checks(cfg: &CheckConfig) -> Vec<Property> {
    let s = Suite::Transforms;
    let mut rng = cfg.rng(20);
    vec![
        measure(s, "ft2d_equals_two_complex_dfts", 1e-10, || structure(Signature::CL20, &[16, 16], 10, &mut rng)),
        measure(s, "ft3d_equals_four_complex_dfts", 1e-10, || structure(Signature::CL30, &[8, 8, 8], 5, &mut rng)),
        measure(s, "round_trip_2d", 1e-10, || round_trip(Signature::CL20, &[32, 32], 20, &mut rng)),
        measure(s, "round_trip_3d", 1e-10, || round_trip(Signature::CL30, &[32, 32, 32], 2, &mut rng)),
    ]
}

/// The convolution theorems in the form that holds for `f⋆k(x) = Σ_y f(y)k(y−x)`.
pub fn convolution_theorems(cfg: &CheckConfig) -> Vec<Property> {
    let s = Suite::Transforms;
    let mut rng = cfg.rng(21);
    let n = THEOREM_CASES;
    vec![
        measure(s, "conv_theorem_spinor_2d", 1e-9, || {
            direct_theorem(Signature::CL20, &[16, 16], KernelKind::Spinor, Form::Negated, n, &mut rng)
        }),
        measure(s, "conv_theorem_vector_2d_negated_frequency", 1e-9, || {
            direct_theorem(Signature::CL20, &[16, 16], KernelKind::Vector, Form::PlainAtNegated, n, &mut rng)
        }),
        measure(s, "conv_theorem_full_3d", 1e-9, || {
            direct_theorem(Signature::CL30, &[8, 8, 8], KernelKind::Full, Form::Negated, n, &mut rng)
        }),
        measure(s, "conv_theorem_spinor_2d_layer_path", 1e-9, || {
            layer_theorem(cfg, KernelKind::Spinor, Form::Negated, n, &mut rng)
        }),
        measure(s, "conv_theorem_vector_2d_layer_path", 1e-9, || {
            layer_theorem(cfg, KernelKind::Vector, Form::PlainAtNegated, n, &mut rng)
        }),
    ]
}

/// The vector-kernel statement read literally, `F{f⋆k_v}(ξ) = F{f}(ξ)·F{k_v}(ξ)`.
/// It does not hold for this correlation; kept as a standalone check.
pub fn vector_kernel_literal(cfg: &CheckConfig) -> Property {
    let mut rng = cfg.rng(22);
    measure(Suite::Transforms, "conv_theorem_vector_2d_literal", 1e-9, || {
        direct_theorem(Signature::CL20, &[16, 16], KernelKind::Vector, Form::Plain, THEOREM_CASES, &mut rng)
    })
}

pub fn run(cfg: &CheckConfig) -> Vec<Property> {
    let s = Suite::Transforms;
    let mut out = structure_checks(cfg);
    let mut rng = cfg.rng(23);
    out.push(measure(s, "linearity", 1e-12, || {
        let mut err: f64 = 0.0;
        for _ in 0..20 {
            for (sig, dims) in [(Signature::CL20, vec![12, 10]), (Signature::CL30, vec![6, 4, 5])] {
                let (f, g) = (random_field(sig, 1, &dims, &mut rng), random_field(sig, 1, &dims, &mut rng));
                let (a, b) = (1.7, -0.6);
                let mix = f.scale(a).add(&g.scale(b)).expect("same shape");
                let expect: Vec<f64> = ft(&f).data().iter().zip(ft(&g).data()).map(|(x, y)| a * x + b * y).collect();
                err = err.max(scaled_diff(ft(&mix).data(), &expect));
            }
        }
        (40, err)
    }));
    out.push(measure(s, "shift_theorem_2d", 1e-10, || shift_theorem(Signature::CL20, &[16, 12], 20, &mut rng)));
    out.push(measure(s, "shift_theorem_3d", 1e-10, || shift_theorem(Signature::CL30, &[8, 6, 4], 20, &mut rng)));
    out.extend(convolution_theorems(cfg));
    out
}
