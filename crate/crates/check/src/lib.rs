//! Property suites that back the `check` command and the acceptance run.
//!
//! Every property reports the largest error seen over its random cases and
//! the tolerance it is held to. The Cl(2,0) product table is a parameter so a
//! deliberately broken table can be fed through the same suites.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use clifford_core::algebra::{Cl2Table, ProductTerm, Signature, CL20_PRODUCT};
use clifford_core::fields::MultivectorField;

pub mod algebra;
pub mod grad;
pub mod layers;
pub mod transforms;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Suite {
    Algebra,
    Transforms,
    Layers,
    Grad,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Algebra, Suite::Transforms, Suite::Layers, Suite::Grad];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Algebra => "algebra",
            Suite::Transforms => "transforms",
            Suite::Layers => "layers",
            Suite::Grad => "grad",
        }
    }

    pub fn parse(s: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|x| x.name() == s)
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Outcome of one property over all of its cases.
#[derive(Clone, Debug, PartialEq)]
pub struct Property {
    pub suite: Suite,
    pub name: &'static str,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub seconds: f64,
}

impl Property {
    pub fn passed(&self) -> bool {
        self.max_error.is_finite() && self.max_error <= self.tolerance
    }
}

/// Inputs shared by every suite.
#[derive(Clone, Debug)]
pub struct CheckConfig {
    pub seed: u64,
    /// Cl(2,0) product table under test.
    pub cl20: Cl2Table,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self { seed: 0, cl20: CL20_PRODUCT }
    }
}

impl CheckConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Default::default() }
    }

    /// The Cl(2,0) table with the sign of entry `term` flipped.
    pub fn with_flipped_sign(mut self, term: usize) -> Self {
        self.cl20[term].sign = -self.cl20[term].sign;
        self
    }

    pub(crate) fn rng(&self, salt: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(salt);
        r
    }

    pub(crate) fn terms(&self) -> Vec<ProductTerm> {
        self.cl20.to_vec()
    }
}

pub fn run_suite(suite: Suite, cfg: &CheckConfig) -> Vec<Property> {
    match suite {
        Suite::Algebra => algebra::run(cfg),
        Suite::Transforms => transforms::run(cfg),
        Suite::Layers => layers::run(cfg),
        Suite::Grad => grad::run(cfg),
    }
}

pub fn run_all(cfg: &CheckConfig) -> Vec<Property> {
    Suite::ALL.iter().flat_map(|&s| run_suite(s, cfg)).collect()
}

/// `suite,property,cases,max_error,tolerance,passed,seconds`, one row per property.
pub fn report_csv(props: &[Property]) -> String {
    let mut out = String::from("suite,property,cases,max_error,tolerance,passed,seconds\n");
    for p in props {
        out.push_str(&format!(
            "{},{},{},{:.3e},{:.1e},{},{:.3}\n",
            p.suite,
            p.name,
            p.cases,
            p.max_error,
            p.tolerance,
            p.passed(),
            p.seconds
        ));
    }
    out
}

/// Fixed-width pass/fail table.
pub fn report_table(props: &[Property]) -> String {
    let mut out = format!("{:<11} {:<44} {:>6} {:>10} {:>8}  result\n", "suite", "property", "cases", "max_error", "tol");
    for p in props {
        out.push_str(&format!(
            "{:<11} {:<44} {:>6} {:>10.3e} {:>8.0e}  {}\n",
            p.suite.name(),
            p.name,
            p.cases,
            p.max_error,
            p.tolerance,
            if p.passed() { "pass" } else { "FAIL" }
        ));
    }
    out
}

/// Times `body`, which returns `(cases, max_error)`.
pub(crate) fn measure(
    suite: Suite,
    name: &'static str,
    tolerance: f64,
    body: impl FnOnce() -> (usize, f64),
) -> Property {
    let t = Instant::now();
    let (cases, max_error) = body();
    Property {
        suite,
        name,
        cases,
        max_error,
        tolerance,
        seconds: t.elapsed().as_secs_f64(),
    }
}

/// Largest elementwise difference; NaN anywhere counts as infinite.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).fold(0.0, |m, (x, y)| {
        let d = (x - y).abs();
        if d.is_nan() {
            f64::INFINITY
        } else {
            m.max(d)
        }
    })
}

/// Difference scaled by the larger of one and the reference's magnitude.
pub fn scaled_diff(a: &[f64], reference: &[f64]) -> f64 {
    let scale = reference.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    max_abs_diff(a, reference) / scale
}

pub(crate) fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub(crate) fn random_field(sig: Signature, channels: usize, dims: &[usize], rng: &mut ChaCha8Rng) -> MultivectorField {
    let n = sig.blade_count() * channels * dims.iter().product::<usize>();
    MultivectorField::from_data(sig, channels, dims, random_vec(n, rng)).expect("valid field shape")
}

pub(crate) fn random_shift(dims: &[usize], rng: &mut ChaCha8Rng) -> Vec<isize> {
    dims.iter().map(|&n| rng.gen_range(-(n as isize)..=n as isize)).collect()
}
