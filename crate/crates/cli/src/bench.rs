//! Wall-clock timings of the core kernels.

use std::hint::black_box;
use std::time::Instant;

use clifford_core::algebra::{geometric_product_3d, gp2_with, Multivector3, Signature, CL20_PRODUCT};
use clifford_core::fields::MultivectorField;
use clifford_core::layers::{clifford_conv2d, clifford_spectral_conv2d, CliffordKernel, Padding, SpectralWeights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{CmdResult, Failure};

/// Multivector channels used by the layer benchmarks.
pub const BENCH_CHANNELS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    /// `size` Cl(2,0) products.
    Gp2d,
    /// `size` Cl(3,0) products.
    Gp3d,
    /// 3×3 Clifford convolution on a periodic `size`² grid.
    Conv2d,
    /// Clifford spectral convolution on a `size`² grid, up to 8 modes per axis.
    Spectral2d,
}

impl Op {
    pub fn parse(s: &str) -> CmdResult<Op> {
        match s {
            "gp2d" => Ok(Op::Gp2d),
            "gp3d" => Ok(Op::Gp3d),
            "conv2d" => Ok(Op::Conv2d),
            "spectral2d" => Ok(Op::Spectral2d),
            _ => Err(Failure::usage(format!("unknown op `{s}`, expected gp2d|gp3d|conv2d|spectral2d"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Op::Gp2d => "gp2d",
            Op::Gp3d => "gp3d",
            Op::Conv2d => "conv2d",
            Op::Spectral2d => "spectral2d",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Timing {
    pub op: Op,
    pub size: usize,
    pub reps: usize,
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
}

pub const CSV_HEADER: &str = "op,size,reps,median_s,p10_s,p90_s";

impl Timing {
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{:e},{:e},{:e}", self.op.name(), self.size, self.reps, self.median, self.p10, self.p90)
    }
}

fn fill(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Builds the inputs once and returns the timed closure.
fn workload(op: Op, size: usize, seed: u64) -> CmdResult<Box<dyn FnMut()>> {
    if size == 0 {
        return Err(Failure::usage("bench sizes must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = BENCH_CHANNELS;
    Ok(match op {
        Op::Gp2d => {
            let a = fill(4 * size, &mut rng);
            let b = fill(4 * size, &mut rng);
            Box::new(move || {
                for (x, y) in a.chunks_exact(4).zip(b.chunks_exact(4)) {
                    let x: &[f64; 4] = x.try_into().unwrap();
                    let y: &[f64; 4] = y.try_into().unwrap();
                    black_box(gp2_with(&CL20_PRODUCT, black_box(x), y));
                }
            })
        }
        Op::Gp3d => {
            let a: Vec<Multivector3> = fill(8 * size, &mut rng).chunks_exact(8).map(|x| Multivector3(x.try_into().unwrap())).collect();
            let b: Vec<Multivector3> = fill(8 * size, &mut rng).chunks_exact(8).map(|x| Multivector3(x.try_into().unwrap())).collect();
            Box::new(move || {
                for (x, y) in a.iter().zip(&b) {
                    black_box(geometric_product_3d(black_box(x), y));
                }
            })
        }
        Op::Conv2d => {
            let f = MultivectorField::from_data(Signature::CL20, c, &[size, size], fill(4 * c * size * size, &mut rng))?;
            let mut k = CliffordKernel::zeros(Signature::CL20, c, c, &[3, 3]);
            k.weights = fill(k.weights.len(), &mut rng);
            Box::new(move || {
                black_box(clifford_conv2d(black_box(&f), &k, Padding::Periodic, 1).unwrap());
            })
        }
        Op::Spectral2d => {
            let m = 8.min(size / 2).max(1);
            let f = MultivectorField::from_data(Signature::CL20, c, &[size, size], fill(4 * c * size * size, &mut rng))?;
            let mut w = SpectralWeights::zeros(Signature::CL20, c, c, &[m, m]);
            w.data = fill(w.data.len(), &mut rng);
            clifford_spectral_conv2d(&f, &w)?;
            Box::new(move || {
                black_box(clifford_spectral_conv2d(black_box(&f), &w).unwrap());
            })
        }
    })
}

/// Linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Times `reps` calls after one untimed warm-up call.
pub fn run(op: Op, size: usize, reps: usize, seed: u64) -> CmdResult<Timing> {
    if reps == 0 {
        return Err(Failure::usage("--reps must be positive"));
    }
    let mut f = workload(op, size, seed)?;
    f();
    let mut times: Vec<f64> = (0..reps)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    Ok(Timing {
        op,
        size,
        reps,
        median: percentile(&times, 0.5),
        p10: percentile(&times, 0.1),
        p90: percentile(&times, 0.9),
    })
}
