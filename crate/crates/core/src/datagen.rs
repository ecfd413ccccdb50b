//! Toy PDE trajectories with closed-form or leapfrog ground truth, and the
//! CLF1 container format.
//!
//! CLF1 layout: magic `CLF1`, `u32` little-endian header length, UTF-8 JSON
//! header, then the little-endian row-major payload in axis order
//! `[trajectory, time, blade, channel, spatial...]`.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::Signature;
use crate::error::{Error, Result};
use crate::fields::{strides, FieldPacking, PackEntry};
use crate::layers::Dtype;
use crate::transforms::fft_nd;

pub const MAGIC: [u8; 4] = *b"CLF1";

/// Where a dataset came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub params: serde_json::Value,
    pub seed: u64,
}

/// Trajectories of multivector fields on a uniform grid and time axis.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySet {
    pub signature: Signature,
    pub packing: FieldPacking,
    pub channels: usize,
    pub dims: Vec<usize>,
    pub dx: Vec<f64>,
    pub dt: f64,
    pub trajectories: usize,
    pub steps: usize,
    /// Storage precision used by [`write_clf`].
    pub dtype: Dtype,
    pub provenance: Provenance,
    /// `[trajectory][time][blade][channel][spatial]`.
    pub data: Vec<f64>,
}

impl TrajectorySet {
    pub fn spatial_len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn blades(&self) -> usize {
        self.signature.blade_count()
    }

    pub fn frame_len(&self) -> usize {
        self.blades() * self.channels * self.spatial_len()
    }

    pub fn frame(&self, traj: usize, t: usize) -> &[f64] {
        let n = self.frame_len();
        &self.data[(traj * self.steps + t) * n..][..n]
    }

    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![self.trajectories, self.steps, self.blades(), self.channels];
        s.extend(&self.dims);
        s
    }

    pub fn header(&self) -> ClfHeader {
        ClfHeader {
            shape: self.shape(),
            dtype: self.dtype,
            dt: self.dt,
            dx: self.dx.clone(),
            signature: (self.signature.p(), self.signature.q()),
            packing: self.packing.entries().to_vec(),
            provenance: self.provenance.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.data.len() != self.trajectories * self.steps * self.frame_len() {
            return Err(Error::Shape("trajectory data does not match its shape".into()));
        }
        if self.dx.len() != self.dims.len() {
            return Err(Error::Shape("one spacing per axis".into()));
        }
        self.packing.validate(self.signature)?;
        if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("trajectory value at flat index {i}")));
        }
        Ok(())
    }
}

/// JSON header of a CLF1 file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClfHeader {
    /// `[trajectories, time, blades, channels, spatial...]`.
    pub shape: Vec<usize>,
    pub dtype: Dtype,
    pub dt: f64,
    pub dx: Vec<f64>,
    pub signature: (u8, u8),
    pub packing: Vec<PackEntry>,
    pub provenance: Provenance,
}

impl ClfHeader {
    pub fn payload_values(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn payload_bytes(&self) -> u64 {
        (self.payload_values() * self.dtype.size()) as u64
    }

    fn check(&self) -> Result<Signature> {
        let sig = Signature::new(self.signature.0, self.signature.1)?;
        if self.shape.len() < 5 {
            return Err(Error::HeaderMismatch("shape needs trajectory, time, blade, channel and spatial axes".into()));
        }
        if self.shape[2] != sig.blade_count() {
            return Err(Error::HeaderMismatch(format!(
                "{} blades declared for {sig}",
                self.shape[2]
            )));
        }
        if self.dx.len() != self.shape.len() - 4 {
            return Err(Error::HeaderMismatch("one spacing per spatial axis".into()));
        }
        Ok(sig)
    }
}

pub fn write_clf(path: &Path, set: &TrajectorySet) -> Result<()> {
    set.validate()?;
    let header = serde_json::to_vec(&set.header())?;
    let len = u32::try_from(header.len()).map_err(|_| Error::Invalid("header too large".into()))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&header)?;
    match set.dtype {
        Dtype::F64 => {
            for v in &set.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Dtype::F32 => {
            for v in &set.data {
                w.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn read_header_from(r: &mut impl Read) -> Result<(ClfHeader, u64)> {
    let mut magic = [0u8; 4];
    read_exact_or_truncated(r, &mut magic, 8)?;
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let mut len = [0u8; 4];
    read_exact_or_truncated(r, &mut len, 8)?;
    let len = u32::from_le_bytes(len) as usize;
    let mut buf = vec![0u8; len];
    read_exact_or_truncated(r, &mut buf, 8 + len as u64)?;
    let header: ClfHeader =
        serde_json::from_slice(&buf).map_err(|e| Error::HeaderMismatch(format!("unreadable header: {e}")))?;
    header.check()?;
    Ok((header, 8 + len as u64))
}

fn read_exact_or_truncated(r: &mut impl Read, buf: &mut [u8], expected: u64) -> Result<()> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..])? {
            0 => {
                return Err(Error::Truncated {
                    expected,
                    found: expected - (buf.len() - got) as u64,
                })
            }
            n => got += n,
        }
    }
    Ok(())
}

/// Reads only the header; the payload is not touched.
pub fn read_clf_header(path: &Path) -> Result<ClfHeader> {
    let mut r = BufReader::new(File::open(path)?);
    Ok(read_header_from(&mut r)?.0)
}

pub fn read_clf(path: &Path) -> Result<TrajectorySet> {
    let mut r = BufReader::new(File::open(path)?);
    let (header, offset) = read_header_from(&mut r)?;
    let signature = header.check()?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let need = header.payload_bytes();
    if (payload.len() as u64) < need {
        return Err(Error::Truncated {
            expected: offset + need,
            found: offset + payload.len() as u64,
        });
    }
    if payload.len() as u64 > need {
        return Err(Error::HeaderMismatch(format!(
            "{} payload bytes after a header declaring {need}",
            payload.len()
        )));
    }
    let data: Vec<f64> = match header.dtype {
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
    };
    let set = TrajectorySet {
        signature,
        packing: FieldPacking::new(header.packing.clone())
            .map_err(|e| Error::HeaderMismatch(format!("packing: {e}")))?,
        channels: header.shape[3],
        dims: header.shape[4..].to_vec(),
        dx: header.dx.clone(),
        dt: header.dt,
        trajectories: header.shape[0],
        steps: header.shape[1],
        dtype: header.dtype,
        provenance: header.provenance,
        data,
    };
    set.validate()?;
    Ok(set)
}

/// Per-trajectory random stream derived from `(seed, index)`.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityLaw {
    /// Uniform velocity drawn per trajectory, components in `±max_speed`.
    Constant,
    /// Rigid rotation about the domain centre, angular speed in `±max_speed·2π`.
    SolidRotation,
}

/// Scalar transport on the periodic unit square.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvectionParams {
    pub grid: usize,
    pub trajectories: usize,
    pub steps: usize,
    pub dt: f64,
    pub velocity: VelocityLaw,
    pub max_speed: f64,
    pub blobs: usize,
    pub seed: u64,
}

impl Default for AdvectionParams {
    fn default() -> Self {
        Self {
            grid: 32,
            trajectories: 200,
            steps: 10,
            dt: 0.01,
            velocity: VelocityLaw::Constant,
            max_speed: 1.0,
            blobs: 3,
            seed: 0,
        }
    }
}

/// Periodic smooth blob mixture `Σ a·exp(κ(cos 2π(x−cx) + cos 2π(y−cy) − 2))`.
pub fn blob_field(m: usize, blobs: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut s = vec![0.0; m * m];
    for _ in 0..blobs {
        let a: f64 = rng.gen_range(0.5..1.5);
        let kappa: f64 = rng.gen_range(2.0..8.0);
        let (cx, cy): (f64, f64) = (rng.gen(), rng.gen());
        for i in 0..m {
            let ex = (2.0 * PI * (i as f64 / m as f64 - cx)).cos();
            for j in 0..m {
                let ey = (2.0 * PI * (j as f64 / m as f64 - cy)).cos();
                s[i * m + j] += a * (kappa * (ex + ey - 2.0)).exp();
            }
        }
    }
    s
}

fn signed_freq(k: usize, n: usize) -> f64 {
    if 2 * k <= n {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Exact periodic translation of a grid on the unit square by `shift`
/// (in domain units), by phase rotation of its spectrum.
pub fn spectral_shift(s: &[f64], m: usize, shift: [f64; 2]) -> Vec<f64> {
    let mut buf: Vec<Complex64> = s.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut buf, &[m, m], false);
    for i in 0..m {
        let kx = signed_freq(i, m);
        for j in 0..m {
            let ky = signed_freq(j, m);
            let phase = -2.0 * PI * (kx * shift[0] + ky * shift[1]);
            buf[i * m + j] *= Complex64::from_polar(1.0, phase);
        }
    }
    fft_nd(&mut buf, &[m, m], true);
    buf.iter().map(|z| z.re).collect()
}

fn bilinear_periodic(s: &[f64], m: usize, x: f64, y: f64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (tx, ty) = (x - fx, y - fy);
    let w = |v: f64| (v as i64).rem_euclid(m as i64) as usize;
    let (i0, j0) = (w(fx), w(fy));
    let (i1, j1) = ((i0 + 1) % m, (j0 + 1) % m);
    (1.0 - tx) * ((1.0 - ty) * s[i0 * m + j0] + ty * s[i0 * m + j1])
        + tx * ((1.0 - ty) * s[i1 * m + j0] + ty * s[i1 * m + j1])
}

/// One semi-Lagrangian step of rigid rotation by angle `theta` about the grid centre.
pub fn rotate_step(s: &[f64], m: usize, theta: f64) -> Vec<f64> {
    let c = m as f64 / 2.0;
    let (sn, cs) = (-theta).sin_cos();
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            let (px, py) = (i as f64 - c, j as f64 - c);
            let (dx, dy) = (cs * px - sn * py + c, sn * px + cs * py + c);
            out[i * m + j] = bilinear_periodic(s, m, dx, dy);
        }
    }
    out
}

fn advection_trajectory(p: &AdvectionParams, index: usize) -> Vec<f64> {
    let m = p.grid;
    let n = m * m;
    let mut rng = trajectory_rng(p.seed, index);
    let s0 = blob_field(m, p.blobs, &mut rng);
    let mut out = vec![0.0; p.steps * 4 * n];
    match p.velocity {
        VelocityLaw::Constant => {
            let v = [
                rng.gen_range(-p.max_speed..=p.max_speed),
                rng.gen_range(-p.max_speed..=p.max_speed),
            ];
            for t in 0..p.steps {
                let time = t as f64 * p.dt;
                let frame = &mut out[t * 4 * n..(t + 1) * 4 * n];
                let s = if t == 0 { s0.clone() } else { spectral_shift(&s0, m, [v[0] * time, v[1] * time]) };
                frame[..n].copy_from_slice(&s);
                frame[n..2 * n].iter_mut().for_each(|x| *x = v[0]);
                frame[2 * n..3 * n].iter_mut().for_each(|x| *x = v[1]);
            }
        }
        VelocityLaw::SolidRotation => {
            let omega = rng.gen_range(-p.max_speed..=p.max_speed) * 2.0 * PI;
            let mut s = s0;
            for t in 0..p.steps {
                if t > 0 {
                    s = rotate_step(&s, m, omega * p.dt);
                }
                let frame = &mut out[t * 4 * n..(t + 1) * 4 * n];
                frame[..n].copy_from_slice(&s);
                for i in 0..m {
                    for j in 0..m {
                        let (x, y) = (i as f64 / m as f64 - 0.5, j as f64 / m as f64 - 0.5);
                        frame[n + i * m + j] = -omega * y;
                        frame[2 * n + i * m + j] = omega * x;
                    }
                }
            }
        }
    }
    out
}

/// Scalar blob mixtures transported by a velocity law; the scalar sits in
/// blade `1`, the velocity in `e1`, `e2`.
pub fn gen_advection2d(p: &AdvectionParams) -> Result<TrajectorySet> {
    if p.grid < 2 || p.steps == 0 || !(p.dt.is_finite() && p.dt >= 0.0) {
        return Err(Error::Invalid("advection needs grid ≥ 2, steps ≥ 1 and dt ≥ 0".into()));
    }
    let parts: Vec<Vec<f64>> = (0..p.trajectories)
        .into_par_iter()
        .map(|i| advection_trajectory(p, i))
        .collect();
    let set = TrajectorySet {
        signature: Signature::CL20,
        packing: FieldPacking::scalar_velocity_2d(),
        channels: 1,
        dims: vec![p.grid, p.grid],
        dx: vec![1.0 / p.grid as f64; 2],
        dt: p.dt,
        trajectories: p.trajectories,
        steps: p.steps,
        dtype: Dtype::F32,
        provenance: Provenance {
            generator: "advection2d".into(),
            params: serde_json::to_value(p)?,
            seed: p.seed,
        },
        data: parts.concat(),
    };
    set.validate()?;
    Ok(set)
}

/// Largest stable leapfrog step on a cubic Yee grid with unit wave speed.
pub fn courant_limit(dx: f64) -> f64 {
    dx / 3f64.sqrt()
}

/// Soft plane source: adds `dt·amplitude·sin(ω t + phase)` to one `D`
/// component on the plane `index 0` of `axis`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneSource {
    pub axis: usize,
    pub polarization: usize,
    pub amplitude: f64,
    pub omega: f64,
    pub phase: f64,
}

/// Staggered `D`, `H` on a periodic `m³` Yee grid, unit constants.
///
/// `D` lives at integer times, `H` at half steps: after `n` steps `d` holds
/// `D^n` and `h` holds `H^{n−1/2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Yee {
    pub m: usize,
    pub dx: f64,
    pub dt: f64,
    pub time: f64,
    pub d: [Vec<f64>; 3],
    pub h: [Vec<f64>; 3],
}

impl Yee {
    pub fn new(m: usize, dx: f64, dt: f64) -> Result<Self> {
        let limit = courant_limit(dx);
        if !(dt > 0.0 && dt <= limit) {
            return Err(Error::Courant { dt, limit });
        }
        let z = vec![0.0; m * m * m];
        Ok(Self {
            m,
            dx,
            dt,
            time: 0.0,
            d: [z.clone(), z.clone(), z.clone()],
            h: [z.clone(), z.clone(), z],
        })
    }

    fn shifted(&self, p: usize, axis: usize, delta: isize) -> usize {
        let m = self.m as isize;
        let st = [self.m * self.m, self.m, 1];
        let c = (p / st[axis]) % self.m;
        let nc = (c as isize + delta).rem_euclid(m) as usize;
        p - c * st[axis] + nc * st[axis]
    }

    /// `curl` with forward (`delta = 1`) or backward (`delta = −1`) differences.
    fn curl(&self, f: &[Vec<f64>; 3], forward: bool) -> [Vec<f64>; 3] {
        let n = self.m.pow(3);
        let inv = 1.0 / self.dx;
        let diff = |comp: usize, axis: usize, p: usize| {
            if forward {
                (f[comp][self.shifted(p, axis, 1)] - f[comp][p]) * inv
            } else {
                (f[comp][p] - f[comp][self.shifted(p, axis, -1)]) * inv
            }
        };
        let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for p in 0..n {
            out[0][p] = diff(2, 1, p) - diff(1, 2, p);
            out[1][p] = diff(0, 2, p) - diff(2, 0, p);
            out[2][p] = diff(1, 0, p) - diff(0, 1, p);
        }
        out
    }

    /// `H^{n+1/2}` from the current state, without advancing.
    pub fn next_h(&self) -> [Vec<f64>; 3] {
        let c = self.curl(&self.d, true);
        let mut h = self.h.clone();
        for a in 0..3 {
            for (x, y) in h[a].iter_mut().zip(&c[a]) {
                *x -= self.dt * y;
            }
        }
        h
    }

    /// One leapfrog step given the precomputed `H^{n+1/2}`.
    pub fn step_with(&mut self, h_next: [Vec<f64>; 3], sources: &[PlaneSource]) {
        self.h = h_next;
        let c = self.curl(&self.h, false);
        for a in 0..3 {
            for (x, y) in self.d[a].iter_mut().zip(&c[a]) {
                *x += self.dt * y;
            }
        }
        let t_half = self.time + 0.5 * self.dt;
        let st = [self.m * self.m, self.m, 1];
        for s in sources {
            let value = self.dt * s.amplitude * (s.omega * t_half + s.phase).sin();
            for p in 0..self.m.pow(3) {
                if (p / st[s.axis]) % self.m == 0 {
                    self.d[s.polarization][p] += value;
                }
            }
        }
        self.time += self.dt;
    }

    pub fn step(&mut self, sources: &[PlaneSource]) {
        let h = self.next_h();
        self.step_with(h, sources);
    }

    /// `Σ(‖D‖² + ‖H‖²)·dx³` with `H` averaged to the integer time level.
    pub fn energy(&self) -> f64 {
        let hn = self.next_h();
        let vol = self.dx.powi(3);
        let mut e = 0.0;
        for a in 0..3 {
            e += self.d[a].iter().map(|v| v * v).sum::<f64>();
            e += self.h[a].iter().zip(&hn[a]).map(|(x, y)| 0.25 * (x + y) * (x + y)).sum::<f64>();
        }
        e * vol
    }

    /// `Σ(‖Dⁿ‖² + H^{n−1/2}·H^{n+1/2})·dx³`, invariant under source-free steps.
    pub fn staggered_energy(&self) -> f64 {
        let hn = self.next_h();
        let vol = self.dx.powi(3);
        let mut e = 0.0;
        for a in 0..3 {
            e += self.d[a].iter().map(|v| v * v).sum::<f64>();
            e += self.h[a].iter().zip(&hn[a]).map(|(x, y)| x * y).sum::<f64>();
        }
        e * vol
    }

    /// Packs `Dⁿ` and the time-centred `Hⁿ` into a Cl(3,0) frame `[8][m³]`;
    /// `h_next` must be [`Yee::next_h`].
    pub fn frame(&self, h_next: &[Vec<f64>; 3]) -> Vec<f64> {
        let n = self.m.pow(3);
        let mut out = vec![0.0; 8 * n];
        let packing = FieldPacking::maxwell_3d();
        for e in packing.entries() {
            let (is_h, comp) = match e.name.as_str() {
                "d_x" => (false, 0),
                "d_y" => (false, 1),
                "d_z" => (false, 2),
                "h_x" => (true, 0),
                "h_y" => (true, 1),
                "h_z" => (true, 2),
                other => unreachable!("maxwell packing has no field {other}"),
            };
            let dst = &mut out[e.blade * n..(e.blade + 1) * n];
            for (p, v) in dst.iter_mut().enumerate() {
                let raw = if is_h {
                    0.5 * (self.h[comp][p] + h_next[comp][p])
                } else {
                    self.d[comp][p]
                };
                *v = e.sign * raw;
            }
        }
        out
    }
}

/// Smooth random periodic field: low Fourier modes with `1/|k|²` weights.
pub fn smooth_field(m: usize, max_mode: i64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; m * m * m];
    let x = |i: usize| 2.0 * PI * i as f64 / m as f64;
    for a in -max_mode..=max_mode {
        for b in -max_mode..=max_mode {
            for c in 0..=max_mode {
                if (a, b, c) == (0, 0, 0) {
                    continue;
                }
                let k2 = (a * a + b * b + c * c) as f64;
                let amp: f64 = rng.gen_range(-1.0..1.0) / k2;
                let phase: f64 = rng.gen_range(0.0..2.0 * PI);
                for i in 0..m {
                    for j in 0..m {
                        for k in 0..m {
                            let arg = a as f64 * x(i) + b as f64 * x(j) + c as f64 * x(k) + phase;
                            out[(i * m + j) * m + k] += amp * arg.cos();
                        }
                    }
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxwellParams {
    pub grid: usize,
    pub trajectories: usize,
    /// Stored frames per trajectory.
    pub steps: usize,
    /// Leapfrog steps between stored frames.
    pub substeps: usize,
    /// Leapfrog step; `None` uses half the Courant limit.
    pub dt: Option<f64>,
    pub min_sources: usize,
    pub max_sources: usize,
    pub amplitude: (f64, f64),
    /// Source wavelengths in cells.
    pub wavelength: (f64, f64),
    pub seed: u64,
}

impl Default for MaxwellParams {
    fn default() -> Self {
        Self {
            grid: 16,
            trajectories: 8,
            steps: 10,
            substeps: 4,
            dt: None,
            min_sources: 1,
            max_sources: 3,
            amplitude: (0.5, 1.5),
            wavelength: (4.0, 8.0),
            seed: 0,
        }
    }
}

impl MaxwellParams {
    pub fn dx(&self) -> f64 {
        1.0 / self.grid as f64
    }

    pub fn step(&self) -> f64 {
        self.dt.unwrap_or(0.5 * courant_limit(self.dx()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid < 2 || self.steps == 0 || self.substeps == 0 {
            return Err(Error::Invalid("maxwell needs grid ≥ 2, steps ≥ 1, substeps ≥ 1".into()));
        }
        if self.min_sources > self.max_sources {
            return Err(Error::Invalid("min_sources exceeds max_sources".into()));
        }
        let (dt, limit) = (self.step(), courant_limit(self.dx()));
        if !(dt > 0.0 && dt <= limit) {
            return Err(Error::Courant { dt, limit });
        }
        Ok(())
    }
}

pub fn random_sources(p: &MaxwellParams, rng: &mut ChaCha8Rng) -> Vec<PlaneSource> {
    let count = rng.gen_range(p.min_sources..=p.max_sources);
    (0..count)
        .map(|_| {
            let axis = rng.gen_range(0..3);
            let polarization = (axis + rng.gen_range(1..3)) % 3;
            let lambda = rng.gen_range(p.wavelength.0..=p.wavelength.1) * p.dx();
            PlaneSource {
                axis,
                polarization,
                amplitude: rng.gen_range(p.amplitude.0..=p.amplitude.1),
                omega: 2.0 * PI / lambda,
                phase: rng.gen_range(0.0..2.0 * PI),
            }
        })
        .collect()
}

fn maxwell_trajectory(p: &MaxwellParams, index: usize) -> Result<Vec<f64>> {
    let mut rng = trajectory_rng(p.seed, index);
    let sources = random_sources(p, &mut rng);
    let mut yee = Yee::new(p.grid, p.dx(), p.step())?;
    let mut out = Vec::with_capacity(p.steps * 8 * p.grid.pow(3));
    for t in 0..p.steps {
        if t > 0 {
            for _ in 0..p.substeps {
                yee.step(&sources);
            }
        }
        let h = yee.next_h();
        out.extend(yee.frame(&h));
    }
    Ok(out)
}

/// FDTD trajectories driven by random boundary plane sources from rest;
/// `D` in the vector blades, `H` in the bivector blades.
pub fn gen_maxwell3d(p: &MaxwellParams) -> Result<TrajectorySet> {
    p.validate()?;
    let parts: Vec<Vec<f64>> = (0..p.trajectories)
        .into_par_iter()
        .map(|i| maxwell_trajectory(p, i))
        .collect::<Result<_>>()?;
    let set = TrajectorySet {
        signature: Signature::CL30,
        packing: FieldPacking::maxwell_3d(),
        channels: 1,
        dims: vec![p.grid; 3],
        dx: vec![p.dx(); 3],
        dt: p.step() * p.substeps as f64,
        trajectories: p.trajectories,
        steps: p.steps,
        dtype: Dtype::F32,
        provenance: Provenance {
            generator: "maxwell3d".into(),
            params: serde_json::to_value(p)?,
            seed: p.seed,
        },
        data: parts.concat(),
    };
    set.validate()?;
    Ok(set)
}

/// Phase speed of a `+x` plane wave `D_y = cos(kx − ωt)` with `k = 2π·mode`
/// after `steps` leapfrog steps, measured from the phase of the `mode` Fourier
/// coefficient of `D_y` along `x`.
pub fn plane_wave_phase_speed(m: usize, mode: usize, dt: f64, steps: usize) -> Result<f64> {
    let dx = 1.0 / m as f64;
    let mut yee = Yee::new(m, dx, dt)?;
    let k = 2.0 * PI * mode as f64;
    let st = strides(&[m, m, m]);
    for p in 0..m.pow(3) {
        let i = p / st[0];
        let x = i as f64 * dx;
        yee.d[1][p] = (k * x).cos();
        // H_z sits half a cell ahead in x and half a step behind in time.
        yee.h[2][p] = (k * (x + 0.5 * dx) + k * 0.5 * dt).cos();
    }
    let phase_of = |yee: &Yee| {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..m {
            let x = i as f64 * dx;
            acc += yee.d[1][i * st[0]] * Complex64::from_polar(1.0, -k * x);
        }
        acc.arg()
    };
    let p0 = phase_of(&yee);
    let mut total = 0.0;
    let mut prev = p0;
    for _ in 0..steps {
        yee.step(&[]);
        let p = phase_of(&yee);
        let mut d = p - prev;
        while d > PI {
            d -= 2.0 * PI;
        }
        while d < -PI {
            d += 2.0 * PI;
        }
        total += d;
        prev = p;
    }
    let omega = -total / (steps as f64 * dt);
    Ok(omega / k)
}
