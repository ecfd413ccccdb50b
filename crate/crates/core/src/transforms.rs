//! Complex DFTs and the 2D/3D Clifford Fourier transforms.
//!
//! Forward transforms are unnormalised, inverses carry the `1/N` factor.
//! A Clifford spectrum is stored like a field, one real multivector per mode.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::algebra::{BladeTable, Signature};
use crate::error::{Error, Result};
use crate::fields::{strides, MultivectorField};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalised separable DFT of a row-major buffer, in place.
/// `inverse` flips the sign of the exponent only.
pub fn fft_nd_raw(buf: &mut [Complex64], dims: &[usize], inverse: bool) {
    let total: usize = dims.iter().product();
    assert_eq!(buf.len(), total, "buffer does not match dims");
    let st = strides(dims);
    PLANNER.with(|p| {
        let mut planner = p.borrow_mut();
        let mut line = Vec::new();
        for (axis, &n) in dims.iter().enumerate() {
            if n == 1 {
                continue;
            }
            let fft = if inverse {
                planner.plan_fft_inverse(n)
            } else {
                planner.plan_fft_forward(n)
            };
            let stride = st[axis];
            let outer = total / (n * stride);
            line.resize(n, Complex64::new(0.0, 0.0));
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * n * stride + s;
                    for k in 0..n {
                        line[k] = buf[base + k * stride];
                    }
                    fft.process(&mut line);
                    for k in 0..n {
                        buf[base + k * stride] = line[k];
                    }
                }
            }
        }
    });
}

/// DFT with the library convention: inverse divides by `N`.
pub fn fft_nd(buf: &mut [Complex64], dims: &[usize], inverse: bool) {
    fft_nd_raw(buf, dims, inverse);
    if inverse {
        let inv = 1.0 / dims.iter().product::<usize>() as f64;
        buf.iter_mut().for_each(|z| *z *= inv);
    }
}

/// Real and imaginary planes over `[channel][spatial...]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexGrid {
    pub channels: usize,
    pub dims: Vec<usize>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexGrid {
    pub fn new(channels: usize, dims: Vec<usize>, re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        let n = channels * dims.iter().product::<usize>();
        if re.len() != n || im.len() != n {
            return Err(Error::Shape(format!(
                "complex grid planes have {} and {} values, shape needs {n}",
                re.len(),
                im.len()
            )));
        }
        Ok(Self {
            channels,
            dims,
            re,
            im,
        })
    }

    pub fn zeros(channels: usize, dims: Vec<usize>) -> Self {
        let n = channels * dims.iter().product::<usize>();
        Self {
            channels,
            dims,
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }

    fn transform(&self, inverse: bool) -> Self {
        let n: usize = self.dims.iter().product();
        let mut out = self.clone();
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for c in 0..self.channels {
            let r = c * n..(c + 1) * n;
            for (z, (&a, &b)) in buf.iter_mut().zip(self.re[r.clone()].iter().zip(&self.im[r.clone()])) {
                *z = Complex64::new(a, b);
            }
            fft_nd(&mut buf, &self.dims, inverse);
            for (i, z) in buf.iter().enumerate() {
                out.re[c * n + i] = z.re;
                out.im[c * n + i] = z.im;
            }
        }
        out
    }
}

/// Channel-wise 2D DFT.
pub fn dft_2d(g: &ComplexGrid, inverse: bool) -> Result<ComplexGrid> {
    if g.dims.len() != 2 {
        return Err(Error::Shape(format!("dft_2d needs 2 axes, got {}", g.dims.len())));
    }
    Ok(g.transform(inverse))
}

/// Channel-wise 3D DFT.
pub fn dft_3d(g: &ComplexGrid, inverse: bool) -> Result<ComplexGrid> {
    if g.dims.len() != 3 {
        return Err(Error::Shape(format!("dft_3d needs 3 axes, got {}", g.dims.len())));
    }
    Ok(g.transform(inverse))
}

/// `(real blade, imaginary blade, sign)` for each complex pair.
pub const PAIRS_2D: [(usize, usize, f64); 2] = [(0, 3, 1.0), (1, 2, 1.0)];

/// The `f31 = −f13` orientation appears as the negative sign of the third pair.
pub const PAIRS_3D: [(usize, usize, f64); 4] =
    [(0, 7, 1.0), (1, 6, 1.0), (2, 5, -1.0), (3, 4, 1.0)];

/// Complex pairs for a field dimensionality.
pub fn dual_pairs(signature: Signature) -> Result<&'static [(usize, usize, f64)]> {
    match (signature.p(), signature.q()) {
        (2, 0) => Ok(&PAIRS_2D),
        (3, 0) => Ok(&PAIRS_3D),
        (p, q) => Err(Error::UnsupportedSignature { p, q }),
    }
}

/// Per-mode multivector coefficients, laid out `[blade][channel][frequency...]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CliffordSpectrum {
    signature: Signature,
    channels: usize,
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl CliffordSpectrum {
    pub fn zeros(signature: Signature, channels: usize, dims: &[usize]) -> Self {
        let n = signature.blade_count() * channels * dims.iter().product::<usize>();
        Self {
            signature,
            channels,
            dims: dims.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_data(signature: Signature, channels: usize, dims: &[usize], data: Vec<f64>) -> Result<Self> {
        let n = signature.blade_count() * channels * dims.iter().product::<usize>();
        if data.len() != n {
            return Err(Error::Shape(format!("spectrum has {} values, shape needs {n}", data.len())));
        }
        Ok(Self {
            signature,
            channels,
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn modes(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn plane(&self, blade: usize, channel: usize) -> &[f64] {
        let n = self.modes();
        let off = (blade * self.channels + channel) * n;
        &self.data[off..off + n]
    }

    pub fn plane_mut(&mut self, blade: usize, channel: usize) -> &mut [f64] {
        let n = self.modes();
        let off = (blade * self.channels + channel) * n;
        &mut self.data[off..off + n]
    }

    pub fn at(&self, channel: usize, flat: usize) -> Vec<f64> {
        (0..self.signature.blade_count())
            .map(|b| self.plane(b, channel)[flat])
            .collect()
    }

    pub fn set_at(&mut self, channel: usize, flat: usize, mv: &[f64]) {
        for (b, &v) in mv.iter().enumerate() {
            self.plane_mut(b, channel)[flat] = v;
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `F†(ξ) = F(−ξ)`, with `−ξ` taken modulo the grid.
    pub fn dagger(&self) -> Self {
        let mut out = self.clone();
        let st = strides(&self.dims);
        let n = self.modes();
        for (src, dst) in self.data.chunks(n).zip(out.data.chunks_mut(n)) {
            for (flat, d) in dst.iter_mut().enumerate() {
                *d = src[negate_index(flat, &self.dims, &st)];
            }
        }
        out
    }

    /// Pointwise geometric product `self(ξ)·other(ξ)`, channel by channel.
    pub fn product(&self, other: &Self) -> Result<Self> {
        if self.signature != other.signature || self.channels != other.channels || self.dims != other.dims {
            return Err(Error::Shape("spectra differ in shape".into()));
        }
        let table = BladeTable::new(self.signature);
        let mut out = Self::zeros(self.signature, self.channels, &self.dims);
        for c in 0..self.channels {
            for m in 0..self.modes() {
                let p = table.product(&self.at(c, m), &other.at(c, m));
                out.set_at(c, m, &p);
            }
        }
        Ok(out)
    }
}

/// Flat index of `−ξ mod N` for the mode at `flat`.
pub fn negate_index(flat: usize, dims: &[usize], st: &[usize]) -> usize {
    let mut rem = flat;
    let mut out = 0;
    for a in 0..dims.len() {
        let i = rem / st[a];
        rem %= st[a];
        out += ((dims[a] - i) % dims[a]) * st[a];
    }
    out
}

fn pairwise(
    signature: Signature,
    channels: usize,
    dims: &[usize],
    data: &[f64],
    inverse: bool,
) -> Result<Vec<f64>> {
    let pairs = dual_pairs(signature)?;
    let n: usize = dims.iter().product();
    let plane = |b: usize, c: usize| (b * channels + c) * n;
    let mut out = vec![0.0; data.len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for &(rb, ib, sign) in pairs {
        for c in 0..channels {
            let (r0, i0) = (plane(rb, c), plane(ib, c));
            for k in 0..n {
                buf[k] = Complex64::new(data[r0 + k], sign * data[i0 + k]);
            }
            fft_nd(&mut buf, dims, inverse);
            for k in 0..n {
                out[r0 + k] = buf[k].re;
                out[i0 + k] = sign * buf[k].im;
            }
        }
    }
    Ok(out)
}

fn expect_blades(signature: Signature, blades: usize, axes: usize, dims: &[usize]) -> Result<()> {
    if signature.blade_count() != blades {
        return Err(Error::BladeCount {
            expected: blades,
            got: signature.blade_count(),
        });
    }
    if dims.len() != axes {
        return Err(Error::Shape(format!("expected {axes} spatial axes, got {}", dims.len())));
    }
    Ok(())
}

/// Spinor pair `f0 + f12·i₂` and vector pair `f1 + f2·i₂`, each DFT'd.
pub fn clifford_ft_2d(f: &MultivectorField) -> Result<CliffordSpectrum> {
    expect_blades(f.signature(), 4, 2, f.dims())?;
    let data = pairwise(f.signature(), f.channels(), f.dims(), f.data(), false)?;
    CliffordSpectrum::from_data(f.signature(), f.channels(), f.dims(), data)
}

pub fn clifford_ift_2d(s: &CliffordSpectrum) -> Result<MultivectorField> {
    expect_blades(s.signature(), 4, 2, s.dims())?;
    let data = pairwise(s.signature(), s.channels(), s.dims(), s.data(), true)?;
    MultivectorField::from_data(s.signature(), s.channels(), s.dims(), data)
}

/// Four pairs `(f0,f123)`, `(f1,f23)`, `(f2,f31)`, `(f3,f12)` with `i₃` as the unit.
pub fn clifford_ft_3d(f: &MultivectorField) -> Result<CliffordSpectrum> {
    expect_blades(f.signature(), 8, 3, f.dims())?;
    let data = pairwise(f.signature(), f.channels(), f.dims(), f.data(), false)?;
    CliffordSpectrum::from_data(f.signature(), f.channels(), f.dims(), data)
}

pub fn clifford_ift_3d(s: &CliffordSpectrum) -> Result<MultivectorField> {
    expect_blades(s.signature(), 8, 3, s.dims())?;
    let data = pairwise(s.signature(), s.channels(), s.dims(), s.data(), true)?;
    MultivectorField::from_data(s.signature(), s.channels(), s.dims(), data)
}

/// Which blades a convolution kernel may occupy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    /// Scalar and pseudoscalar (2D only).
    Spinor,
    /// Vector blades (2D only).
    Vector,
    Full,
}

impl KernelKind {
    fn allows(self, blade: usize) -> bool {
        match self {
            KernelKind::Spinor => blade == 0 || blade == 3,
            KernelKind::Vector => blade == 1 || blade == 2,
            KernelKind::Full => true,
        }
    }
}

/// `(f ⋆ k)(x) = Σ_y f(y)·k(y − x)` over the periodic grid, per channel.
pub fn circular_convolve_direct(
    f: &MultivectorField,
    k: &MultivectorField,
    kind: KernelKind,
) -> Result<MultivectorField> {
    if !f.same_shape(k) {
        return Err(Error::Shape("field and kernel must share signature, channels and grid".into()));
    }
    if kind != KernelKind::Full && f.signature().dim() != 2 {
        return Err(Error::Invalid("spinor/vector kernels are two-dimensional".into()));
    }
    let nb = f.blades();
    for b in (0..nb).filter(|&b| !kind.allows(b)) {
        for c in 0..k.channels() {
            if k.plane(b, c).iter().any(|&v| v != 0.0) {
                return Err(Error::Invalid(format!("{kind:?} kernel has weight in blade {b}")));
            }
        }
    }
    let table = BladeTable::new(f.signature());
    let dims = f.dims().to_vec();
    let st = strides(&dims);
    let n = f.spatial_len();
    let mut out = MultivectorField::zeros(f.signature(), f.channels(), &dims)?;
    let mut acc = vec![0.0; nb];
    for c in 0..f.channels() {
        for x in 0..n {
            acc.iter_mut().for_each(|v| *v = 0.0);
            for y in 0..n {
                let d = diff_index(y, x, &dims, &st);
                for i in 0..nb {
                    let fi = f.plane(i, c)[y];
                    if fi == 0.0 {
                        continue;
                    }
                    for j in 0..nb {
                        let (o, s) = table.entry(i, j);
                        acc[o] += s * fi * k.plane(j, c)[d];
                    }
                }
            }
            for (b, &v) in acc.iter().enumerate() {
                out.plane_mut(b, c)[x] = v;
            }
        }
    }
    Ok(out)
}

fn diff_index(y: usize, x: usize, dims: &[usize], st: &[usize]) -> usize {
    let (mut ry, mut rx, mut out) = (y, x, 0);
    for a in 0..dims.len() {
        let (iy, ix) = (ry / st[a], rx / st[a]);
        ry %= st[a];
        rx %= st[a];
        out += ((iy + dims[a] - ix) % dims[a]) * st[a];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_grid_has_dc_only() {
        let g = ComplexGrid::new(1, vec![4, 4], vec![2.5; 16], vec![0.0; 16]).unwrap();
        let s = dft_2d(&g, false).unwrap();
        assert!((s.re[0] - 40.0).abs() < 1e-12);
        assert!(s.re[1..].iter().chain(&s.im).all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let mut re = vec![0.0; 27];
        re[0] = 1.0;
        let g = ComplexGrid::new(1, vec![3, 3, 3], re, vec![0.0; 27]).unwrap();
        let s = dft_3d(&g, false).unwrap();
        assert!(s.re.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(s.im.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn bivector_only_stays_in_spinor_pair() {
        let mut f = MultivectorField::zeros(Signature::CL20, 1, &[4, 4]).unwrap();
        for (i, v) in f.plane_mut(3, 0).iter_mut().enumerate() {
            *v = (i as f64 * 0.7).sin();
        }
        let s = clifford_ft_2d(&f).unwrap();
        assert!(s.plane(1, 0).iter().chain(s.plane(2, 0)).all(|v| v.abs() < 1e-12));
        assert!(s.plane(0, 0).iter().any(|v| v.abs() > 1e-3));
    }

    #[test]
    fn trivector_only_stays_in_first_pair() {
        let mut f = MultivectorField::zeros(Signature::CL30, 1, &[3, 3, 3]).unwrap();
        for (i, v) in f.plane_mut(7, 0).iter_mut().enumerate() {
            *v = (i as f64 * 0.3).cos();
        }
        let s = clifford_ft_3d(&f).unwrap();
        for b in 1..7 {
            assert!(s.plane(b, 0).iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn wrong_blade_count() {
        let f = MultivectorField::zeros(Signature::CL30, 1, &[2, 2, 2]).unwrap();
        assert!(matches!(clifford_ft_2d(&f), Err(Error::BladeCount { .. })));
    }

    #[test]
    fn delta_kernel_is_identity() {
        let n = 4 * 9;
        let f = MultivectorField::from_data(Signature::CL20, 1, &[3, 3], (0..n).map(|i| i as f64).collect()).unwrap();
        let mut k = MultivectorField::zeros(Signature::CL20, 1, &[3, 3]).unwrap();
        k.plane_mut(0, 0)[0] = 1.0;
        let g = circular_convolve_direct(&f, &k, KernelKind::Spinor).unwrap();
        assert_eq!(g, f);
        assert!(circular_convolve_direct(&f, &k.clone(), KernelKind::Vector).is_err());
    }

    #[test]
    fn negate_index_wraps() {
        let dims = [4, 3];
        let st = strides(&dims);
        assert_eq!(negate_index(0, &dims, &st), 0);
        assert_eq!(negate_index(1, &dims, &st), 2);
        assert_eq!(negate_index(3 + 1, &dims, &st), 3 * 3 + 2);
    }
}
