//! Spectral (Fourier) layers: the Clifford variant acts on dual-pair spectra
//! with a geometric product per mode, the real variant is the usual FNO mixer.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::algebra::ProductTerm;
use crate::error::{Error, Result};
use crate::fields::strides;
use crate::transforms::fft_nd_raw;

/// Flat indices of the retained low-frequency modes.
#[derive(Clone, Debug)]
pub struct SpectralGeometry {
    dims: Vec<usize>,
    modes: Vec<usize>,
    retained: Vec<usize>,
}

impl SpectralGeometry {
    /// All `2^d` corner blocks (`[:m]` / `[-m:]` on every axis), first axis fastest.
    pub fn corners(dims: &[usize], modes: &[usize]) -> Result<Self> {
        Self::build(dims, modes, dims.len())
    }

    /// Corner blocks on all but the last axis, low block only on the last.
    pub fn half(dims: &[usize], modes: &[usize]) -> Result<Self> {
        Self::build(dims, modes, dims.len() - 1)
    }

    fn build(dims: &[usize], modes: &[usize], split_axes: usize) -> Result<Self> {
        if dims.len() != modes.len() {
            return Err(Error::Shape("one mode cutoff per axis".into()));
        }
        for (axis, (&n, &m)) in dims.iter().zip(modes).enumerate() {
            if m == 0 || 2 * m > n {
                return Err(Error::CutoffExceedsNyquist { axis, cutoff: m, limit: n / 2 });
            }
        }
        let st = strides(dims);
        let block_len: usize = modes.iter().product();
        let bst = strides(modes);
        let mut retained = Vec::with_capacity(block_len << split_axes);
        for block in 0..(1usize << split_axes) {
            for j in 0..block_len {
                let mut flat = 0;
                for a in 0..dims.len() {
                    let i = (j / bst[a]) % modes[a];
                    let high = a < split_axes && (block >> a) & 1 == 1;
                    let f = if high { dims[a] - modes[a] + i } else { i };
                    flat += f * st[a];
                }
                retained.push(flat);
            }
        }
        Ok(Self {
            dims: dims.to_vec(),
            modes: modes.to_vec(),
            retained,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn retained(&self) -> &[usize] {
        &self.retained
    }

    pub fn len(&self) -> usize {
        self.retained.len()
    }

    pub fn is_empty(&self) -> bool {
        self.retained.is_empty()
    }

    pub fn grid_len(&self) -> usize {
        self.dims.iter().product()
    }
}

/// Clifford spectral mixer: `Y(ξ) = Σ_ci W_{ci,co}(ξ)·X_ci(ξ)` on retained modes.
///
/// Weights are real multivectors laid out `[blade][cin][cout][mode]`. They act
/// from the left: a grid shift multiplies every spectrum by a spinor phase from
/// the right, so left multiplication keeps the layer shift-equivariant.
#[derive(Clone, Debug)]
pub struct CliffordSpectralSpec {
    pub geometry: SpectralGeometry,
    pub blades: usize,
    pub cin: usize,
    pub cout: usize,
    pub terms: Vec<ProductTerm>,
    pub pairs: Vec<(usize, usize, f64)>,
}

impl CliffordSpectralSpec {
    pub fn weights_len(&self) -> usize {
        self.blades * self.cin * self.cout * self.geometry.len()
    }

    fn analyse(&self, x: &[f64], out: &mut [f64], buf: &mut [Complex64]) {
        let (n, r, cin) = (self.geometry.grid_len(), self.geometry.len(), self.cin);
        for &(rb, ib, s) in &self.pairs {
            for ci in 0..cin {
                let (xr, xi) = (&x[(rb * cin + ci) * n..][..n], &x[(ib * cin + ci) * n..][..n]);
                for k in 0..n {
                    buf[k] = Complex64::new(xr[k], s * xi[k]);
                }
                fft_nd_raw(buf, &self.geometry.dims, false);
                for (j, &m) in self.geometry.retained.iter().enumerate() {
                    out[(rb * cin + ci) * r + j] = buf[m].re;
                    out[(ib * cin + ci) * r + j] = s * buf[m].im;
                }
            }
        }
    }

    /// Inverse of `analyse` restricted to retained modes; `scale` multiplies the result.
    fn synthesise(&self, spec: &[f64], ch: usize, out: &mut [f64], buf: &mut [Complex64], scale: f64) {
        let (n, r) = (self.geometry.grid_len(), self.geometry.len());
        for &(rb, ib, s) in &self.pairs {
            for c in 0..ch {
                buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
                for (j, &m) in self.geometry.retained.iter().enumerate() {
                    buf[m] = Complex64::new(spec[(rb * ch + c) * r + j], s * spec[(ib * ch + c) * r + j]);
                }
                fft_nd_raw(buf, &self.geometry.dims, true);
                for k in 0..n {
                    out[(rb * ch + c) * n + k] = scale * buf[k].re;
                    out[(ib * ch + c) * n + k] = scale * s * buf[k].im;
                }
            }
        }
    }

    fn mix(&self, xr: &[f64], w: &[f64]) -> Vec<f64> {
        let (r, cin, cout) = (self.geometry.len(), self.cin, self.cout);
        let mut y = vec![0.0; self.blades * cout * r];
        for t in &self.terms {
            for ci in 0..cin {
                let xs = &xr[(t.rhs * cin + ci) * r..][..r];
                for co in 0..cout {
                    let ws = &w[((t.lhs * cin + ci) * cout + co) * r..][..r];
                    let ys = &mut y[(t.out * cout + co) * r..][..r];
                    for j in 0..r {
                        ys[j] += t.sign * xs[j] * ws[j];
                    }
                }
            }
        }
        y
    }

    /// Returns the output `[batch][nb][cout][grid]` and the retained input
    /// spectra needed by the backward pass.
    pub fn forward(&self, x: &[f64], batch: usize, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (n, r) = (self.geometry.grid_len(), self.geometry.len());
        let (in_len, out_len) = (self.blades * self.cin * n, self.blades * self.cout * n);
        assert_eq!(x.len(), batch * in_len, "spectral input size");
        assert_eq!(w.len(), self.weights_len(), "spectral weight size");
        let parts: Vec<(Vec<f64>, Vec<f64>)> = x
            .par_chunks(in_len)
            .map(|xs| {
                let mut buf = vec![Complex64::new(0.0, 0.0); n];
                let mut xr = vec![0.0; self.blades * self.cin * r];
                self.analyse(xs, &mut xr, &mut buf);
                let yr = self.mix(&xr, w);
                let mut y = vec![0.0; out_len];
                self.synthesise(&yr, self.cout, &mut y, &mut buf, 1.0 / n as f64);
                (y, xr)
            })
            .collect();
        let mut y = Vec::with_capacity(batch * out_len);
        let mut saved = Vec::with_capacity(batch * self.blades * self.cin * r);
        for (a, b) in parts {
            y.extend(a);
            saved.extend(b);
        }
        (y, saved)
    }

    /// `(∂L/∂x, ∂L/∂w)` given the saved retained spectra.
    pub fn backward(&self, saved: &[f64], batch: usize, w: &[f64], gy: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (n, r) = (self.geometry.grid_len(), self.geometry.len());
        let (cin, cout, nb) = (self.cin, self.cout, self.blades);
        let out_len = nb * cout * n;
        let parts: Vec<(Vec<f64>, Vec<f64>)> = saved
            .par_chunks(nb * cin * r)
            .zip(gy.par_chunks(out_len))
            .map(|(xr, gys)| {
                let mut buf = vec![Complex64::new(0.0, 0.0); n];
                // adjoint of the normalised inverse: forward DFT over N
                let mut gyr = vec![0.0; nb * cout * r];
                for &(rb, ib, s) in &self.pairs {
                    for co in 0..cout {
                        let (a, b) = (&gys[(rb * cout + co) * n..][..n], &gys[(ib * cout + co) * n..][..n]);
                        for k in 0..n {
                            buf[k] = Complex64::new(a[k], s * b[k]);
                        }
                        fft_nd_raw(&mut buf, &self.geometry.dims, false);
                        for (j, &m) in self.geometry.retained.iter().enumerate() {
                            gyr[(rb * cout + co) * r + j] = buf[m].re / n as f64;
                            gyr[(ib * cout + co) * r + j] = s * buf[m].im / n as f64;
                        }
                    }
                }
                let mut gw = vec![0.0; w.len()];
                let mut gxr = vec![0.0; nb * cin * r];
                for t in &self.terms {
                    for ci in 0..cin {
                        for co in 0..cout {
                            let widx = ((t.lhs * cin + ci) * cout + co) * r;
                            let gys = &gyr[(t.out * cout + co) * r..][..r];
                            let xs = &xr[(t.rhs * cin + ci) * r..][..r];
                            let gws = &mut gw[widx..widx + r];
                            for j in 0..r {
                                gws[j] += t.sign * xs[j] * gys[j];
                            }
                            let ws = &w[widx..widx + r];
                            let gxs = &mut gxr[(t.rhs * cin + ci) * r..][..r];
                            for j in 0..r {
                                gxs[j] += t.sign * ws[j] * gys[j];
                            }
                        }
                    }
                }
                // adjoint of the unnormalised forward DFT: unnormalised inverse
                let mut gx = vec![0.0; nb * cin * n];
                self.synthesise(&gxr, cin, &mut gx, &mut buf, 1.0);
                (gx, gw)
            })
            .collect();
        let mut gx = Vec::with_capacity(batch * nb * cin * n);
        let mut gw = vec![0.0; w.len()];
        for (a, b) in parts {
            gx.extend(a);
            for (p, q) in gw.iter_mut().zip(&b) {
                *p += q;
            }
        }
        (gx, gw)
    }
}

/// Real-valued FNO mixer with complex weights `[re/im][cin][cout][mode]`,
/// output `Re(IDFT(Y))`.
#[derive(Clone, Debug)]
pub struct RealSpectralSpec {
    pub geometry: SpectralGeometry,
    pub cin: usize,
    pub cout: usize,
}

impl RealSpectralSpec {
    pub fn weights_len(&self) -> usize {
        2 * self.cin * self.cout * self.geometry.len()
    }

    pub fn forward(&self, x: &[f64], batch: usize, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (n, r, cin, cout) = (self.geometry.grid_len(), self.geometry.len(), self.cin, self.cout);
        assert_eq!(x.len(), batch * cin * n, "spectral input size");
        assert_eq!(w.len(), self.weights_len(), "spectral weight size");
        let plane = cin * cout * r;
        let parts: Vec<(Vec<f64>, Vec<f64>)> = x
            .par_chunks(cin * n)
            .map(|xs| {
                let mut buf = vec![Complex64::new(0.0, 0.0); n];
                let mut xr = vec![0.0; 2 * cin * r];
                for ci in 0..cin {
                    for k in 0..n {
                        buf[k] = Complex64::new(xs[ci * n + k], 0.0);
                    }
                    fft_nd_raw(&mut buf, &self.geometry.dims, false);
                    for (j, &m) in self.geometry.retained.iter().enumerate() {
                        xr[ci * r + j] = buf[m].re;
                        xr[(cin + ci) * r + j] = buf[m].im;
                    }
                }
                let mut y = vec![0.0; cout * n];
                let mut yr = vec![0.0; r];
                let mut yi = vec![0.0; r];
                for co in 0..cout {
                    yr.iter_mut().for_each(|v| *v = 0.0);
                    yi.iter_mut().for_each(|v| *v = 0.0);
                    for ci in 0..cin {
                        let (ar, ai) = (&xr[ci * r..][..r], &xr[(cin + ci) * r..][..r]);
                        let (br, bi) = (&w[(ci * cout + co) * r..][..r], &w[plane + (ci * cout + co) * r..][..r]);
                        for j in 0..r {
                            yr[j] += ar[j] * br[j] - ai[j] * bi[j];
                            yi[j] += ar[j] * bi[j] + ai[j] * br[j];
                        }
                    }
                    buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
                    for (j, &m) in self.geometry.retained.iter().enumerate() {
                        buf[m] = Complex64::new(yr[j], yi[j]);
                    }
                    fft_nd_raw(&mut buf, &self.geometry.dims, true);
                    for k in 0..n {
                        y[co * n + k] = buf[k].re / n as f64;
                    }
                }
                (y, xr)
            })
            .collect();
        let mut y = Vec::with_capacity(batch * cout * n);
        let mut saved = Vec::with_capacity(batch * 2 * cin * r);
        for (a, b) in parts {
            y.extend(a);
            saved.extend(b);
        }
        (y, saved)
    }

    pub fn backward(&self, saved: &[f64], batch: usize, w: &[f64], gy: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (n, r, cin, cout) = (self.geometry.grid_len(), self.geometry.len(), self.cin, self.cout);
        let plane = cin * cout * r;
        let parts: Vec<(Vec<f64>, Vec<f64>)> = saved
            .par_chunks(2 * cin * r)
            .zip(gy.par_chunks(cout * n))
            .map(|(xr, gys)| {
                let mut buf = vec![Complex64::new(0.0, 0.0); n];
                let mut gyr = vec![0.0; 2 * cout * r];
                for co in 0..cout {
                    for k in 0..n {
                        buf[k] = Complex64::new(gys[co * n + k], 0.0);
                    }
                    fft_nd_raw(&mut buf, &self.geometry.dims, false);
                    for (j, &m) in self.geometry.retained.iter().enumerate() {
                        gyr[co * r + j] = buf[m].re / n as f64;
                        gyr[(cout + co) * r + j] = buf[m].im / n as f64;
                    }
                }
                let mut gw = vec![0.0; w.len()];
                let mut gx = vec![0.0; cin * n];
                let mut gxr = vec![0.0; r];
                let mut gxi = vec![0.0; r];
                for ci in 0..cin {
                    gxr.iter_mut().for_each(|v| *v = 0.0);
                    gxi.iter_mut().for_each(|v| *v = 0.0);
                    let (ar, ai) = (&xr[ci * r..][..r], &xr[(cin + ci) * r..][..r]);
                    for co in 0..cout {
                        let (gr, gi) = (&gyr[co * r..][..r], &gyr[(cout + co) * r..][..r]);
                        let o = (ci * cout + co) * r;
                        for j in 0..r {
                            // conj(X)·gY and conj(W)·gY
                            gw[o + j] += ar[j] * gr[j] + ai[j] * gi[j];
                            gw[plane + o + j] += ar[j] * gi[j] - ai[j] * gr[j];
                            let (br, bi) = (w[o + j], w[plane + o + j]);
                            gxr[j] += br * gr[j] + bi * gi[j];
                            gxi[j] += br * gi[j] - bi * gr[j];
                        }
                    }
                    buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
                    for (j, &m) in self.geometry.retained.iter().enumerate() {
                        buf[m] = Complex64::new(gxr[j], gxi[j]);
                    }
                    fft_nd_raw(&mut buf, &self.geometry.dims, true);
                    for k in 0..n {
                        gx[ci * n + k] = buf[k].re;
                    }
                }
                (gx, gw)
            })
            .collect();
        let mut gx = Vec::with_capacity(batch * cin * n);
        let mut gw = vec![0.0; w.len()];
        for (a, b) in parts {
            gx.extend(a);
            for (p, q) in gw.iter_mut().zip(&b) {
                *p += q;
            }
        }
        (gx, gw)
    }
}
