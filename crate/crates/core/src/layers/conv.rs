//! Plain multi-channel cross-correlation and the blade-mixing kernel
//! assemblies that turn Clifford kernels into ordinary real kernels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{rotation_matrix_unit, rotation_matrix_unit_vjp, ProductTerm};
use crate::error::{Error, Result};
use crate::fields::strides;

/// Boundary handling for convolutions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    #[default]
    Periodic,
    Zero,
}

const OUTSIDE: u32 = u32::MAX;

/// Index maps for a "same"-size cross-correlation `y(o) = Σ_d x(o·s + d)·k(d)`.
#[derive(Clone, Debug)]
pub struct ConvGeometry {
    dims: Vec<usize>,
    kdims: Vec<usize>,
    padding: Padding,
    stride: usize,
    out_dims: Vec<usize>,
    /// `taps × out_len` input indices, or `None` when every tap is the identity.
    index: Option<Vec<u32>>,
}

impl ConvGeometry {
    pub fn new(dims: &[usize], kdims: &[usize], padding: Padding, stride: usize) -> Result<Self> {
        if dims.len() != kdims.len() {
            return Err(Error::Shape("kernel and grid dimensionality differ".into()));
        }
        if kdims.iter().any(|&k| k % 2 == 0) {
            return Err(Error::Shape(format!("kernel extents must be odd, got {kdims:?}")));
        }
        if stride == 0 {
            return Err(Error::Invalid("stride must be at least 1".into()));
        }
        if padding == Padding::Periodic && dims.iter().zip(kdims).any(|(&n, &k)| k > n) {
            return Err(Error::Shape(format!("kernel {kdims:?} exceeds grid {dims:?}")));
        }
        let out_dims: Vec<usize> = dims.iter().map(|&n| n.div_ceil(stride)).collect();
        let mut g = Self {
            dims: dims.to_vec(),
            kdims: kdims.to_vec(),
            padding,
            stride,
            out_dims,
            index: None,
        };
        if !(stride == 1 && kdims.iter().all(|&k| k == 1)) {
            g.index = Some(g.build_index());
        }
        Ok(g)
    }

    fn build_index(&self) -> Vec<u32> {
        let taps = self.taps();
        let out_len = self.out_len();
        let ost = strides(&self.out_dims);
        let ist = strides(&self.dims);
        let kst = strides(&self.kdims);
        let mut idx = vec![OUTSIDE; taps * out_len];
        for t in 0..taps {
            for o in 0..out_len {
                let mut inside = true;
                let mut flat = 0usize;
                for a in 0..self.dims.len() {
                    let oi = (o / ost[a]) % self.out_dims[a];
                    let ki = (t / kst[a]) % self.kdims[a];
                    let pos = (oi * self.stride) as isize + ki as isize - (self.kdims[a] / 2) as isize;
                    let n = self.dims[a] as isize;
                    let pos = match self.padding {
                        Padding::Periodic => pos.rem_euclid(n),
                        Padding::Zero => {
                            if pos < 0 || pos >= n {
                                inside = false;
                            }
                            pos
                        }
                    };
                    flat += pos.max(0) as usize * ist[a];
                }
                if inside {
                    idx[t * out_len + o] = flat as u32;
                }
            }
        }
        idx
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn kdims(&self) -> &[usize] {
        &self.kdims
    }

    pub fn out_dims(&self) -> &[usize] {
        &self.out_dims
    }

    pub fn padding(&self) -> Padding {
        self.padding
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn taps(&self) -> usize {
        self.kdims.iter().product()
    }

    pub fn in_len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn out_len(&self) -> usize {
        self.out_dims.iter().product()
    }

    fn gather(&self, x: &[f64], cin: usize, t: usize, buf: &mut [f64]) {
        let (n_in, n_out) = (self.in_len(), self.out_len());
        let idx = &self.index.as_ref().expect("gather needs an index map")[t * n_out..(t + 1) * n_out];
        for ci in 0..cin {
            let src = &x[ci * n_in..(ci + 1) * n_in];
            let dst = &mut buf[ci * n_out..(ci + 1) * n_out];
            for (d, &i) in dst.iter_mut().zip(idx) {
                *d = if i == OUTSIDE { 0.0 } else { src[i as usize] };
            }
        }
    }

    fn scatter_add(&self, buf: &[f64], cin: usize, t: usize, gx: &mut [f64]) {
        let (n_in, n_out) = (self.in_len(), self.out_len());
        let idx = &self.index.as_ref().expect("scatter needs an index map")[t * n_out..(t + 1) * n_out];
        for ci in 0..cin {
            let src = &buf[ci * n_out..(ci + 1) * n_out];
            let dst = &mut gx[ci * n_in..(ci + 1) * n_in];
            for (&v, &i) in src.iter().zip(idx) {
                if i != OUTSIDE {
                    dst[i as usize] += v;
                }
            }
        }
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn forward_one(g: &ConvGeometry, x: &[f64], cin: usize, k: &[f64], cout: usize, y: &mut [f64]) {
    let taps = g.taps();
    let n_out = g.out_len();
    let mut buf = if g.index.is_some() { vec![0.0; cin * n_out] } else { Vec::new() };
    for t in 0..taps {
        let xs: &[f64] = if g.index.is_some() {
            g.gather(x, cin, t, &mut buf);
            &buf
        } else {
            x
        };
        for co in 0..cout {
            let yrow = &mut y[co * n_out..(co + 1) * n_out];
            for ci in 0..cin {
                let w = k[(co * cin + ci) * taps + t];
                if w != 0.0 {
                    axpy(w, &xs[ci * n_out..(ci + 1) * n_out], yrow);
                }
            }
        }
    }
}

/// `x: [batch][cin][dims]`, `k: [cout][cin][kdims]` → `[batch][cout][out_dims]`.
pub fn conv_forward(g: &ConvGeometry, x: &[f64], batch: usize, cin: usize, k: &[f64], cout: usize) -> Vec<f64> {
    let (n_in, n_out) = (g.in_len(), g.out_len());
    assert_eq!(x.len(), batch * cin * n_in, "conv input size");
    assert_eq!(k.len(), cout * cin * g.taps(), "conv kernel size");
    let mut y = vec![0.0; batch * cout * n_out];
    y.par_chunks_mut(cout * n_out)
        .zip(x.par_chunks(cin * n_in))
        .for_each(|(ys, xs)| forward_one(g, xs, cin, k, cout, ys));
    y
}

/// Returns `(∂L/∂x, ∂L/∂k)` for the cotangent `gy`.
pub fn conv_backward(
    g: &ConvGeometry,
    x: &[f64],
    batch: usize,
    cin: usize,
    k: &[f64],
    cout: usize,
    gy: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let (n_in, n_out, taps) = (g.in_len(), g.out_len(), g.taps());
    assert_eq!(x.len(), batch * cin * n_in, "conv input size");
    assert_eq!(gy.len(), batch * cout * n_out, "conv cotangent size");
    let per_sample: Vec<(Vec<f64>, Vec<f64>)> = x
        .par_chunks(cin * n_in)
        .zip(gy.par_chunks(cout * n_out))
        .map(|(xs, gys)| {
            let mut gx = vec![0.0; cin * n_in];
            let mut gk = vec![0.0; k.len()];
            let mut buf = vec![0.0; cin * n_out];
            let mut gbuf = vec![0.0; cin * n_out];
            for t in 0..taps {
                let xt: &[f64] = if g.index.is_some() {
                    g.gather(xs, cin, t, &mut buf);
                    &buf
                } else {
                    xs
                };
                gbuf.iter_mut().for_each(|v| *v = 0.0);
                for co in 0..cout {
                    let gyrow = &gys[co * n_out..(co + 1) * n_out];
                    for ci in 0..cin {
                        let wi = (co * cin + ci) * taps + t;
                        gk[wi] += dot(gyrow, &xt[ci * n_out..(ci + 1) * n_out]);
                        let w = k[wi];
                        if w != 0.0 {
                            axpy(w, gyrow, &mut gbuf[ci * n_out..(ci + 1) * n_out]);
                        }
                    }
                }
                if g.index.is_some() {
                    g.scatter_add(&gbuf, cin, t, &mut gx);
                } else {
                    for (a, b) in gx.iter_mut().zip(&gbuf) {
                        *a += b;
                    }
                }
            }
            (gx, gk)
        })
        .collect();
    let mut gx = Vec::with_capacity(x.len());
    let mut gk = vec![0.0; k.len()];
    for (sx, sk) in per_sample {
        gx.extend(sx);
        for (a, b) in gk.iter_mut().zip(&sk) {
            *a += b;
        }
    }
    (gx, gk)
}

/// Shape of a blade-mixing kernel: `nb` blades, `cout × cin` channels, `taps` per filter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KernelShape {
    pub blades: usize,
    pub cout: usize,
    pub cin: usize,
    pub taps: usize,
}

impl KernelShape {
    pub fn weights_len(&self) -> usize {
        self.blades * self.cout * self.cin * self.taps
    }

    pub fn real_len(&self) -> usize {
        self.blades * self.blades * self.cout * self.cin * self.taps
    }
}

/// Builds the real kernel `[nb·cout][nb·cin][taps]` from multivector weights
/// `[nb][cout][cin][taps]`: entry `(out, in)` collects `sign·w[rhs]` for every
/// product term `in · rhs → out`.
pub fn assemble_clifford_kernel(terms: &[ProductTerm], s: KernelShape, w: &[f64]) -> Vec<f64> {
    assert_eq!(w.len(), s.weights_len(), "clifford weight size");
    let KernelShape { blades: nb, cout, cin, taps } = s;
    let mut k = vec![0.0; s.real_len()];
    let rows = nb * cin;
    for term in terms {
        for co in 0..cout {
            for ci in 0..cin {
                let src = &w[((term.rhs * cout + co) * cin + ci) * taps..][..taps];
                let row = term.out * cout + co;
                let col = term.lhs * cin + ci;
                let dst = &mut k[(row * rows + col) * taps..][..taps];
                axpy(term.sign, src, dst);
            }
        }
    }
    k
}

pub fn assemble_clifford_kernel_backward(terms: &[ProductTerm], s: KernelShape, gk: &[f64]) -> Vec<f64> {
    let KernelShape { blades: nb, cout, cin, taps } = s;
    let mut gw = vec![0.0; s.weights_len()];
    let rows = nb * cin;
    for term in terms {
        for co in 0..cout {
            for ci in 0..cin {
                let src = &gk[((term.out * cout + co) * rows + term.lhs * cin + ci) * taps..][..taps];
                let dst = &mut gw[((term.rhs * cout + co) * cin + ci) * taps..][..taps];
                axpy(term.sign, src, dst);
            }
        }
    }
    gw
}

/// Number of parameter tensors of a rotational kernel.
pub fn rotational_tensors(faithful: bool) -> usize {
    if faithful {
        4
    } else {
        6
    }
}

/// Real `[4·cout][4·cin][taps]` kernel of the rotational layer.
///
/// `w` is `[m][cout][cin][taps]` with `m = 6` (filter `W0..W3`, scale `W4`,
/// coupling `W5`) or `m = 4` when `faithful` fixes `W4 = 1`, `W5 = 0`.
/// Row 0 is `[W0, −W1, −W2, −W3]`; rows 1–3 are `[W5, W4·R(ŵ)]` with `R` the
/// rotation matrix of `ŵ = w/sqrt(‖w‖² + eps)`.
pub fn assemble_rotational_kernel(w: &[f64], cout: usize, cin: usize, taps: usize, eps: f64, faithful: bool) -> Vec<f64> {
    let m = rotational_tensors(faithful);
    let plane = cout * cin * taps;
    assert_eq!(w.len(), m * plane, "rotational weight size");
    let mut k = vec![0.0; 16 * plane];
    let rows = 4 * cin;
    let at = |o: usize, co: usize, i: usize, ci: usize, t: usize| ((o * cout + co) * rows + i * cin + ci) * taps + t;
    for co in 0..cout {
        for ci in 0..cin {
            for t in 0..taps {
                let p = (co * cin + ci) * taps + t;
                let q = [w[p], w[plane + p], w[2 * plane + p], w[3 * plane + p]];
                let (scale, couple) = if faithful { (1.0, 0.0) } else { (w[4 * plane + p], w[5 * plane + p]) };
                k[at(0, co, 0, ci, t)] = q[0];
                k[at(0, co, 1, ci, t)] = -q[1];
                k[at(0, co, 2, ci, t)] = -q[2];
                k[at(0, co, 3, ci, t)] = -q[3];
                let n = (q.iter().map(|v| v * v).sum::<f64>() + eps).sqrt();
                let r = if n > 0.0 {
                    rotation_matrix_unit([q[0] / n, q[1] / n, q[2] / n, q[3] / n])
                } else {
                    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
                };
                for row in 0..3 {
                    k[at(row + 1, co, 0, ci, t)] = couple;
                    for col in 0..3 {
                        k[at(row + 1, co, col + 1, ci, t)] = scale * r[row][col];
                    }
                }
            }
        }
    }
    k
}

pub fn assemble_rotational_kernel_backward(
    w: &[f64],
    cout: usize,
    cin: usize,
    taps: usize,
    eps: f64,
    faithful: bool,
    gk: &[f64],
) -> Vec<f64> {
    let m = rotational_tensors(faithful);
    let plane = cout * cin * taps;
    let mut gw = vec![0.0; m * plane];
    let rows = 4 * cin;
    let at = |o: usize, co: usize, i: usize, ci: usize, t: usize| ((o * cout + co) * rows + i * cin + ci) * taps + t;
    for co in 0..cout {
        for ci in 0..cin {
            for t in 0..taps {
                let p = (co * cin + ci) * taps + t;
                let q = [w[p], w[plane + p], w[2 * plane + p], w[3 * plane + p]];
                let scale = if faithful { 1.0 } else { w[4 * plane + p] };
                let mut gq = [
                    gk[at(0, co, 0, ci, t)],
                    -gk[at(0, co, 1, ci, t)],
                    -gk[at(0, co, 2, ci, t)],
                    -gk[at(0, co, 3, ci, t)],
                ];
                let n = (q.iter().map(|v| v * v).sum::<f64>() + eps).sqrt();
                let mut gr = [[0.0; 3]; 3];
                let mut gscale = 0.0;
                let mut gcouple = 0.0;
                if n > 0.0 {
                    let u = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
                    let r = rotation_matrix_unit(u);
                    for row in 0..3 {
                        gcouple += gk[at(row + 1, co, 0, ci, t)];
                        for col in 0..3 {
                            let g = gk[at(row + 1, co, col + 1, ci, t)];
                            gr[row][col] = scale * g;
                            gscale += r[row][col] * g;
                        }
                    }
                    let gu = rotation_matrix_unit_vjp(u, &gr);
                    let proj: f64 = gu.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>() / (n * n * n);
                    for i in 0..4 {
                        gq[i] += gu[i] / n - q[i] * proj;
                    }
                } else {
                    for row in 0..3 {
                        gcouple += gk[at(row + 1, co, 0, ci, t)];
                        gscale += gk[at(row + 1, co, row + 1, ci, t)];
                    }
                }
                for i in 0..4 {
                    gw[i * plane + p] = gq[i];
                }
                if !faithful {
                    gw[4 * plane + p] = gscale;
                    gw[5 * plane + p] = gcouple;
                }
            }
        }
    }
    gw
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::CL20_PRODUCT;

    #[test]
    fn one_by_one_is_channel_mix() {
        let g = ConvGeometry::new(&[2, 2], &[1, 1], Padding::Periodic, 1).unwrap();
        let x = [1.0, 2.0, 3.0, 4.0, 10.0, 20.0, 30.0, 40.0];
        let k = [1.0, 0.5];
        let y = conv_forward(&g, &x, 1, 2, &k, 1);
        assert_eq!(y, vec![6.0, 12.0, 18.0, 24.0]);
    }

    #[test]
    fn cross_correlation_orientation() {
        // y(o) = Σ_d x(o + d) k(d); a kernel with weight at d = +1 reads the right neighbour
        let g = ConvGeometry::new(&[1, 4], &[1, 3], Padding::Periodic, 1).unwrap();
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = conv_forward(&g, &x, 1, 1, &[0.0, 0.0, 1.0], 1);
        assert_eq!(y, vec![2.0, 3.0, 4.0, 1.0]);
        let gz = ConvGeometry::new(&[1, 4], &[1, 3], Padding::Zero, 1).unwrap();
        assert_eq!(conv_forward(&gz, &x, 1, 1, &[0.0, 0.0, 1.0], 1), vec![2.0, 3.0, 4.0, 0.0]);
    }

    #[test]
    fn stride_shrinks_output() {
        let g = ConvGeometry::new(&[5, 4], &[3, 3], Padding::Periodic, 2).unwrap();
        assert_eq!(g.out_dims(), &[3, 2]);
        assert!(ConvGeometry::new(&[4, 4], &[2, 3], Padding::Periodic, 1).is_err());
    }

    #[test]
    fn algorithm_one_matrix_layout() {
        let s = KernelShape { blades: 4, cout: 1, cin: 1, taps: 1 };
        let w = [1.0, 2.0, 3.0, 4.0];
        let k = assemble_clifford_kernel(&CL20_PRODUCT, s, &w);
        let expect = [
            1.0, 2.0, 3.0, -4.0, //
            2.0, 1.0, -4.0, 3.0, //
            3.0, 4.0, 1.0, -2.0, //
            4.0, 3.0, -2.0, 1.0,
        ];
        assert_eq!(k, expect);
    }

    #[test]
    fn algorithm_two_first_row() {
        let w = [0.5, 1.0, -2.0, 3.0, 1.0, 0.0];
        let k = assemble_rotational_kernel(&w, 1, 1, 1, 0.0, false);
        assert_eq!(&k[0..4], &[0.5, -1.0, 2.0, -3.0]);
    }
}
