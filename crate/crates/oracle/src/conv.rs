//! Literal Clifford cross-correlation.

use crate::blades::{oracle_gp_with, SymbolicBladeProduct};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Periodic,
    Zero,
}

fn unravel(mut idx: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for a in (0..dims.len()).rev() {
        out[a] = idx % dims[a];
        idx /= dims[a];
    }
    out
}

fn ravel(pos: &[usize], dims: &[usize]) -> usize {
    pos.iter().zip(dims).fold(0, |acc, (&p, &d)| acc * d + p)
}

/// `out[i](x) = Σ_j Σ_d f[j](x + d) · w[i][j](d)` with the geometric product
/// of signature `(p, q)`, stride 1, output the same size as the input.
///
/// Layouts: `f` is `[blade][c_in][dims]`, `w` is
/// `[blade][c_out][c_in][kdims]` with odd extents centred on the tap
/// `kdims / 2`. Returns `[blade][c_out][dims]`.
#[allow(clippy::too_many_arguments)]
pub fn oracle_conv(
    p: usize,
    q: usize,
    f: &[f64],
    c_in: usize,
    dims: &[usize],
    w: &[f64],
    c_out: usize,
    kdims: &[usize],
    padding: Padding,
) -> Vec<f64> {
    let table = SymbolicBladeProduct::new(p, q);
    let nb = table.blades.len();
    let npix: usize = dims.iter().product();
    let ntap: usize = kdims.iter().product();
    assert_eq!(f.len(), nb * c_in * npix);
    assert_eq!(w.len(), nb * c_out * c_in * ntap);
    let mut out = vec![0.0; nb * c_out * npix];
    let mut fv = vec![0.0; nb];
    let mut wv = vec![0.0; nb];
    for x in 0..npix {
        let xpos = unravel(x, dims);
        for i in 0..c_out {
            let mut acc = vec![0.0; nb];
            for j in 0..c_in {
                for t in 0..ntap {
                    let tpos = unravel(t, kdims);
                    let mut src = vec![0usize; dims.len()];
                    let mut inside = true;
                    for a in 0..dims.len() {
                        let off = tpos[a] as isize - (kdims[a] / 2) as isize;
                        let s = xpos[a] as isize + off;
                        if s < 0 || s >= dims[a] as isize {
                            match padding {
                                Padding::Periodic => {
                                    src[a] = s.rem_euclid(dims[a] as isize) as usize
                                }
                                Padding::Zero => inside = false,
                            }
                        } else {
                            src[a] = s as usize;
                        }
                    }
                    if !inside {
                        continue;
                    }
                    let y = ravel(&src, dims);
                    for b in 0..nb {
                        fv[b] = f[(b * c_in + j) * npix + y];
                        wv[b] = w[((b * c_out + i) * c_in + j) * ntap + t];
                    }
                    let prod = oracle_gp_with(&table, &fv, &wv);
                    for b in 0..nb {
                        acc[b] += prod[b];
                    }
                }
            }
            for b in 0..nb {
                out[(b * c_out + i) * npix + x] = acc[b];
            }
        }
    }
    out
}
