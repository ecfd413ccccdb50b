//! Group normalisation with blade whitening.
//!
//! Within every (sample, group), the blade vectors `v_p ∈ ℝ^nb` collected over
//! channels and grid points are centred and multiplied by `V^{-1/2}`, where the
//! eigenvalues of the population covariance `V` are clamped at `eps`. With a
//! single blade this is ordinary group normalisation.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormSpec {
    pub blades: usize,
    pub channels: usize,
    pub groups: usize,
    pub eps: f64,
}

impl NormSpec {
    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 || self.channels % self.groups != 0 {
            return Err(Error::Shape(format!(
                "{} channels not divisible into {} groups",
                self.channels, self.groups
            )));
        }
        Ok(())
    }

    pub fn gamma_len(&self) -> usize {
        self.channels * self.blades * self.blades
    }

    pub fn beta_len(&self) -> usize {
        self.channels * self.blades
    }
}

#[derive(Clone, Debug)]
struct GroupStats {
    mean: Vec<f64>,
    /// Eigenvectors as columns, row-major `nb × nb`.
    u: Vec<f64>,
    lambda: Vec<f64>,
    w: Vec<f64>,
}

/// Per-call statistics kept for the backward pass.
#[derive(Clone, Debug)]
pub struct NormSaved {
    /// Whitened activations before `γ`, `β`.
    pub whitened: Vec<f64>,
    stats: Vec<GroupStats>,
}

impl NormSaved {
    /// Mean and covariance of the `(sample, group)` statistics, in call order.
    pub fn means(&self) -> impl Iterator<Item = &[f64]> {
        self.stats.iter().map(|s| s.mean.as_slice())
    }

    pub fn covariances(&self) -> Vec<Vec<f64>> {
        self.stats
            .iter()
            .map(|s| {
                let nb = s.lambda.len();
                let mut v = vec![0.0; nb * nb];
                for i in 0..nb {
                    for j in 0..nb {
                        v[i * nb + j] = (0..nb).map(|k| s.u[i * nb + k] * s.lambda[k] * s.u[j * nb + k]).sum();
                    }
                }
                v
            })
            .collect()
    }
}

fn clamp_isqrt(l: f64, eps: f64) -> f64 {
    l.max(eps).powf(-0.5)
}

/// Divided difference of `λ ↦ max(λ, eps)^{-1/2}`.
fn divided(a: f64, b: f64, eps: f64) -> f64 {
    let (ca, cb) = (a > eps, b > eps);
    match (ca, cb) {
        (false, false) => 0.0,
        (true, true) => {
            let (sa, sb) = (a.sqrt(), b.sqrt());
            -1.0 / (sa * sb * (sa + sb))
        }
        _ => {
            if a == b {
                0.0
            } else {
                (clamp_isqrt(a, eps) - clamp_isqrt(b, eps)) / (a - b)
            }
        }
    }
}

#[inline]
fn idx(spec: &NormSpec, s_len: usize, b: usize, k: usize, c: usize) -> usize {
    ((b * spec.blades + k) * spec.channels + c) * s_len
}

/// `x: [batch][nb][channels][spatial]`, `gamma: [channels][nb][nb]`, `beta: [channels][nb]`.
pub fn groupnorm_forward(
    spec: &NormSpec,
    x: &[f64],
    batch: usize,
    spatial: usize,
    gamma: &[f64],
    beta: &[f64],
) -> Result<(Vec<f64>, NormSaved)> {
    spec.validate()?;
    let nb = spec.blades;
    let cg = spec.channels / spec.groups;
    assert_eq!(x.len(), batch * nb * spec.channels * spatial, "norm input size");
    assert_eq!(gamma.len(), spec.gamma_len());
    assert_eq!(beta.len(), spec.beta_len());
    let n = (cg * spatial) as f64;
    let mut whitened = vec![0.0; x.len()];
    let mut stats = Vec::with_capacity(batch * spec.groups);
    for b in 0..batch {
        for g in 0..spec.groups {
            let chans = g * cg..(g + 1) * cg;
            let mut mean = vec![0.0; nb];
            for k in 0..nb {
                for c in chans.clone() {
                    let o = idx(spec, spatial, b, k, c);
                    mean[k] += x[o..o + spatial].iter().sum::<f64>();
                }
                mean[k] /= n;
            }
            let mut v = vec![0.0; nb * nb];
            for c in chans.clone() {
                for s in 0..spatial {
                    for k in 0..nb {
                        let dk = x[idx(spec, spatial, b, k, c) + s] - mean[k];
                        for l in k..nb {
                            v[k * nb + l] += dk * (x[idx(spec, spatial, b, l, c) + s] - mean[l]);
                        }
                    }
                }
            }
            for k in 0..nb {
                for l in k..nb {
                    v[k * nb + l] /= n;
                    v[l * nb + k] = v[k * nb + l];
                }
            }
            let eig = SymmetricEigen::new(DMatrix::from_row_slice(nb, nb, &v));
            let lambda: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            let scale = lambda.iter().fold(1.0f64, |m, l| m.max(l.abs()));
            let min = lambda.iter().copied().fold(f64::INFINITY, f64::min);
            if !min.is_finite() || min < -1e-9 * scale {
                return Err(Error::NonPsdCovariance(min));
            }
            let mut u = vec![0.0; nb * nb];
            for i in 0..nb {
                for j in 0..nb {
                    u[i * nb + j] = eig.eigenvectors[(i, j)];
                }
            }
            let f: Vec<f64> = lambda.iter().map(|&l| clamp_isqrt(l, spec.eps)).collect();
            let mut w = vec![0.0; nb * nb];
            for i in 0..nb {
                for j in 0..nb {
                    w[i * nb + j] = (0..nb).map(|k| u[i * nb + k] * f[k] * u[j * nb + k]).sum();
                }
            }
            let mut d = vec![0.0; nb];
            for c in chans {
                for s in 0..spatial {
                    for k in 0..nb {
                        d[k] = x[idx(spec, spatial, b, k, c) + s] - mean[k];
                    }
                    for k in 0..nb {
                        whitened[idx(spec, spatial, b, k, c) + s] = (0..nb).map(|l| w[k * nb + l] * d[l]).sum();
                    }
                }
            }
            stats.push(GroupStats { mean, u, lambda, w });
        }
    }
    let mut y = vec![0.0; x.len()];
    for b in 0..batch {
        for c in 0..spec.channels {
            for k in 0..nb {
                let o = idx(spec, spatial, b, k, c);
                let bias = beta[c * nb + k];
                y[o..o + spatial].iter_mut().for_each(|v| *v = bias);
                for l in 0..nb {
                    let gkl = gamma[(c * nb + k) * nb + l];
                    if gkl == 0.0 {
                        continue;
                    }
                    let src = idx(spec, spatial, b, l, c);
                    for s in 0..spatial {
                        y[o + s] += gkl * whitened[src + s];
                    }
                }
            }
        }
    }
    Ok((y, NormSaved { whitened, stats }))
}

/// `(∂L/∂x, ∂L/∂γ, ∂L/∂β)`.
pub fn groupnorm_backward(
    spec: &NormSpec,
    saved: &NormSaved,
    x: &[f64],
    batch: usize,
    spatial: usize,
    gamma: &[f64],
    gy: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let nb = spec.blades;
    let cg = spec.channels / spec.groups;
    let n = (cg * spatial) as f64;
    let mut ggamma = vec![0.0; gamma.len()];
    let mut gbeta = vec![0.0; spec.beta_len()];
    let mut gxt = vec![0.0; x.len()];
    for b in 0..batch {
        for c in 0..spec.channels {
            for k in 0..nb {
                let o = idx(spec, spatial, b, k, c);
                let gys = &gy[o..o + spatial];
                gbeta[c * nb + k] += gys.iter().sum::<f64>();
                for l in 0..nb {
                    let src = idx(spec, spatial, b, l, c);
                    let xt = &saved.whitened[src..src + spatial];
                    ggamma[(c * nb + k) * nb + l] += gys.iter().zip(xt).map(|(p, q)| p * q).sum::<f64>();
                    let gkl = gamma[(c * nb + k) * nb + l];
                    for s in 0..spatial {
                        gxt[src + s] += gkl * gys[s];
                    }
                }
            }
        }
    }
    let mut gx = vec![0.0; x.len()];
    let mut d = vec![0.0; nb];
    let mut gd = vec![0.0; nb];
    for b in 0..batch {
        for g in 0..spec.groups {
            let st = &saved.stats[b * spec.groups + g];
            let chans = g * cg..(g + 1) * cg;
            let mut gw = vec![0.0; nb * nb];
            for c in chans.clone() {
                for s in 0..spatial {
                    for k in 0..nb {
                        d[k] = x[idx(spec, spatial, b, k, c) + s] - st.mean[k];
                    }
                    for k in 0..nb {
                        let gk = gxt[idx(spec, spatial, b, k, c) + s];
                        for l in 0..nb {
                            gw[k * nb + l] += gk * d[l];
                        }
                    }
                }
            }
            // Daleckii–Krein: gV = U (F ∘ Uᵀ gW U) Uᵀ
            let u = &st.u;
            let mut m = vec![0.0; nb * nb];
            for i in 0..nb {
                for j in 0..nb {
                    let mut acc = 0.0;
                    for p in 0..nb {
                        for q in 0..nb {
                            acc += u[p * nb + i] * gw[p * nb + q] * u[q * nb + j];
                        }
                    }
                    let fij = if i == j || st.lambda[i] == st.lambda[j] {
                        let l = st.lambda[i];
                        if l > spec.eps {
                            -0.5 * l.powf(-1.5)
                        } else {
                            0.0
                        }
                    } else {
                        divided(st.lambda[i], st.lambda[j], spec.eps)
                    };
                    m[i * nb + j] = acc * fij;
                }
            }
            let mut gv = vec![0.0; nb * nb];
            for p in 0..nb {
                for q in 0..nb {
                    let mut acc = 0.0;
                    for i in 0..nb {
                        for j in 0..nb {
                            acc += u[p * nb + i] * m[i * nb + j] * u[q * nb + j];
                        }
                    }
                    gv[p * nb + q] = acc;
                }
            }
            let mut sym = vec![0.0; nb * nb];
            for p in 0..nb {
                for q in 0..nb {
                    sym[p * nb + q] = (gv[p * nb + q] + gv[q * nb + p]) / n;
                }
            }
            let mut gsum = vec![0.0; nb];
            for c in chans.clone() {
                for s in 0..spatial {
                    for k in 0..nb {
                        d[k] = x[idx(spec, spatial, b, k, c) + s] - st.mean[k];
                    }
                    for k in 0..nb {
                        let mut acc = 0.0;
                        for l in 0..nb {
                            acc += st.w[k * nb + l] * gxt[idx(spec, spatial, b, l, c) + s];
                            acc += sym[k * nb + l] * d[l];
                        }
                        gd[k] = acc;
                        gsum[k] += acc;
                        gx[idx(spec, spatial, b, k, c) + s] = acc;
                    }
                }
            }
            for k in 0..nb {
                let mean = gsum[k] / n;
                for c in chans.clone() {
                    let o = idx(spec, spatial, b, k, c);
                    gx[o..o + spatial].iter_mut().for_each(|v| *v -= mean);
                }
            }
        }
    }
    (gx, ggamma, gbeta)
}
