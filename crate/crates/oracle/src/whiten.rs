//! Covariance and inverse matrix square root without eigendecomposition.

/// Population covariance of `samples` (each of length `d`).
pub fn covariance(samples: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = samples.len() as f64;
    let d = samples[0].len();
    let mut mean = vec![0.0; d];
    for s in samples {
        for k in 0..d {
            mean[k] += s[k] / n;
        }
    }
    let mut cov = vec![vec![0.0; d]; d];
    for s in samples {
        for a in 0..d {
            for b in 0..d {
                cov[a][b] += (s[a] - mean[a]) * (s[b] - mean[b]) / n;
            }
        }
    }
    cov
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = a.len();
    let mut c = vec![vec![0.0; d]; d];
    for i in 0..d {
        for k in 0..d {
            for j in 0..d {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

fn inverse(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for col in 0..d {
        let piv = (col..d)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        a.swap(col, piv);
        inv.swap(col, piv);
        let p = a[col][col];
        for j in 0..d {
            a[col][j] /= p;
            inv[col][j] /= p;
        }
        for r in 0..d {
            if r != col {
                let f = a[r][col];
                for j in 0..d {
                    a[r][j] -= f * a[col][j];
                    inv[r][j] -= f * inv[col][j];
                }
            }
        }
    }
    inv
}

/// `M^{-1/2}` of a symmetric positive-definite matrix via the Denman–Beavers
/// iteration (`Z_k → M^{-1/2}`).
pub fn inv_sqrt_spd(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = m.len();
    let mut y: Vec<Vec<f64>> = m.to_vec();
    let mut z: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _ in 0..100 {
        let yi = inverse(&y);
        let zi = inverse(&z);
        let mut delta = 0.0f64;
        let mut ny = vec![vec![0.0; d]; d];
        let mut nz = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..d {
                ny[i][j] = 0.5 * (y[i][j] + zi[i][j]);
                nz[i][j] = 0.5 * (z[i][j] + yi[i][j]);
                delta = delta.max((nz[i][j] - z[i][j]).abs());
            }
        }
        y = ny;
        z = nz;
        if delta < 1e-15 {
            break;
        }
    }
    // one Newton polish step: Z ← Z (3I − M Z²) / 2
    let z2 = matmul(&z, &z);
    let mz2 = matmul(m, &z2);
    let mut corr = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            corr[i][j] = -mz2[i][j] + if i == j { 3.0 } else { 0.0 };
        }
    }
    let mut out = matmul(&z, &corr);
    for row in out.iter_mut() {
        for v in row.iter_mut() {
            *v *= 0.5;
        }
    }
    out
}
