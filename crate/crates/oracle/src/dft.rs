//! Direct-sum discrete Fourier transform.

use std::f64::consts::PI;

/// Multidimensional DFT by the defining sum over all grid points.
///
/// Forward uses `exp(-2πi Σ m_k ξ_k / M_k)` and no normalisation; inverse
/// uses the opposite sign and divides by the number of grid points.
/// `re`/`im` hold one grid in row-major order.
pub fn oracle_dft(re: &[f64], im: &[f64], dims: &[usize], inverse: bool) -> (Vec<f64>, Vec<f64>) {
    let n: usize = dims.iter().product();
    assert_eq!(re.len(), n);
    assert_eq!(im.len(), n);
    let sign = if inverse { 1.0 } else { -1.0 };
    let unravel = |mut idx: usize| {
        let mut pos = vec![0usize; dims.len()];
        for a in (0..dims.len()).rev() {
            pos[a] = idx % dims[a];
            idx /= dims[a];
        }
        pos
    };
    let positions: Vec<Vec<usize>> = (0..n).map(unravel).collect();
    let mut out_re = vec![0.0; n];
    let mut out_im = vec![0.0; n];
    for (k, xi) in positions.iter().enumerate() {
        let mut sr = 0.0;
        let mut si = 0.0;
        for (m, pos) in positions.iter().enumerate() {
            let mut phase = 0.0;
            for a in 0..dims.len() {
                // reduce the integer product first to keep the angle small
                let prod = (pos[a] * xi[a]) % dims[a];
                phase += prod as f64 / dims[a] as f64;
            }
            let ang = sign * 2.0 * PI * phase;
            let (s, c) = ang.sin_cos();
            sr += re[m] * c - im[m] * s;
            si += re[m] * s + im[m] * c;
        }
        out_re[k] = sr;
        out_im[k] = si;
    }
    if inverse {
        let scale = 1.0 / n as f64;
        out_re.iter_mut().for_each(|v| *v *= scale);
        out_im.iter_mut().for_each(|v| *v *= scale);
    }
    (out_re, out_im)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn impulse_is_flat() {
        let mut re = vec![0.0; 12];
        re[0] = 1.0;
        let im = vec![0.0; 12];
        let (r, i) = oracle_dft(&re, &im, &[3, 4], false);
        assert!(r.iter().all(|v| (v - 1.0).abs() < 1e-14));
        assert!(i.iter().all(|v| v.abs() < 1e-14));
    }
}
