//! Clifford convolutions, rotational convolutions, Clifford Fourier layers,
//! Clifford group normalisation, blade-wise GELU and initialisation.
//!
//! The field-level functions here are thin wrappers over the slice kernels in
//! the submodules, which the gradient tape reuses.

pub mod conv;
pub mod norm;
pub mod params;
pub mod spectral;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{product_table_2d, BladeTable, ProductTerm, Signature, QUAT_EPS};
use crate::error::{Error, Result};
use crate::fields::MultivectorField;
use crate::transforms::dual_pairs;

pub use conv::{
    assemble_clifford_kernel, assemble_clifford_kernel_backward, assemble_rotational_kernel,
    assemble_rotational_kernel_backward, conv_backward, conv_forward, rotational_tensors, ConvGeometry, KernelShape,
    Padding,
};
pub use norm::{groupnorm_backward, groupnorm_forward, NormSaved, NormSpec};
pub use params::{Dtype, ParamEntry, ParamManifest, ParamSet};
pub use spectral::{CliffordSpectralSpec, RealSpectralSpec, SpectralGeometry};

/// Default whitening regulariser.
pub const NORM_EPS: f64 = 1e-5;

/// Product terms of a signature: the specialised tables in 2D, the generic
/// table otherwise.
pub fn product_terms(signature: Signature) -> Vec<ProductTerm> {
    match product_table_2d(signature) {
        Ok(t) => t.to_vec(),
        Err(_) => BladeTable::new(signature).terms(),
    }
}

/// Multivector kernel `[blade][cout][cin][k...]` with an optional multivector bias `[blade][cout]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CliffordKernel {
    pub signature: Signature,
    pub cin: usize,
    pub cout: usize,
    pub kdims: Vec<usize>,
    pub weights: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

impl CliffordKernel {
    pub fn zeros(signature: Signature, cin: usize, cout: usize, kdims: &[usize]) -> Self {
        let taps: usize = kdims.iter().product();
        Self {
            signature,
            cin,
            cout,
            kdims: kdims.to_vec(),
            weights: vec![0.0; signature.blade_count() * cout * cin * taps],
            bias: None,
        }
    }

    pub fn taps(&self) -> usize {
        self.kdims.iter().product()
    }

    pub fn shape(&self) -> KernelShape {
        KernelShape {
            blades: self.signature.blade_count(),
            cout: self.cout,
            cin: self.cin,
            taps: self.taps(),
        }
    }

    /// Weight count, bias excluded.
    pub fn parameter_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weight_mut(&mut self, blade: usize, co: usize, ci: usize, tap: usize) -> &mut f64 {
        let t = self.taps();
        &mut self.weights[((blade * self.cout + co) * self.cin + ci) * t + tap]
    }

    fn validate(&self) -> Result<()> {
        if self.weights.len() != self.shape().weights_len() {
            return Err(Error::Shape("kernel weight length disagrees with its shape".into()));
        }
        if let Some(b) = &self.bias {
            if b.len() != self.signature.blade_count() * self.cout {
                return Err(Error::Shape("bias needs one multivector per output channel".into()));
            }
        }
        Ok(())
    }
}

/// Initialisation bound mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    #[default]
    Default,
    /// Bounds divided by 8.
    Scaled3d,
}

/// Uniform bound `sqrt(gain / fan_in)` with `fan_in = cin · taps`.
pub fn init_bound(cin: usize, taps: usize, gain: f64, mode: InitMode) -> f64 {
    let b = (gain / (cin * taps) as f64).sqrt();
    match mode {
        InitMode::Default => b,
        InitMode::Scaled3d => b / 8.0,
    }
}

/// Fills `n` values uniformly in `±bound` from a seeded stream.
pub fn uniform_fill(n: usize, bound: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if bound == 0.0 {
        return vec![0.0; n];
    }
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

/// Seeded kernel with every blade drawn from `U(−b, b)`.
pub fn init_clifford(
    signature: Signature,
    cin: usize,
    cout: usize,
    kdims: &[usize],
    mode: InitMode,
    gain: f64,
    seed: u64,
) -> CliffordKernel {
    let mut k = CliffordKernel::zeros(signature, cin, cout, kdims);
    let bound = init_bound(cin, k.taps(), gain, mode);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    k.weights = uniform_fill(k.weights.len(), bound, &mut rng);
    k
}

fn add_bias(y: &mut [f64], bias: &[f64], spatial: usize) {
    for (plane, &b) in y.chunks_mut(spatial).zip(bias) {
        plane.iter_mut().for_each(|v| *v += b);
    }
}

fn conv_field(
    f: &MultivectorField,
    real_kernel: &[f64],
    cout: usize,
    kdims: &[usize],
    bias: Option<&[f64]>,
    padding: Padding,
    stride: usize,
) -> Result<MultivectorField> {
    let nb = f.blades();
    let g = ConvGeometry::new(f.dims(), kdims, padding, stride)?;
    let mut y = conv_forward(&g, f.data(), 1, nb * f.channels(), real_kernel, nb * cout);
    if let Some(b) = bias {
        add_bias(&mut y, b, g.out_len());
    }
    MultivectorField::from_data(f.signature(), cout, g.out_dims(), y)
}

/// Clifford convolution with an explicit product table.
pub fn clifford_conv_with(
    terms: &[ProductTerm],
    f: &MultivectorField,
    k: &CliffordKernel,
    padding: Padding,
    stride: usize,
) -> Result<MultivectorField> {
    k.validate()?;
    if f.signature() != k.signature {
        return Err(Error::Invalid(format!(
            "field is {} but kernel is {}",
            f.signature(),
            k.signature
        )));
    }
    if f.channels() != k.cin {
        return Err(Error::Shape(format!("kernel expects {} input channels, field has {}", k.cin, f.channels())));
    }
    let real = assemble_clifford_kernel(terms, k.shape(), &k.weights);
    conv_field(f, &real, k.cout, &k.kdims, k.bias.as_deref(), padding, stride)
}

/// Two-dimensional Clifford convolution (Cl(2,0) or Cl(0,2)).
pub fn clifford_conv2d(f: &MultivectorField, k: &CliffordKernel, padding: Padding, stride: usize) -> Result<MultivectorField> {
    let table = product_table_2d(k.signature)?;
    if f.dims().len() != 2 {
        return Err(Error::Shape("clifford_conv2d needs a 2D grid".into()));
    }
    clifford_conv_with(table, f, k, padding, stride)
}

/// Three-dimensional Clifford convolution in Cl(3,0).
pub fn clifford_conv3d(f: &MultivectorField, k: &CliffordKernel, padding: Padding, stride: usize) -> Result<MultivectorField> {
    if k.signature != Signature::CL30 {
        return Err(Error::UnsupportedSignature { p: k.signature.p(), q: k.signature.q() });
    }
    if f.dims().len() != 3 {
        return Err(Error::Shape("clifford_conv3d needs a 3D grid".into()));
    }
    clifford_conv_with(&product_terms(Signature::CL30), f, k, padding, stride)
}

/// Parameters of the rotational layer: `[m][cout][cin][k...]`, `m` = 6 or 4.
#[derive(Clone, Debug, PartialEq)]
pub struct RotationalKernel {
    pub cin: usize,
    pub cout: usize,
    pub kdims: Vec<usize>,
    pub weights: Vec<f64>,
    pub epsilon: f64,
    /// Fixes `W4 = 1`, `W5 = 0`, leaving only the quaternion filter.
    pub faithful: bool,
}

impl RotationalKernel {
    pub fn zeros(cin: usize, cout: usize, kdims: &[usize], faithful: bool) -> Self {
        let taps: usize = kdims.iter().product();
        Self {
            cin,
            cout,
            kdims: kdims.to_vec(),
            weights: vec![0.0; rotational_tensors(faithful) * cout * cin * taps],
            epsilon: QUAT_EPS,
            faithful,
        }
    }

    pub fn taps(&self) -> usize {
        self.kdims.iter().product()
    }

    /// Mutable access to tensor `W[m]` at `(co, ci, tap)`.
    pub fn weight_mut(&mut self, m: usize, co: usize, ci: usize, tap: usize) -> &mut f64 {
        let plane = self.cout * self.cin * self.taps();
        let t = self.taps();
        &mut self.weights[m * plane + (co * self.cin + ci) * t + tap]
    }

    /// Real `[4·cout][4·cin][taps]` kernel.
    pub fn assemble(&self) -> Vec<f64> {
        assemble_rotational_kernel(&self.weights, self.cout, self.cin, self.taps(), self.epsilon, self.faithful)
    }
}

pub fn rotational_clifford_conv2d(
    f: &MultivectorField,
    k: &RotationalKernel,
    padding: Padding,
    stride: usize,
) -> Result<MultivectorField> {
    if f.blades() != 4 || f.dims().len() != 2 {
        return Err(Error::Shape("rotational convolution needs a four-blade 2D field".into()));
    }
    if f.channels() != k.cin {
        return Err(Error::Shape(format!("kernel expects {} input channels, field has {}", k.cin, f.channels())));
    }
    if k.weights.len() != rotational_tensors(k.faithful) * k.cout * k.cin * k.taps() {
        return Err(Error::Shape("rotational weight length disagrees with its shape".into()));
    }
    conv_field(f, &k.assemble(), k.cout, &k.kdims, None, padding, stride)
}

/// Per-mode multivector weights `[blade][cin][cout][mode]` for the retained corner blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralWeights {
    pub signature: Signature,
    pub cin: usize,
    pub cout: usize,
    pub modes: Vec<usize>,
    pub data: Vec<f64>,
}

impl SpectralWeights {
    pub fn retained(&self) -> usize {
        (1usize << self.modes.len()) * self.modes.iter().product::<usize>()
    }

    pub fn zeros(signature: Signature, cin: usize, cout: usize, modes: &[usize]) -> Self {
        let mut w = Self {
            signature,
            cin,
            cout,
            modes: modes.to_vec(),
            data: Vec::new(),
        };
        w.data = vec![0.0; signature.blade_count() * cin * cout * w.retained()];
        w
    }

    /// Scalar one on the channel diagonal at every retained mode.
    pub fn identity(signature: Signature, channels: usize, modes: &[usize]) -> Self {
        let mut w = Self::zeros(signature, channels, channels, modes);
        let r = w.retained();
        for c in 0..channels {
            let o = (c * channels + c) * r;
            w.data[o..o + r].iter_mut().for_each(|v| *v = 1.0);
        }
        w
    }

    pub fn random(signature: Signature, cin: usize, cout: usize, modes: &[usize], bound: f64, seed: u64) -> Self {
        let mut w = Self::zeros(signature, cin, cout, modes);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        w.data = uniform_fill(w.data.len(), bound, &mut rng);
        w
    }

    pub fn spec(&self, dims: &[usize], terms: Vec<ProductTerm>) -> Result<CliffordSpectralSpec> {
        let pairs = dual_pairs(self.signature)?.to_vec();
        let geometry = SpectralGeometry::corners(dims, &self.modes)?;
        let spec = CliffordSpectralSpec {
            geometry,
            blades: self.signature.blade_count(),
            cin: self.cin,
            cout: self.cout,
            terms,
            pairs,
        };
        if spec.weights_len() != self.data.len() {
            return Err(Error::Shape("spectral weight length disagrees with its modes".into()));
        }
        Ok(spec)
    }
}

/// Clifford Fourier layer with an explicit product table.
pub fn clifford_spectral_conv_with(
    terms: &[ProductTerm],
    f: &MultivectorField,
    w: &SpectralWeights,
) -> Result<MultivectorField> {
    if f.signature() != w.signature {
        return Err(Error::Invalid(format!("field is {} but weights are {}", f.signature(), w.signature)));
    }
    if f.channels() != w.cin {
        return Err(Error::Shape(format!("weights expect {} input channels, field has {}", w.cin, f.channels())));
    }
    let spec = w.spec(f.dims(), terms.to_vec())?;
    let (y, _) = spec.forward(f.data(), 1, &w.data);
    MultivectorField::from_data(f.signature(), w.cout, f.dims(), y)
}

pub fn clifford_spectral_conv2d(f: &MultivectorField, w: &SpectralWeights) -> Result<MultivectorField> {
    if w.signature != Signature::CL20 || f.dims().len() != 2 {
        return Err(Error::Invalid("2D Clifford Fourier layers act on Cl(2,0) fields over 2D grids".into()));
    }
    clifford_spectral_conv_with(&product_terms(Signature::CL20), f, w)
}

pub fn clifford_spectral_conv3d(f: &MultivectorField, w: &SpectralWeights) -> Result<MultivectorField> {
    if w.signature != Signature::CL30 || f.dims().len() != 3 {
        return Err(Error::Invalid("3D Clifford Fourier layers act on Cl(3,0) fields over 3D grids".into()));
    }
    clifford_spectral_conv_with(&product_terms(Signature::CL30), f, w)
}

/// Blade-wise activation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Gelu,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => gelu(x),
            Activation::Identity => x,
        }
    }
}

/// `x·Φ(x)` with the exact normal CDF.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

pub fn clifford_gelu(f: &MultivectorField) -> MultivectorField {
    let mut out = f.clone();
    out.data_mut().iter_mut().for_each(|v| *v = gelu(*v));
    out
}

/// `act(spectral(f) + conv1×1(f))`.
pub fn clifford_fourier_block(
    f: &MultivectorField,
    w_spectral: &SpectralWeights,
    w_conv: &CliffordKernel,
    activation: Activation,
) -> Result<MultivectorField> {
    if w_conv.kdims.iter().any(|&k| k != 1) {
        return Err(Error::Shape("the block's skip path is a 1×1 convolution".into()));
    }
    let terms = product_terms(f.signature());
    let s = clifford_spectral_conv_with(&terms, f, w_spectral)?;
    let c = clifford_conv_with(&terms, f, w_conv, Padding::Periodic, 1)?;
    let mut out = s.add(&c)?;
    out.data_mut().iter_mut().for_each(|v| *v = activation.apply(*v));
    Ok(out)
}

/// Affine parameters and running statistics of a Clifford normalisation.
#[derive(Clone, Debug, PartialEq)]
pub struct CliffordNormState {
    pub blades: usize,
    pub channels: usize,
    pub eps: f64,
    /// `[channel][nb][nb]`.
    pub gamma: Vec<f64>,
    /// `[channel][nb]`.
    pub beta: Vec<f64>,
    pub momentum: f64,
    /// `[group][nb]`, updated only by [`clifford_groupnorm_train`].
    pub running_mean: Vec<f64>,
    /// `[group][nb][nb]`.
    pub running_cov: Vec<f64>,
}

impl CliffordNormState {
    /// `γ = I`, `β = 0`, identity running covariance.
    pub fn new(blades: usize, channels: usize, groups: usize) -> Self {
        let mut gamma = vec![0.0; channels * blades * blades];
        for c in 0..channels {
            for k in 0..blades {
                gamma[(c * blades + k) * blades + k] = 1.0;
            }
        }
        let mut running_cov = vec![0.0; groups * blades * blades];
        for g in 0..groups {
            for k in 0..blades {
                running_cov[(g * blades + k) * blades + k] = 1.0;
            }
        }
        Self {
            blades,
            channels,
            eps: NORM_EPS,
            gamma,
            beta: vec![0.0; channels * blades],
            momentum: 0.1,
            running_mean: vec![0.0; groups * blades],
            running_cov,
        }
    }

    pub fn spec(&self, groups: usize) -> NormSpec {
        NormSpec {
            blades: self.blades,
            channels: self.channels,
            groups,
            eps: self.eps,
        }
    }
}

fn norm_checked(f: &MultivectorField, state: &CliffordNormState, groups: usize) -> Result<(Vec<f64>, NormSaved)> {
    if f.blades() != state.blades || f.channels() != state.channels {
        return Err(Error::Shape("normalisation state does not match the field".into()));
    }
    groupnorm_forward(&state.spec(groups), f.data(), 1, f.spatial_len(), &state.gamma, &state.beta)
}

/// Whitening per group of channels, then `γ`, `β`.
pub fn clifford_groupnorm(f: &MultivectorField, state: &CliffordNormState, groups: usize) -> Result<MultivectorField> {
    let (y, _) = norm_checked(f, state, groups)?;
    MultivectorField::from_data(f.signature(), f.channels(), f.dims(), y)
}

/// As [`clifford_groupnorm`], also blending this call's statistics into the running ones.
pub fn clifford_groupnorm_train(
    f: &MultivectorField,
    state: &mut CliffordNormState,
    groups: usize,
) -> Result<MultivectorField> {
    let (y, saved) = norm_checked(f, state, groups)?;
    let nb = state.blades;
    let m = state.momentum;
    if state.running_mean.len() != groups * nb {
        state.running_mean = vec![0.0; groups * nb];
        state.running_cov = vec![0.0; groups * nb * nb];
    }
    for (g, (mean, cov)) in saved.means().zip(saved.covariances()).enumerate() {
        for k in 0..nb {
            let r = &mut state.running_mean[g * nb + k];
            *r = (1.0 - m) * *r + m * mean[k];
        }
        for (r, v) in state.running_cov[g * nb * nb..(g + 1) * nb * nb].iter_mut().zip(&cov) {
            *r = (1.0 - m) * *r + m * v;
        }
    }
    MultivectorField::from_data(f.signature(), f.channels(), f.dims(), y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_examples() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(10.0) - 10.0).abs() < 1e-12);
        assert!(gelu(-10.0).abs() < 1e-12);
        assert!((gelu(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
    }

    #[test]
    fn scaled3d_bound() {
        let b = init_bound(8, 27, 1.0, InitMode::Default);
        assert_eq!(init_bound(8, 27, 1.0, InitMode::Scaled3d), b / 8.0);
        let k1 = init_clifford(Signature::CL30, 2, 3, &[3, 3, 3], InitMode::Scaled3d, 1.0, 9);
        let k2 = init_clifford(Signature::CL30, 2, 3, &[3, 3, 3], InitMode::Scaled3d, 1.0, 9);
        assert_eq!(k1, k2);
    }

    #[test]
    fn conv_parameter_count() {
        let k = CliffordKernel::zeros(Signature::CL20, 3, 5, &[3, 3]);
        assert_eq!(k.parameter_count(), 4 * 5 * 3 * 9);
    }

    #[test]
    fn running_stats_move_only_in_training_calls() {
        let f = MultivectorField::from_data(Signature::CL20, 2, &[2, 2], (0..32).map(|i| (i as f64 * 0.37).sin()).collect())
            .unwrap();
        let mut st = CliffordNormState::new(4, 2, 1);
        let before = st.clone();
        clifford_groupnorm(&f, &st, 1).unwrap();
        assert_eq!(st, before);
        clifford_groupnorm_train(&f, &mut st, 1).unwrap();
        assert_ne!(st.running_mean, before.running_mean);
    }
}
