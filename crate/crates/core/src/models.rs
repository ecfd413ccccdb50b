//! Surrogate assemblies (Clifford and real ResNets and FNOs), the SMSE loss,
//! rollouts, and the Adam training loop with checkpoints.
//!
//! A sample is a history of `t` frames `[blade][channel][grid]`; the model
//! predicts the next frame. Clifford families stack the history along the
//! channel axis inside every blade; real baselines see the mapped blades as
//! plain channels.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{Blade, ProductTerm, Signature, QUAT_EPS};
use crate::autodiff::{Tape, Var};
use crate::datagen::TrajectorySet;
use crate::error::{Error, Result};
use crate::layers::{
    init_bound, product_terms, rotational_tensors, uniform_fill, ConvGeometry, CliffordSpectralSpec, Dtype, InitMode,
    KernelShape, NormSpec, Padding, ParamManifest, ParamSet, RealSpectralSpec, SpectralGeometry, NORM_EPS,
};
use crate::transforms::dual_pairs;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Resnet,
    Cresnet,
    CresnetRot,
    Fno,
    Cfno,
}

impl Family {
    pub fn is_clifford(self) -> bool {
        matches!(self, Family::Cresnet | Family::CresnetRot | Family::Cfno)
    }

    pub fn is_fourier(self) -> bool {
        matches!(self, Family::Fno | Family::Cfno)
    }

    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Invalid(format!("unknown model family {s}")))
    }
}

/// Architecture of a surrogate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub family: Family,
    pub signature: (u8, u8),
    pub dims: Vec<usize>,
    pub blocks: usize,
    /// Hidden width: multivector channels for Clifford families, real channels otherwise.
    pub channels: usize,
    /// Retained modes per axis (Fourier families).
    pub modes: Vec<usize>,
    pub history: usize,
    /// Spatial kernel extent of the residual blocks.
    pub kernel: usize,
    pub norm_groups: usize,
    /// Channels per blade in the data.
    pub data_channels: usize,
    /// Blades that carry data; the rest are kept at zero.
    pub mapped_blades: Vec<usize>,
    pub init: InitMode,
}

impl SurrogateConfig {
    /// Desk-scale defaults: 2D uses 4 blocks, 16 multivector channels and 8
    /// modes; 3D uses 2 blocks, 8 channels and 4 modes. Real baselines get
    /// twice the channels.
    pub fn desk(family: Family, signature: Signature, dims: &[usize], mapped_blades: Vec<usize>) -> Self {
        let three = dims.len() == 3;
        let (blocks, mv, m) = if three { (2, 8, 4) } else { (4, 16, 8) };
        let channels = if family.is_clifford() { mv } else { 2 * mv };
        let modes = dims.iter().map(|&d| m.min(d / 2)).collect();
        Self {
            family,
            signature: (signature.p(), signature.q()),
            dims: dims.to_vec(),
            blocks,
            channels,
            modes,
            history: 2,
            kernel: 3,
            norm_groups: 1,
            data_channels: 1,
            mapped_blades,
            init: if three && family.is_clifford() { InitMode::Scaled3d } else { InitMode::Default },
        }
    }

    pub fn signature(&self) -> Result<Signature> {
        Signature::new(self.signature.0, self.signature.1)
    }

    pub fn spatial_len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn frame_len(&self) -> Result<usize> {
        Ok(self.signature()?.blade_count() * self.data_channels * self.spatial_len())
    }

    pub fn validate(&self) -> Result<()> {
        let sig = self.signature()?;
        let nb = sig.blade_count();
        if self.dims.len() != sig.dim() as usize {
            return Err(Error::Shape(format!("{sig} needs a {}-D grid", sig.dim())));
        }
        if self.blocks == 0 || self.channels == 0 || self.history == 0 || self.data_channels == 0 {
            return Err(Error::Invalid("blocks, channels, history and data channels must be positive".into()));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Invalid("kernel extent must be odd".into()));
        }
        if self.mapped_blades.is_empty() || self.mapped_blades.iter().any(|&b| b >= nb) {
            return Err(Error::Invalid("mapped blades must be non-empty and within the algebra".into()));
        }
        if self.family == Family::CresnetRot && nb != 4 {
            return Err(Error::UnsupportedSignature { p: sig.p(), q: sig.q() });
        }
        if self.family.is_fourier() && self.modes.len() != self.dims.len() {
            return Err(Error::Shape("one mode cutoff per axis".into()));
        }
        if self.channels % self.norm_groups != 0 {
            return Err(Error::Invalid("channels must divide into norm groups".into()));
        }
        Ok(())
    }

    /// Blades the model computes with: the algebra's for Clifford families, one otherwise.
    fn model_blades(&self) -> usize {
        if self.family.is_clifford() {
            self.signature().map(|s| s.blade_count()).unwrap_or(1)
        } else {
            1
        }
    }

    fn in_channels(&self) -> usize {
        if self.family.is_clifford() {
            self.history * self.data_channels
        } else {
            self.history * self.mapped_blades.len() * self.data_channels
        }
    }

    fn out_channels(&self) -> usize {
        if self.family.is_clifford() {
            self.data_channels
        } else {
            self.mapped_blades.len() * self.data_channels
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvP {
    w: usize,
    b: usize,
    cin: usize,
    cout: usize,
    wide: bool,
}

#[derive(Clone, Copy, Debug)]
struct NormP {
    gamma: usize,
    beta: usize,
}

#[derive(Clone, Copy, Debug)]
enum BlockP {
    Residual { c0: ConvP, n0: NormP, c1: ConvP, n1: NormP },
    Fourier { spectral: usize, skip: ConvP },
}

#[derive(Clone, Debug)]
struct Plan {
    nb: usize,
    terms: Arc<[ProductTerm]>,
    point: Arc<ConvGeometry>,
    wide: Arc<ConvGeometry>,
    taps: usize,
    clifford_spectral: Option<Arc<CliffordSpectralSpec>>,
    real_spectral: Option<Arc<RealSpectralSpec>>,
    lift: [ConvP; 2],
    blocks: Vec<BlockP>,
    proj: [ConvP; 2],
}

/// A surrogate with its parameters.
#[derive(Clone, Debug)]
pub struct Surrogate {
    pub config: SurrogateConfig,
    pub params: ParamSet,
    plan: Plan,
}

struct Init<'a> {
    cfg: &'a SurrogateConfig,
    params: ParamSet,
    rng: ChaCha8Rng,
    nb: usize,
    taps: usize,
}

impl Init<'_> {
    fn conv(&mut self, name: &str, cin: usize, cout: usize, wide: bool) -> ConvP {
        let taps = if wide { self.taps } else { 1 };
        let bound = init_bound(cin, taps, 1.0, self.cfg.init);
        let tensors = if self.cfg.family == Family::CresnetRot { rotational_tensors(false) } else { self.nb };
        let w = uniform_fill(tensors * cout * cin * taps, bound, &mut self.rng);
        let b = uniform_fill(self.nb * cout, bound, &mut self.rng);
        let mut kdims = vec![tensors, cout, cin];
        kdims.extend(std::iter::repeat(if wide { self.cfg.kernel } else { 1 }).take(self.cfg.dims.len()));
        let w = self.params.push(format!("{name}.weight"), kdims, w);
        let b = self.params.push(format!("{name}.bias"), vec![self.nb, cout], b);
        ConvP { w, b, cin, cout, wide }
    }

    fn norm(&mut self, name: &str, c: usize) -> NormP {
        let nb = self.nb;
        let mut gamma = vec![0.0; c * nb * nb];
        for ch in 0..c {
            for k in 0..nb {
                gamma[(ch * nb + k) * nb + k] = 1.0;
            }
        }
        let gamma = self.params.push(format!("{name}.gamma"), vec![c, nb, nb], gamma);
        let beta = self.params.push(format!("{name}.beta"), vec![c, nb], vec![0.0; c * nb]);
        NormP { gamma, beta }
    }

    fn spectral(&mut self, name: &str, c: usize, retained: usize, complex: bool) -> usize {
        let lead = if complex { 2 } else { self.nb };
        let scale = 1.0 / (c * c) as f64;
        let data = (0..lead * c * c * retained).map(|_| scale * self.rng.gen::<f64>()).collect();
        self.params.push(format!("{name}.weight"), vec![lead, c, c, retained], data)
    }
}

impl Surrogate {
    pub fn new(config: SurrogateConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let sig = config.signature()?;
        let nb = config.model_blades();
        let terms: Arc<[ProductTerm]> = if config.family.is_clifford() {
            product_terms(sig).into()
        } else {
            vec![ProductTerm { lhs: 0, rhs: 0, out: 0, sign: 1.0 }].into()
        };
        let d = config.dims.len();
        let point = Arc::new(ConvGeometry::new(&config.dims, &vec![1; d], Padding::Periodic, 1)?);
        let wide = Arc::new(ConvGeometry::new(&config.dims, &vec![config.kernel; d], Padding::Periodic, 1)?);
        let c = config.channels;
        let (clifford_spectral, real_spectral) = match config.family {
            Family::Cfno => (
                Some(Arc::new(CliffordSpectralSpec {
                    geometry: SpectralGeometry::corners(&config.dims, &config.modes)?,
                    blades: nb,
                    cin: c,
                    cout: c,
                    terms: terms.to_vec(),
                    pairs: dual_pairs(sig)?.to_vec(),
                })),
                None,
            ),
            Family::Fno => (
                None,
                Some(Arc::new(RealSpectralSpec {
                    geometry: SpectralGeometry::half(&config.dims, &config.modes)?,
                    cin: c,
                    cout: c,
                })),
            ),
            _ => (None, None),
        };
        let mut init = Init {
            cfg: &config,
            params: ParamSet::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            nb,
            taps: wide.taps(),
        };
        let lift = [
            init.conv("lift.0", config.in_channels(), c, false),
            init.conv("lift.1", c, c, false),
        ];
        let mut blocks = Vec::with_capacity(config.blocks);
        for i in 0..config.blocks {
            let name = format!("block.{i}");
            blocks.push(if config.family.is_fourier() {
                let (retained, complex) = match (&clifford_spectral, &real_spectral) {
                    (Some(s), _) => (s.geometry.len(), false),
                    (_, Some(s)) => (s.geometry.len(), true),
                    _ => unreachable!(),
                };
                BlockP::Fourier {
                    spectral: init.spectral(&format!("{name}.spectral"), c, retained, complex),
                    skip: init.conv(&format!("{name}.skip"), c, c, false),
                }
            } else {
                BlockP::Residual {
                    c0: init.conv(&format!("{name}.conv0"), c, c, true),
                    n0: init.norm(&format!("{name}.norm0"), c),
                    c1: init.conv(&format!("{name}.conv1"), c, c, true),
                    n1: init.norm(&format!("{name}.norm1"), c),
                }
            });
        }
        let proj = [
            init.conv("proj.0", c, c, false),
            init.conv("proj.1", c, config.out_channels(), false),
        ];
        let taps = init.taps;
        let params = init.params;
        Ok(Self {
            plan: Plan {
                nb,
                terms,
                point,
                wide,
                taps,
                clifford_spectral,
                real_spectral,
                lift,
                blocks,
                proj,
            },
            config,
            params,
        })
    }

    /// Rebuilds a surrogate from a configuration and saved parameters.
    pub fn with_params(config: SurrogateConfig, params: ParamSet) -> Result<Self> {
        let mut s = Self::new(config, 0)?;
        if s.params.len() != params.len()
            || (0..params.len()).any(|i| s.params.name(i) != params.name(i) || s.params.shape(i) != params.shape(i))
        {
            return Err(Error::HeaderMismatch("parameters do not match the model configuration".into()));
        }
        s.params = params;
        Ok(s)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.count()
    }

    pub fn manifest(&self) -> Result<ParamManifest> {
        let sig = self.config.signature()?;
        Ok(self.params.manifest(self.config.family.is_clifford().then_some(sig), Dtype::F64))
    }

    fn conv(&self, t: &mut Tape, p: &[Var], c: ConvP, x: Var, batch: usize) -> Result<Var> {
        let nb = self.plan.nb;
        let (g, taps) = if c.wide {
            (&self.plan.wide, self.plan.taps)
        } else {
            (&self.plan.point, 1)
        };
        let k = if self.config.family == Family::CresnetRot {
            t.rotational_kernel(p[c.w], c.cout, c.cin, taps, QUAT_EPS, false)?
        } else {
            let shape = KernelShape { blades: nb, cout: c.cout, cin: c.cin, taps };
            t.clifford_kernel(p[c.w], self.plan.terms.clone(), shape)?
        };
        let y = t.conv(x, k, g.clone(), batch, nb * c.cin, nb * c.cout)?;
        t.add_bias(y, p[c.b], g.out_len())
    }

    fn norm(&self, t: &mut Tape, p: &[Var], n: NormP, x: Var, batch: usize) -> Result<Var> {
        let spec = NormSpec {
            blades: self.plan.nb,
            channels: self.config.channels,
            groups: self.config.norm_groups,
            eps: NORM_EPS,
        };
        t.group_norm(x, p[n.gamma], p[n.beta], spec, batch, self.config.spatial_len())
    }

    /// Records the forward pass; `x` is a batch in the model input layout.
    pub fn forward(&self, t: &mut Tape, p: &[Var], x: Var, batch: usize) -> Result<Var> {
        let mut h = self.conv(t, p, self.plan.lift[0], x, batch)?;
        h = t.gelu(h);
        h = self.conv(t, p, self.plan.lift[1], h, batch)?;
        for block in &self.plan.blocks {
            h = match *block {
                BlockP::Residual { c0, n0, c1, n1 } => {
                    let mut y = self.conv(t, p, c0, h, batch)?;
                    y = self.norm(t, p, n0, y, batch)?;
                    y = t.gelu(y);
                    y = self.conv(t, p, c1, y, batch)?;
                    y = self.norm(t, p, n1, y, batch)?;
                    let s = t.add(y, h)?;
                    t.gelu(s)
                }
                BlockP::Fourier { spectral, skip } => {
                    let s = match (&self.plan.clifford_spectral, &self.plan.real_spectral) {
                        (Some(spec), _) => t.spectral_clifford(h, p[spectral], spec.clone(), batch)?,
                        (_, Some(spec)) => t.spectral_real(h, p[spectral], spec.clone(), batch)?,
                        _ => unreachable!("fourier block without a spectral plan"),
                    };
                    let c = self.conv(t, p, skip, h, batch)?;
                    let s = t.add(s, c)?;
                    t.gelu(s)
                }
            };
        }
        h = self.conv(t, p, self.plan.proj[0], h, batch)?;
        h = t.gelu(h);
        self.conv(t, p, self.plan.proj[1], h, batch)
    }

    /// One sample's history (oldest first) in the model input layout.
    pub fn encode(&self, history: &[&[f64]]) -> Vec<f64> {
        let cfg = &self.config;
        let (dc, s) = (cfg.data_channels, cfg.spatial_len());
        let nb = cfg.signature().map(|g| g.blade_count()).unwrap_or(1);
        assert_eq!(history.len(), cfg.history, "history length");
        let mut x = Vec::with_capacity(self.plan.nb * cfg.in_channels() * s);
        if cfg.family.is_clifford() {
            for b in 0..nb {
                for frame in history {
                    x.extend_from_slice(&frame[b * dc * s..(b + 1) * dc * s]);
                }
            }
        } else {
            for frame in history {
                for &b in &cfg.mapped_blades {
                    x.extend_from_slice(&frame[b * dc * s..(b + 1) * dc * s]);
                }
            }
        }
        x
    }

    /// One sample's output, in the model layout, as a full frame with unmapped blades zero.
    pub fn decode(&self, y: &[f64]) -> Vec<f64> {
        let cfg = &self.config;
        let (dc, s) = (cfg.data_channels, cfg.spatial_len());
        let nb = cfg.signature().map(|g| g.blade_count()).unwrap_or(1);
        let mut frame = vec![0.0; nb * dc * s];
        for (i, &b) in cfg.mapped_blades.iter().enumerate() {
            let src = if cfg.family.is_clifford() { b } else { i };
            frame[b * dc * s..(b + 1) * dc * s].copy_from_slice(&y[src * dc * s..(src + 1) * dc * s]);
        }
        frame
    }

    /// Target frame in the model output layout.
    fn encode_target(&self, frame: &[f64]) -> Vec<f64> {
        let cfg = &self.config;
        if cfg.family.is_clifford() {
            return frame.to_vec();
        }
        let (dc, s) = (cfg.data_channels, cfg.spatial_len());
        cfg.mapped_blades
            .iter()
            .flat_map(|&b| frame[b * dc * s..(b + 1) * dc * s].iter().copied())
            .collect()
    }

    fn loss_weights(&self) -> Vec<f64> {
        let cfg = &self.config;
        if !cfg.family.is_clifford() {
            return vec![1.0; cfg.out_channels()];
        }
        let nb = self.plan.nb;
        let mut w = vec![0.0; nb * cfg.data_channels];
        for &b in &cfg.mapped_blades {
            w[b * cfg.data_channels..(b + 1) * cfg.data_channels].iter_mut().for_each(|v| *v = 1.0);
        }
        w
    }

    /// Batch SMSE and its gradient with respect to every parameter tensor.
    pub fn loss_and_grad(&self, histories: &[Vec<&[f64]>], targets: &[&[f64]]) -> Result<(f64, Vec<Vec<f64>>)> {
        let batch = histories.len();
        let mut t = Tape::new();
        let p: Vec<Var> = self.params.tensors().iter().map(|v| t.leaf(v.clone())).collect();
        let x: Vec<f64> = histories.iter().flat_map(|h| self.encode(h)).collect();
        let x = t.leaf(x);
        let y = self.forward(&mut t, &p, x, batch)?;
        let target: Vec<f64> = targets.iter().flat_map(|f| self.encode_target(f)).collect();
        let scale = 1.0 / (batch * self.config.spatial_len()) as f64;
        let loss = t.weighted_sq(y, Arc::new(target), Arc::new(self.loss_weights()), self.config.spatial_len(), scale)?;
        let (g, _) = t.grad(loss, &p);
        Ok((t.scalar(loss), g))
    }
}

/// Anything that maps a history of frames to the next frame.
pub trait Predictor {
    fn history(&self) -> usize;
    fn predict(&self, histories: &[Vec<&[f64]>]) -> Result<Vec<Vec<f64>>>;
}

impl Predictor for Surrogate {
    fn history(&self) -> usize {
        self.config.history
    }

    fn predict(&self, histories: &[Vec<&[f64]>]) -> Result<Vec<Vec<f64>>> {
        let batch = histories.len();
        let mut t = Tape::new();
        let p: Vec<Var> = self.params.tensors().iter().map(|v| t.leaf(v.clone())).collect();
        let x = t.leaf(histories.iter().flat_map(|h| self.encode(h)).collect());
        let y = self.forward(&mut t, &p, x, batch)?;
        let out = t.value(y);
        let per = out.len() / batch.max(1);
        Ok(out.chunks(per).map(|c| self.decode(c)).collect())
    }
}

/// Returns the newest frame of the history.
#[derive(Clone, Copy, Debug)]
pub struct IdentityModel {
    pub history: usize,
}

impl Predictor for IdentityModel {
    fn history(&self) -> usize {
        self.history
    }

    fn predict(&self, histories: &[Vec<&[f64]>]) -> Result<Vec<Vec<f64>>> {
        Ok(histories.iter().map(|h| h[h.len() - 1].to_vec()).collect())
    }
}

/// Always predicts zero.
#[derive(Clone, Copy, Debug)]
pub struct ZeroModel {
    pub history: usize,
}

impl Predictor for ZeroModel {
    fn history(&self) -> usize {
        self.history
    }

    fn predict(&self, histories: &[Vec<&[f64]>]) -> Result<Vec<Vec<f64>>> {
        Ok(histories.iter().map(|h| vec![0.0; h[0].len()]).collect())
    }
}

/// Shape of a frame `[blade][channel][grid]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameLayout {
    pub blades: usize,
    pub channels: usize,
    pub spatial: usize,
}

impl FrameLayout {
    pub fn of(set: &TrajectorySet) -> Self {
        Self {
            blades: set.blades(),
            channels: set.channels,
            spatial: set.spatial_len(),
        }
    }

    pub fn frame_len(&self) -> usize {
        self.blades * self.channels * self.spatial
    }
}

/// Summed MSE over a run of frames: `Σ_t Σ_{fields} mean_grid (u − û)²`,
/// the fields being the channels of `blades`.
pub fn smse(pred: &[f64], target: &[f64], layout: FrameLayout, blades: &[usize]) -> Result<f64> {
    let n = layout.frame_len();
    if pred.len() != target.len() || n == 0 || pred.len() % n != 0 {
        return Err(Error::Shape(format!(
            "prediction of {} values against target of {}",
            pred.len(),
            target.len()
        )));
    }
    let block = layout.channels * layout.spatial;
    let mut total = 0.0;
    for (p, q) in pred.chunks(n).zip(target.chunks(n)) {
        for &b in blades {
            let s: f64 = p[b * block..(b + 1) * block]
                .iter()
                .zip(&q[b * block..(b + 1) * block])
                .map(|(a, c)| (a - c) * (a - c))
                .sum();
            total += s / layout.spatial as f64;
        }
    }
    Ok(total)
}

/// Mapped blades split into vector (grade 1) and the rest.
pub fn field_groups(set: &TrajectorySet) -> (Vec<usize>, Vec<usize>) {
    let dim = set.signature.dim() as usize;
    set.packing
        .mapped_blades()
        .into_iter()
        .partition(|&b| Blade::from_index(b, dim).grade() != 1)
}

/// Autoregressive prediction of `steps` frames from an initial history.
pub fn rollout(model: &dyn Predictor, history: &[&[f64]], steps: usize) -> Result<Vec<Vec<f64>>> {
    if history.len() != model.history() {
        return Err(Error::Shape(format!(
            "history of {} frames for a model expecting {}",
            history.len(),
            model.history()
        )));
    }
    let mut window: Vec<Vec<f64>> = history.iter().map(|f| f.to_vec()).collect();
    let mut out = Vec::with_capacity(steps);
    for step in 0..steps {
        let refs: Vec<&[f64]> = window.iter().map(Vec::as_slice).collect();
        let next = model.predict(&[refs])?.pop().expect("one prediction");
        if let Some(i) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("rollout step {} produced a non-finite value at {i}", step + 1)));
        }
        window.remove(0);
        window.push(next.clone());
        out.push(next);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub smse_onestep: f64,
    pub smse_scalar: f64,
    pub smse_vector: f64,
    pub smse_rollout: f64,
}

pub const ROLLOUT_STEPS: usize = 5;

/// Number of one-step windows per trajectory.
pub fn windows(set: &TrajectorySet, history: usize) -> usize {
    set.steps.saturating_sub(history)
}

/// One-step metrics averaged over every window of `trajs`, rollout averaged
/// over `trajs` starting at time zero. Rollout is `NaN` when trajectories
/// are too short.
pub fn evaluate(model: &dyn Predictor, set: &TrajectorySet, trajs: &[usize], batch: usize) -> Result<Metrics> {
    let h = model.history();
    let nw = windows(set, h);
    if nw == 0 || trajs.is_empty() {
        return Err(Error::Shape("dataset has no complete window".into()));
    }
    let layout = FrameLayout::of(set);
    let (scalar, vector) = field_groups(set);
    let all = set.packing.mapped_blades();
    let samples: Vec<(usize, usize)> = trajs.iter().flat_map(|&tr| (0..nw).map(move |t0| (tr, t0))).collect();
    let mut m = Metrics::default();
    for chunk in samples.chunks(batch.max(1)) {
        let hist: Vec<Vec<&[f64]>> = chunk.iter().map(|&(tr, t0)| (t0..t0 + h).map(|t| set.frame(tr, t)).collect()).collect();
        let pred = model.predict(&hist)?;
        for (p, &(tr, t0)) in pred.iter().zip(chunk) {
            let target = set.frame(tr, t0 + h);
            if let Some(i) = p.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("prediction value {i} of trajectory {tr}")));
            }
            m.smse_onestep += smse(p, target, layout, &all)?;
            m.smse_scalar += smse(p, target, layout, &scalar)?;
            m.smse_vector += smse(p, target, layout, &vector)?;
        }
    }
    let n = samples.len() as f64;
    m.smse_onestep /= n;
    m.smse_scalar /= n;
    m.smse_vector /= n;
    m.smse_rollout = if set.steps >= h + ROLLOUT_STEPS {
        let mut acc = 0.0;
        for &tr in trajs {
            let hist: Vec<&[f64]> = (0..h).map(|t| set.frame(tr, t)).collect();
            let pred = rollout(model, &hist, ROLLOUT_STEPS)?.concat();
            let target: Vec<f64> = (h..h + ROLLOUT_STEPS).flat_map(|t| set.frame(tr, t).iter().copied()).collect();
            acc += smse(&pred, &target, layout, &all)?;
        }
        acc / trajs.len() as f64
    } else {
        f64::NAN
    };
    Ok(m)
}

/// Optimiser and schedule settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_frac: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub valid_frac: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 8,
            lr: 1e-3,
            warmup_frac: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            valid_frac: 0.2,
            seed: 0,
        }
    }
}

/// Deterministic train/valid split of trajectory indices.
pub fn split(trajectories: usize, valid_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..trajectories).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    idx.shuffle(&mut rng);
    let nv = ((trajectories as f64 * valid_frac).round() as usize).min(trajectories.saturating_sub(1));
    let valid = idx.split_off(trajectories - nv);
    (idx, valid)
}

/// Linear warmup then cosine decay to zero.
pub fn learning_rate(cfg: &TrainConfig, step: usize, total: usize) -> f64 {
    let warm = ((cfg.warmup_frac * total as f64).ceil() as usize).max(1);
    if step < warm {
        return cfg.lr * (step + 1) as f64 / warm as f64;
    }
    let span = total.saturating_sub(warm).max(1);
    let frac = ((step - warm) as f64 / span as f64).min(1.0);
    cfg.lr * 0.5 * (1.0 + (PI * frac).cos())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl Adam {
    pub fn new(params: &ParamSet) -> Self {
        let z: Vec<Vec<f64>> = params.tensors().iter().map(|p| vec![0.0; p.len()]).collect();
        Self { m: z.clone(), v: z, t: 0 }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &[Vec<f64>], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let b1t = 1.0 - cfg.beta1.powi(self.t as i32);
        let b2t = 1.0 - cfg.beta2.powi(self.t as i32);
        for (i, g) in grads.iter().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, (p, &gj)) in params.get_mut(i).iter_mut().zip(g).enumerate() {
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
                let mh = m[j] / b1t;
                let vh = v[j] / b2t;
                *p -= lr * mh / (vh.sqrt() + cfg.adam_eps);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub step: usize,
    pub train_smse: f64,
    pub valid_smse: f64,
}

/// Training state: model, optimiser, counters and loss curve.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: Surrogate,
    pub cfg: TrainConfig,
    pub adam: Adam,
    pub step: usize,
    pub epoch: usize,
    pub curve: Vec<CurveRow>,
    pub train_idx: Vec<usize>,
    pub valid_idx: Vec<usize>,
}

impl Trainer {
    pub fn new(model: Surrogate, cfg: TrainConfig, set: &TrajectorySet) -> Result<Self> {
        check_compatible(&model.config, set)?;
        if windows(set, model.config.history) == 0 {
            return Err(Error::Shape("trajectories are shorter than history + 1".into()));
        }
        let (train_idx, valid_idx) = split(set.trajectories, cfg.valid_frac, cfg.seed);
        if train_idx.is_empty() {
            return Err(Error::Invalid("no training trajectories".into()));
        }
        Ok(Self {
            adam: Adam::new(&model.params),
            model,
            cfg,
            step: 0,
            epoch: 0,
            curve: Vec::new(),
            train_idx,
            valid_idx,
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.train_idx.len().div_ceil(self.cfg.batch_size.max(1))
    }

    pub fn total_steps(&self) -> usize {
        self.cfg.epochs * self.batches_per_epoch()
    }

    /// One random window per training trajectory, shuffled.
    fn epoch_samples(&self, set: &TrajectorySet) -> Vec<(usize, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(1000 + self.epoch as u64);
        let mut order = self.train_idx.clone();
        order.shuffle(&mut rng);
        let nw = windows(set, self.model.config.history);
        order.into_iter().map(|tr| (tr, rng.gen_range(0..nw))).collect()
    }

    /// Fixed validation windows: one per validation trajectory.
    fn valid_samples(&self, set: &TrajectorySet) -> Vec<(usize, usize)> {
        let nw = windows(set, self.model.config.history);
        self.valid_idx.iter().map(|&tr| (tr, tr % nw)).collect()
    }

    fn samples_smse(&self, set: &TrajectorySet, samples: &[(usize, usize)]) -> Result<f64> {
        let h = self.model.config.history;
        let layout = FrameLayout::of(set);
        let blades = set.packing.mapped_blades();
        let mut acc = 0.0;
        for chunk in samples.chunks(self.cfg.batch_size.max(1)) {
            let hist: Vec<Vec<&[f64]>> = chunk.iter().map(|&(tr, t0)| (t0..t0 + h).map(|t| set.frame(tr, t)).collect()).collect();
            for (p, &(tr, t0)) in self.model.predict(&hist)?.iter().zip(chunk) {
                acc += smse(p, set.frame(tr, t0 + h), layout, &blades)?;
            }
        }
        Ok(acc / samples.len().max(1) as f64)
    }

    /// One-step SMSE of the current model on the fixed validation windows.
    pub fn valid_smse(&self, set: &TrajectorySet) -> Result<f64> {
        if self.valid_idx.is_empty() {
            return Ok(f64::NAN);
        }
        self.samples_smse(set, &self.valid_samples(set))
    }

    /// Runs one epoch. On any failure, including a non-finite loss or
    /// gradient, the parameters and optimiser are restored to the start of
    /// the epoch before the error is returned.
    pub fn run_epoch(&mut self, set: &TrajectorySet) -> Result<CurveRow> {
        let snapshot = (self.model.params.clone(), self.adam.clone(), self.step);
        match self.epoch_steps(set) {
            Ok(train_smse) => {
                self.epoch += 1;
                let row = CurveRow {
                    step: self.step,
                    train_smse,
                    valid_smse: self.valid_smse(set)?,
                };
                self.curve.push(row);
                Ok(row)
            }
            Err(e) => {
                (self.model.params, self.adam, self.step) = snapshot;
                Err(e)
            }
        }
    }

    fn epoch_steps(&mut self, set: &TrajectorySet) -> Result<f64> {
        let h = self.model.config.history;
        let total = self.total_steps();
        let samples = self.epoch_samples(set);
        let mut loss_sum = 0.0;
        for chunk in samples.chunks(self.cfg.batch_size.max(1)) {
            let hist: Vec<Vec<&[f64]>> = chunk.iter().map(|&(tr, t0)| (t0..t0 + h).map(|t| set.frame(tr, t)).collect()).collect();
            let targets: Vec<&[f64]> = chunk.iter().map(|&(tr, t0)| set.frame(tr, t0 + h)).collect();
            let (loss, grads) = self.model.loss_and_grad(&hist, &targets)?;
            if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "training loss diverged at step {} of epoch {}",
                    self.step, self.epoch
                )));
            }
            let lr = learning_rate(&self.cfg, self.step, total);
            self.adam.step(&mut self.model.params, &grads, lr, &self.cfg);
            self.step += 1;
            loss_sum += loss * chunk.len() as f64;
        }
        Ok(loss_sum / samples.len() as f64)
    }

    /// Runs the remaining epochs.
    pub fn run(&mut self, set: &TrajectorySet) -> Result<()> {
        while self.epoch < self.cfg.epochs {
            self.run_epoch(set)?;
        }
        Ok(())
    }
}

/// Rejects a model whose signature, grid, channels or packing disagree with the data.
pub fn check_compatible(cfg: &SurrogateConfig, set: &TrajectorySet) -> Result<()> {
    let sig = cfg.signature()?;
    if sig != set.signature {
        return Err(Error::Invalid(format!("model is {sig} but data is {}", set.signature)));
    }
    if cfg.dims != set.dims || cfg.data_channels != set.channels {
        return Err(Error::Shape(format!(
            "model grid {:?}×{} does not match data {:?}×{}",
            cfg.dims, cfg.data_channels, set.dims, set.channels
        )));
    }
    if cfg.mapped_blades != set.packing.mapped_blades() {
        return Err(Error::Invalid("model packing differs from the dataset packing".into()));
    }
    Ok(())
}

pub fn curve_csv(curve: &[CurveRow]) -> String {
    let mut s = String::from("step,train_smse,valid_smse\n");
    for r in curve {
        s.push_str(&format!("{},{:e},{:e}\n", r.step, r.train_smse, r.valid_smse));
    }
    s
}

/// What a checkpoint directory holds besides the parameter blobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: SurrogateConfig,
    pub train: TrainConfig,
    pub step: usize,
    pub epoch: usize,
    pub adam_t: u64,
    pub curve: Vec<CurveRow>,
    pub manifest: ParamManifest,
    pub train_idx: Vec<usize>,
    pub valid_idx: Vec<usize>,
}

pub const CHECKPOINT_META: &str = "checkpoint.json";
pub const CHECKPOINT_PARAMS: &str = "params.bin";
pub const CHECKPOINT_OPTIMIZER: &str = "optimizer.bin";

fn moments_set(params: &ParamSet, m: &[Vec<f64>], v: &[Vec<f64>]) -> ParamSet {
    let mut s = ParamSet::new();
    for (prefix, src) in [("m", m), ("v", v)] {
        for (i, data) in src.iter().enumerate() {
            s.push(format!("{prefix}.{}", params.name(i)), params.shape(i).to_vec(), data.clone());
        }
    }
    s
}

pub fn save_checkpoint(dir: &Path, tr: &Trainer) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = CheckpointMeta {
        model: tr.model.config.clone(),
        train: tr.cfg.clone(),
        step: tr.step,
        epoch: tr.epoch,
        adam_t: tr.adam.t,
        curve: tr.curve.clone(),
        manifest: tr.model.manifest()?,
        train_idx: tr.train_idx.clone(),
        valid_idx: tr.valid_idx.clone(),
    };
    fs::write(dir.join(CHECKPOINT_PARAMS), tr.model.params.to_le_bytes(Dtype::F64))?;
    let moments = moments_set(&tr.model.params, &tr.adam.m, &tr.adam.v);
    fs::write(dir.join(CHECKPOINT_OPTIMIZER), moments.to_le_bytes(Dtype::F64))?;
    fs::write(dir.join(CHECKPOINT_META), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_checkpoint_meta(dir: &Path) -> Result<CheckpointMeta> {
    Ok(serde_json::from_slice(&fs::read(dir.join(CHECKPOINT_META))?)?)
}

pub fn load_model(dir: &Path) -> Result<Surrogate> {
    let meta = load_checkpoint_meta(dir)?;
    let params = ParamSet::from_le_bytes(&meta.manifest, &fs::read(dir.join(CHECKPOINT_PARAMS))?)?;
    Surrogate::with_params(meta.model, params)
}

/// Restores a trainer, including optimiser moments and the data split.
pub fn load_trainer(dir: &Path) -> Result<Trainer> {
    let meta = load_checkpoint_meta(dir)?;
    let model = load_model(dir)?;
    let moments_manifest = moments_set(
        &model.params,
        model.params.tensors(),
        model.params.tensors(),
    )
    .manifest(None, Dtype::F64);
    let moments = ParamSet::from_le_bytes(&moments_manifest, &fs::read(dir.join(CHECKPOINT_OPTIMIZER))?)?;
    let n = model.params.len();
    let adam = Adam {
        m: moments.tensors()[..n].to_vec(),
        v: moments.tensors()[n..].to_vec(),
        t: meta.adam_t,
    };
    Ok(Trainer {
        model,
        cfg: meta.train,
        adam,
        step: meta.step,
        epoch: meta.epoch,
        curve: meta.curve,
        train_idx: meta.train_idx,
        valid_idx: meta.valid_idx,
    })
}
