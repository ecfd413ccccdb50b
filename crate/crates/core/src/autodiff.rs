//! A small reverse-mode tape over exactly the operations the models use, and
//! a central finite-difference checker.
//!
//! Tensors are flat `Vec<f64>`. Field-shaped values use the layout
//! `[batch][blade][channel][grid]`; real fields are the one-blade case.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::algebra::ProductTerm;
use crate::error::{Error, Result};
use crate::layers::conv::{
    assemble_clifford_kernel, assemble_clifford_kernel_backward, assemble_rotational_kernel,
    assemble_rotational_kernel_backward, conv_backward, conv_forward, ConvGeometry, KernelShape,
};
use crate::layers::norm::{groupnorm_backward, groupnorm_forward, NormSaved, NormSpec};
use crate::layers::spectral::{CliffordSpectralSpec, RealSpectralSpec};
use crate::layers::{gelu, gelu_grad};

/// Handle to a tape node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Sum(Var),
    Dot(Var, Arc<Vec<f64>>),
    /// `x + b[c]` broadcast over `[batch][c][inner]`.
    AddBias {
        x: Var,
        b: Var,
        inner: usize,
    },
    /// Pointwise geometric product of `[nb][n]` operands.
    Gp {
        a: Var,
        b: Var,
        terms: Arc<[ProductTerm]>,
        blades: usize,
    },
    CliffordKernel {
        w: Var,
        terms: Arc<[ProductTerm]>,
        shape: KernelShape,
    },
    RotationalKernel {
        w: Var,
        cout: usize,
        cin: usize,
        taps: usize,
        eps: f64,
        faithful: bool,
    },
    Conv {
        x: Var,
        k: Var,
        geometry: Arc<ConvGeometry>,
        batch: usize,
        cin: usize,
        cout: usize,
    },
    SpectralClifford {
        x: Var,
        w: Var,
        spec: Arc<CliffordSpectralSpec>,
        batch: usize,
    },
    SpectralReal {
        x: Var,
        w: Var,
        spec: Arc<RealSpectralSpec>,
        batch: usize,
    },
    GroupNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        spec: NormSpec,
        batch: usize,
        spatial: usize,
    },
    /// `scale · Σ_{b,c,s} weight[c]·(x − target)²` over `[batch][c][inner]`.
    WeightedSq {
        x: Var,
        target: Arc<Vec<f64>>,
        weights: Arc<Vec<f64>>,
        inner: usize,
        scale: f64,
    },
}

#[derive(Clone, Debug)]
enum Saved {
    None,
    Spectra(Vec<f64>),
    Norm(Box<NormSaved>),
}

#[derive(Clone, Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
    saved: Saved,
}

/// Which leaves received no gradient.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GradReport {
    pub disconnected: Vec<usize>,
}

/// Append-only record of a forward computation.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Shape(format!("{what}: expected {want} values, got {got}")));
    }
    Ok(())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// Value of a scalar node.
    pub fn scalar(&self, v: Var) -> f64 {
        let x = self.value(v);
        assert_eq!(x.len(), 1, "node is not a scalar");
        x[0]
    }

    pub fn leaf(&mut self, value: Vec<f64>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            saved: Saved::None,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op) -> Result<Var> {
        let (value, saved) = self.eval(&op)?;
        self.nodes.push(Node { value, op, saved });
        Ok(Var(self.nodes.len() - 1))
    }

    fn len_of(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        check_len("add", self.len_of(b), self.len_of(a))?;
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        check_len("sub", self.len_of(b), self.len_of(a))?;
        self.push(Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        check_len("mul", self.len_of(b), self.len_of(a))?;
        self.push(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.push(Op::Scale(a, s)).expect("infallible")
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        self.push(Op::Gelu(a)).expect("infallible")
    }

    pub fn sum(&mut self, a: Var) -> Var {
        self.push(Op::Sum(a)).expect("infallible")
    }

    /// `Σ a·c` for a constant `c`.
    pub fn dot_const(&mut self, a: Var, c: Arc<Vec<f64>>) -> Result<Var> {
        check_len("dot", c.len(), self.len_of(a))?;
        self.push(Op::Dot(a, c))
    }

    pub fn add_bias(&mut self, x: Var, b: Var, inner: usize) -> Result<Var> {
        let (n, c) = (self.len_of(x), self.len_of(b));
        if c == 0 || inner == 0 || n % (c * inner) != 0 {
            return Err(Error::Shape(format!("bias of {c} channels does not tile {n} values")));
        }
        self.push(Op::AddBias { x, b, inner })
    }

    pub fn gp(&mut self, a: Var, b: Var, terms: Arc<[ProductTerm]>, blades: usize) -> Result<Var> {
        check_len("gp", self.len_of(b), self.len_of(a))?;
        if self.len_of(a) % blades != 0 {
            return Err(Error::BladeCount { expected: blades, got: self.len_of(a) });
        }
        self.push(Op::Gp { a, b, terms, blades })
    }

    pub fn clifford_kernel(&mut self, w: Var, terms: Arc<[ProductTerm]>, shape: KernelShape) -> Result<Var> {
        check_len("clifford kernel", self.len_of(w), shape.weights_len())?;
        self.push(Op::CliffordKernel { w, terms, shape })
    }

    pub fn rotational_kernel(
        &mut self,
        w: Var,
        cout: usize,
        cin: usize,
        taps: usize,
        eps: f64,
        faithful: bool,
    ) -> Result<Var> {
        let m = crate::layers::rotational_tensors(faithful);
        check_len("rotational kernel", self.len_of(w), m * cout * cin * taps)?;
        self.push(Op::RotationalKernel { w, cout, cin, taps, eps, faithful })
    }

    /// Real multi-channel cross-correlation, `x: [batch][cin][grid]`, `k: [cout][cin][taps]`.
    pub fn conv(&mut self, x: Var, k: Var, geometry: Arc<ConvGeometry>, batch: usize, cin: usize, cout: usize) -> Result<Var> {
        check_len("conv input", self.len_of(x), batch * cin * geometry.in_len())?;
        check_len("conv kernel", self.len_of(k), cout * cin * geometry.taps())?;
        self.push(Op::Conv { x, k, geometry, batch, cin, cout })
    }

    pub fn spectral_clifford(&mut self, x: Var, w: Var, spec: Arc<CliffordSpectralSpec>, batch: usize) -> Result<Var> {
        check_len(
            "spectral input",
            self.len_of(x),
            batch * spec.blades * spec.cin * spec.geometry.grid_len(),
        )?;
        check_len("spectral weights", self.len_of(w), spec.weights_len())?;
        self.push(Op::SpectralClifford { x, w, spec, batch })
    }

    pub fn spectral_real(&mut self, x: Var, w: Var, spec: Arc<RealSpectralSpec>, batch: usize) -> Result<Var> {
        check_len("spectral input", self.len_of(x), batch * spec.cin * spec.geometry.grid_len())?;
        check_len("spectral weights", self.len_of(w), spec.weights_len())?;
        self.push(Op::SpectralReal { x, w, spec, batch })
    }

    pub fn group_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        spec: NormSpec,
        batch: usize,
        spatial: usize,
    ) -> Result<Var> {
        spec.validate()?;
        check_len("norm input", self.len_of(x), batch * spec.blades * spec.channels * spatial)?;
        check_len("norm gamma", self.len_of(gamma), spec.gamma_len())?;
        check_len("norm beta", self.len_of(beta), spec.beta_len())?;
        self.push(Op::GroupNorm { x, gamma, beta, spec, batch, spatial })
    }

    pub fn weighted_sq(
        &mut self,
        x: Var,
        target: Arc<Vec<f64>>,
        weights: Arc<Vec<f64>>,
        inner: usize,
        scale: f64,
    ) -> Result<Var> {
        let n = self.len_of(x);
        check_len("loss target", target.len(), n)?;
        if weights.is_empty() || n % (weights.len() * inner) != 0 {
            return Err(Error::Shape("loss weights do not tile the prediction".into()));
        }
        self.push(Op::WeightedSq { x, target, weights, inner, scale })
    }

    fn eval(&self, op: &Op) -> Result<(Vec<f64>, Saved)> {
        let v = |x: &Var| self.nodes[x.0].value.as_slice();
        let out = match op {
            Op::Leaf => unreachable!("leaves carry their own value"),
            Op::Add(a, b) => v(a).iter().zip(v(b)).map(|(x, y)| x + y).collect(),
            Op::Sub(a, b) => v(a).iter().zip(v(b)).map(|(x, y)| x - y).collect(),
            Op::Mul(a, b) => v(a).iter().zip(v(b)).map(|(x, y)| x * y).collect(),
            Op::Scale(a, s) => v(a).iter().map(|x| s * x).collect(),
            Op::Gelu(a) => v(a).iter().map(|&x| gelu(x)).collect(),
            Op::Sum(a) => vec![v(a).iter().sum()],
            Op::Dot(a, c) => vec![v(a).iter().zip(c.iter()).map(|(x, y)| x * y).sum()],
            Op::AddBias { x, b, inner } => {
                let (b, inner) = (v(b), *inner);
                let c = b.len();
                v(x).iter()
                    .enumerate()
                    .map(|(i, &xv)| xv + b[(i / inner) % c])
                    .collect()
            }
            Op::Gp { a, b, terms, blades } => {
                let (a, b) = (v(a), v(b));
                let n = a.len() / blades;
                let mut y = vec![0.0; a.len()];
                for t in terms.iter() {
                    for i in 0..n {
                        y[t.out * n + i] += t.sign * a[t.lhs * n + i] * b[t.rhs * n + i];
                    }
                }
                y
            }
            Op::CliffordKernel { w, terms, shape } => assemble_clifford_kernel(terms, *shape, v(w)),
            Op::RotationalKernel { w, cout, cin, taps, eps, faithful } => {
                assemble_rotational_kernel(v(w), *cout, *cin, *taps, *eps, *faithful)
            }
            Op::Conv { x, k, geometry, batch, cin, cout } => conv_forward(geometry, v(x), *batch, *cin, v(k), *cout),
            Op::SpectralClifford { x, w, spec, batch } => {
                let (y, saved) = spec.forward(v(x), *batch, v(w));
                return Ok((y, Saved::Spectra(saved)));
            }
            Op::SpectralReal { x, w, spec, batch } => {
                let (y, saved) = spec.forward(v(x), *batch, v(w));
                return Ok((y, Saved::Spectra(saved)));
            }
            Op::GroupNorm { x, gamma, beta, spec, batch, spatial } => {
                let (y, saved) = groupnorm_forward(spec, v(x), *batch, *spatial, v(gamma), v(beta))?;
                return Ok((y, Saved::Norm(Box::new(saved))));
            }
            Op::WeightedSq { x, target, weights, inner, scale } => {
                let c = weights.len();
                let s: f64 = v(x)
                    .iter()
                    .zip(target.iter())
                    .enumerate()
                    .map(|(i, (a, b))| weights[(i / inner) % c] * (a - b) * (a - b))
                    .sum();
                vec![scale * s]
            }
        };
        Ok((out, Saved::None))
    }

    /// Recomputes every non-leaf node from its inputs and reports whether the
    /// values reproduce bit for bit.
    pub fn replay_matches(&self) -> Result<bool> {
        for node in &self.nodes {
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let (value, _) = self.eval(&node.op)?;
            if value.iter().zip(&node.value).any(|(a, b)| a.to_bits() != b.to_bits()) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Reverse accumulation from a scalar `loss`. Returns the gradient of
    /// every `wrt` leaf (zeros when unreachable) and the list of unreachable ones.
    pub fn grad(&self, loss: Var, wrt: &[Var]) -> (Vec<Vec<f64>>, GradReport) {
        assert_eq!(self.value(loss).len(), 1, "loss must be a scalar");
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            self.backward_node(node, &g, &mut adj);
            adj[i] = Some(g);
        }
        let mut report = GradReport::default();
        let grads = wrt
            .iter()
            .map(|w| match adj.get(w.0).cloned().flatten() {
                Some(g) => g,
                None => {
                    report.disconnected.push(w.0);
                    vec![0.0; self.len_of(*w)]
                }
            })
            .collect();
        (grads, report)
    }

    fn backward_node(&self, node: &Node, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let v = |x: &Var| self.nodes[x.0].value.as_slice();
        let mut acc = |x: &Var, d: Vec<f64>| match &mut adj[x.0] {
            Some(a) => a.iter_mut().zip(&d).for_each(|(p, q)| *p += q),
            slot @ None => *slot = Some(d),
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(a, g.to_vec());
                acc(b, g.to_vec());
            }
            Op::Sub(a, b) => {
                acc(a, g.to_vec());
                acc(b, g.iter().map(|x| -x).collect());
            }
            Op::Mul(a, b) => {
                let ga = g.iter().zip(v(b)).map(|(x, y)| x * y).collect();
                let gb = g.iter().zip(v(a)).map(|(x, y)| x * y).collect();
                acc(a, ga);
                acc(b, gb);
            }
            Op::Scale(a, s) => acc(a, g.iter().map(|x| s * x).collect()),
            Op::Gelu(a) => acc(a, g.iter().zip(v(a)).map(|(x, &y)| x * gelu_grad(y)).collect()),
            Op::Sum(a) => acc(a, vec![g[0]; v(a).len()]),
            Op::Dot(a, c) => acc(a, c.iter().map(|y| g[0] * y).collect()),
            Op::AddBias { x, b, inner } => {
                let c = v(b).len();
                let mut gb = vec![0.0; c];
                for (i, gi) in g.iter().enumerate() {
                    gb[(i / inner) % c] += gi;
                }
                acc(x, g.to_vec());
                acc(b, gb);
            }
            Op::Gp { a, b, terms, blades } => {
                let (av, bv) = (v(a), v(b));
                let n = av.len() / blades;
                let mut ga = vec![0.0; av.len()];
                let mut gb = vec![0.0; bv.len()];
                for t in terms.iter() {
                    for i in 0..n {
                        let go = t.sign * g[t.out * n + i];
                        ga[t.lhs * n + i] += go * bv[t.rhs * n + i];
                        gb[t.rhs * n + i] += go * av[t.lhs * n + i];
                    }
                }
                acc(a, ga);
                acc(b, gb);
            }
            Op::CliffordKernel { w, terms, shape } => acc(w, assemble_clifford_kernel_backward(terms, *shape, g)),
            Op::RotationalKernel { w, cout, cin, taps, eps, faithful } => acc(
                w,
                assemble_rotational_kernel_backward(v(w), *cout, *cin, *taps, *eps, *faithful, g),
            ),
            Op::Conv { x, k, geometry, batch, cin, cout } => {
                let (gx, gk) = conv_backward(geometry, v(x), *batch, *cin, v(k), *cout, g);
                acc(x, gx);
                acc(k, gk);
            }
            Op::SpectralClifford { x, w, spec, batch } => {
                let Saved::Spectra(s) = &node.saved else { unreachable!() };
                let (gx, gw) = spec.backward(s, *batch, v(w), g);
                acc(x, gx);
                acc(w, gw);
            }
            Op::SpectralReal { x, w, spec, batch } => {
                let Saved::Spectra(s) = &node.saved else { unreachable!() };
                let (gx, gw) = spec.backward(s, *batch, v(w), g);
                acc(x, gx);
                acc(w, gw);
            }
            Op::GroupNorm { x, gamma, beta, spec, batch, spatial } => {
                let Saved::Norm(s) = &node.saved else { unreachable!() };
                let (gx, gg, gb) = groupnorm_backward(spec, s, v(x), *batch, *spatial, v(gamma), g);
                acc(x, gx);
                acc(gamma, gg);
                acc(beta, gb);
            }
            Op::WeightedSq { x, target, weights, inner, scale } => {
                let c = weights.len();
                let gx = v(x)
                    .iter()
                    .zip(target.iter())
                    .enumerate()
                    .map(|(i, (a, b))| g[0] * scale * 2.0 * weights[(i / inner) % c] * (a - b))
                    .collect();
                acc(x, gx);
            }
        }
    }
}

/// Outcome of a finite-difference comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct FdReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// `(tensor, index)` of the worst coordinate.
    pub worst: (usize, usize),
    pub checked: usize,
}

/// Finite-difference settings: step `h`, number of coordinates, seed, and
/// the floor of the relative-error denominator `max(|a|, |f|, floor)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdConfig {
    pub h: f64,
    pub coords: usize,
    pub seed: u64,
    pub floor: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            h: 1e-5,
            coords: 100,
            seed: 0,
            floor: 1e-6,
        }
    }
}

/// Compares `analytic` with central differences of `f` on coordinates drawn
/// uniformly from all tensors of `params`.
pub fn fd_check<F>(f: F, params: &[Vec<f64>], analytic: &[Vec<f64>], cfg: FdConfig) -> FdReport
where
    F: Fn(&[Vec<f64>]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "one gradient per parameter tensor");
    let total: usize = params.iter().map(Vec::len).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut picks = sample(&mut rng, total, cfg.coords.min(total)).into_vec();
    picks.sort_unstable();
    let mut work = params.to_vec();
    let mut report = FdReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst: (0, 0),
        checked: picks.len(),
    };
    for flat in picks {
        let mut t = 0;
        let mut i = flat;
        while i >= work[t].len() {
            i -= work[t].len();
            t += 1;
        }
        let x0 = work[t][i];
        work[t][i] = x0 + cfg.h;
        let fp = f(&work);
        work[t][i] = x0 - cfg.h;
        let fm = f(&work);
        work[t][i] = x0;
        let fd = (fp - fm) / (2.0 * cfg.h);
        let a = analytic[t][i];
        let abs = (a - fd).abs();
        let rel = abs / a.abs().max(fd.abs()).max(cfg.floor);
        report.max_abs_error = report.max_abs_error.max(abs);
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = (t, i);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_ones() {
        let mut t = Tape::new();
        let x = t.leaf(vec![1.0, -2.0, 3.0]);
        let s = t.sum(x);
        let (g, r) = t.grad(s, &[x]);
        assert_eq!(g[0], vec![1.0; 3]);
        assert!(r.disconnected.is_empty());
    }

    #[test]
    fn disconnected_leaf_is_reported() {
        let mut t = Tape::new();
        let x = t.leaf(vec![1.0, 2.0]);
        let y = t.leaf(vec![5.0]);
        let s = t.sum(x);
        let (g, r) = t.grad(s, &[x, y]);
        assert_eq!(g[1], vec![0.0]);
        assert_eq!(r.disconnected, vec![y.index()]);
    }

    #[test]
    fn shared_input_accumulates() {
        let mut t = Tape::new();
        let x = t.leaf(vec![3.0]);
        let y = t.mul(x, x).unwrap();
        let z = t.add(y, x).unwrap();
        let s = t.sum(z);
        let (g, _) = t.grad(s, &[x]);
        assert_eq!(g[0], vec![7.0]);
    }

    #[test]
    fn linear_fd_is_tight() {
        let c = Arc::new(vec![0.3, -1.2, 2.5, 0.7]);
        let loss = |p: &[Vec<f64>]| p[0].iter().zip(c.iter()).map(|(a, b)| a * b).sum::<f64>();
        let cfg = FdConfig { coords: 4, ..Default::default() };
        let r = fd_check(loss, &[vec![1.0, 2.0, 3.0, 4.0]], &[c.to_vec()], cfg);
        assert!(r.max_rel_error < 1e-9, "{r:?}");
    }

    #[test]
    fn shape_errors() {
        let mut t = Tape::new();
        let a = t.leaf(vec![1.0, 2.0]);
        let b = t.leaf(vec![1.0]);
        assert!(t.add(a, b).is_err());
        assert!(t.add_bias(a, b, 3).is_err());
    }
}
