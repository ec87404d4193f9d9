//! Player cost models. The structured crowd cost pairs a per-player control
//! penalty and terminal tracking term with a kernel interaction over all
//! other players; every derivative the potential and bound computations need
//! has a closed form here. A callback-based model covers games outside that
//! family.

use std::fmt;
use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::kernel::Kernel;
use crate::linalg::Mat;

/// Problem dimensions threaded through cost evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub players: usize,
    pub state_dim: usize,
    pub action_dim: usize,
}

impl Dims {
    pub fn joint_state(&self) -> usize {
        self.players * self.state_dim
    }

    pub fn joint_action(&self) -> usize {
        self.players * self.action_dim
    }

    #[inline]
    pub fn state_of<'a>(&self, x: &'a [f64], i: usize) -> &'a [f64] {
        &x[i * self.state_dim..(i + 1) * self.state_dim]
    }

    #[inline]
    pub fn action_of<'a>(&self, a: &'a [f64], i: usize) -> &'a [f64] {
        &a[i * self.action_dim..(i + 1) * self.action_dim]
    }
}

/// Which second-derivative block of the running cost is requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossBlock {
    XX,
    XA,
    AX,
    AA,
}

/// Crowd-motion cost: `f_i = (w_i/2)|a_i|^2 + (1/(N-1)) sum_j q_ij K(x_i - x_j)`
/// with terminal cost `g_i = c_i |x_i - z_i|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrowdCost {
    /// Control penalty weights `w_i >= 0` (the running cost is `w_i/2 |a|^2`).
    pub control_weights: Vec<f64>,
    pub kernel: Kernel,
    /// Interaction weights, row-major `N x N`, zero diagonal.
    pub interaction: Vec<f64>,
    /// Terminal weights `c_i > 0`.
    pub terminal_weights: Vec<f64>,
    /// Terminal targets, flat `N * d`.
    pub targets: Vec<f64>,
}

impl CrowdCost {
    #[inline]
    pub fn q(&self, n: usize, i: usize, j: usize) -> f64 {
        self.interaction[i * n + j]
    }

    /// `1/(N-1)` with the single-player convention that no interaction exists.
    #[inline]
    pub fn pair_scale(n: usize) -> f64 {
        if n > 1 {
            1.0 / (n as f64 - 1.0)
        } else {
            0.0
        }
    }

    pub fn validate(&self, dims: Dims) -> Result<()> {
        let n = dims.players;
        self.kernel.validate()?;
        if self.control_weights.len() != n {
            return Err(CoreError::DimensionMismatch {
                context: "crowd control weights",
                expected: n,
                actual: self.control_weights.len(),
            });
        }
        if self.terminal_weights.len() != n {
            return Err(CoreError::DimensionMismatch {
                context: "crowd terminal weights",
                expected: n,
                actual: self.terminal_weights.len(),
            });
        }
        if self.targets.len() != dims.joint_state() {
            return Err(CoreError::DimensionMismatch {
                context: "crowd targets",
                expected: dims.joint_state(),
                actual: self.targets.len(),
            });
        }
        if self.interaction.len() != n * n {
            return Err(CoreError::DimensionMismatch {
                context: "interaction table",
                expected: n * n,
                actual: self.interaction.len(),
            });
        }
        for (idx, &q) in self.interaction.iter().enumerate() {
            let (i, j) = (idx / n, idx % n);
            if i == j && q != 0.0 {
                return Err(CoreError::Invalid(format!(
                    "interaction diagonal must be zero, got q[{i}][{i}] = {q}"
                )));
            }
            if q < 0.0 || !q.is_finite() {
                return Err(CoreError::NegativeInput {
                    what: "interaction weight",
                    value: q,
                });
            }
        }
        for &w in &self.control_weights {
            if w < 0.0 || !w.is_finite() {
                return Err(CoreError::NegativeInput {
                    what: "control weight",
                    value: w,
                });
            }
        }
        for &c in &self.terminal_weights {
            if !(c > 0.0 && c.is_finite()) {
                return Err(CoreError::Invalid(format!(
                    "terminal weight must be positive, got {c}"
                )));
            }
        }
        Ok(())
    }

    pub fn target_of(&self, dims: Dims, i: usize) -> &[f64] {
        &self.targets[i * dims.state_dim..(i + 1) * dims.state_dim]
    }

    /// True when the interaction table is symmetric (exact potential case).
    pub fn symmetry_violation(&self, n: usize) -> Option<(usize, usize)> {
        for i in 0..n {
            for j in i + 1..n {
                if self.q(n, i, j) != self.q(n, j, i) {
                    return Some((i, j));
                }
            }
        }
        None
    }
}

/// First-order data of player `i`'s running cost at one point.
#[derive(Debug, Clone)]
pub struct RunningEval {
    pub value: f64,
    pub grad_x: Vec<f64>,
    pub grad_a: Vec<f64>,
}

type RunningFn = Arc<dyn Fn(f64, &[f64], &[f64], usize) -> f64 + Send + Sync>;
type RunningGradFn = Arc<dyn Fn(f64, &[f64], &[f64], usize, &mut [f64], &mut [f64]) + Send + Sync>;
type RunningHessFn =
    Arc<dyn Fn(f64, &[f64], &[f64], usize, usize, CrossBlock) -> Mat + Send + Sync>;
type TerminalFn = Arc<dyn Fn(&[f64], usize) -> f64 + Send + Sync>;
type TerminalGradFn = Arc<dyn Fn(&[f64], usize, &mut [f64]) + Send + Sync>;
type TerminalHessFn = Arc<dyn Fn(&[f64], usize, usize) -> Mat + Send + Sync>;

/// Callback-based cost: `f_i` and `g_i` with first and second derivatives
/// supplied by the caller.
#[derive(Clone)]
pub struct GenericCost {
    pub running: RunningFn,
    pub running_grad: RunningGradFn,
    pub running_hess: RunningHessFn,
    pub terminal: TerminalFn,
    pub terminal_grad: TerminalGradFn,
    pub terminal_hess: TerminalHessFn,
}

impl fmt::Debug for GenericCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("GenericCost {{ .. }}")
    }
}

/// Cost descriptor attached to a game.
#[derive(Debug, Clone)]
pub enum CostModel {
    Crowd(CrowdCost),
    Generic(GenericCost),
}

impl CostModel {
    pub fn as_crowd(&self) -> Option<&CrowdCost> {
        match self {
            CostModel::Crowd(c) => Some(c),
            CostModel::Generic(_) => None,
        }
    }

    /// `f_i(t, x, a)`.
    pub fn running(&self, dims: Dims, t: f64, x: &[f64], a: &[f64], i: usize) -> f64 {
        match self {
            CostModel::Crowd(c) => {
                let n = dims.players;
                let ai = dims.action_of(a, i);
                let mut v = 0.5 * c.control_weights[i] * ai.iter().map(|u| u * u).sum::<f64>();
                let scale = CrowdCost::pair_scale(n);
                if scale > 0.0 {
                    let xi = dims.state_of(x, i);
                    let mut diff = vec![0.0; dims.state_dim];
                    for j in 0..n {
                        if j == i {
                            continue;
                        }
                        let q = c.q(n, i, j);
                        if q == 0.0 {
                            continue;
                        }
                        let xj = dims.state_of(x, j);
                        for (dd, (p, o)) in diff.iter_mut().zip(xi.iter().zip(xj.iter())) {
                            *dd = p - o;
                        }
                        v += scale * q * c.kernel.eval(&diff).expect("finite state").value;
                    }
                }
                v
            }
            CostModel::Generic(g) => (g.running)(t, x, a, i),
        }
    }

    /// `f_i` together with `d f_i / d x_i` and `d f_i / d a_i`.
    pub fn running_eval(&self, dims: Dims, t: f64, x: &[f64], a: &[f64], i: usize) -> RunningEval {
        match self {
            CostModel::Crowd(c) => {
                let n = dims.players;
                let ai = dims.action_of(a, i);
                let w = c.control_weights[i];
                let mut value = 0.5 * w * ai.iter().map(|u| u * u).sum::<f64>();
                let grad_a: Vec<f64> = ai.iter().map(|u| w * u).collect();
                let mut grad_x = vec![0.0; dims.state_dim];
                let scale = CrowdCost::pair_scale(n);
                if scale > 0.0 {
                    let xi = dims.state_of(x, i);
                    let mut diff = vec![0.0; dims.state_dim];
                    for j in 0..n {
                        if j == i {
                            continue;
                        }
                        let q = c.q(n, i, j);
                        if q == 0.0 {
                            continue;
                        }
                        let xj = dims.state_of(x, j);
                        for (dd, (p, o)) in diff.iter_mut().zip(xi.iter().zip(xj.iter())) {
                            *dd = p - o;
                        }
                        let e = c.kernel.eval(&diff).expect("finite state");
                        value += scale * q * e.value;
                        for (gx, gk) in grad_x.iter_mut().zip(e.gradient.iter()) {
                            *gx += scale * q * gk;
                        }
                    }
                }
                RunningEval {
                    value,
                    grad_x,
                    grad_a,
                }
            }
            CostModel::Generic(g) => {
                let mut grad_x = vec![0.0; dims.state_dim];
                let mut grad_a = vec![0.0; dims.action_dim];
                (g.running_grad)(t, x, a, i, &mut grad_x, &mut grad_a);
                RunningEval {
                    value: (g.running)(t, x, a, i),
                    grad_x,
                    grad_a,
                }
            }
        }
    }

    /// Second derivative block `d^2 f_i / d z_i d z_j` with `z` in `{x, a}`.
    pub fn running_cross_hess(
        &self,
        dims: Dims,
        t: f64,
        x: &[f64],
        a: &[f64],
        i: usize,
        j: usize,
        block: CrossBlock,
    ) -> Mat {
        match self {
            CostModel::Crowd(c) => {
                let n = dims.players;
                let d = dims.state_dim;
                let k = dims.action_dim;
                let scale = CrowdCost::pair_scale(n);
                match block {
                    CrossBlock::XX => {
                        if i == j {
                            let mut h = Mat::zeros(d, d);
                            let xi = dims.state_of(x, i);
                            let mut diff = vec![0.0; d];
                            for l in 0..n {
                                if l == i {
                                    continue;
                                }
                                let q = c.q(n, i, l);
                                if q == 0.0 {
                                    continue;
                                }
                                let xl = dims.state_of(x, l);
                                for (dd, (p, o)) in diff.iter_mut().zip(xi.iter().zip(xl.iter()))
                                {
                                    *dd = p - o;
                                }
                                let e = c.kernel.eval(&diff).expect("finite state");
                                h = h.add(&e.hessian.scale(scale * q));
                            }
                            h
                        } else {
                            let q = c.q(n, i, j);
                            if q == 0.0 || scale == 0.0 {
                                return Mat::zeros(d, d);
                            }
                            let xi = dims.state_of(x, i);
                            let xj = dims.state_of(x, j);
                            let diff: Vec<f64> =
                                xi.iter().zip(xj.iter()).map(|(p, o)| p - o).collect();
                            let e = c.kernel.eval(&diff).expect("finite state");
                            e.hessian.scale(-scale * q)
                        }
                    }
                    CrossBlock::XA => Mat::zeros(d, k),
                    CrossBlock::AX => Mat::zeros(k, d),
                    CrossBlock::AA => {
                        if i == j {
                            Mat::scaled_identity(k, c.control_weights[i])
                        } else {
                            Mat::zeros(k, k)
                        }
                    }
                }
            }
            CostModel::Generic(g) => (g.running_hess)(t, x, a, i, j, block),
        }
    }

    /// `g_i(x)`.
    pub fn terminal(&self, dims: Dims, x: &[f64], i: usize) -> f64 {
        match self {
            CostModel::Crowd(c) => {
                let xi = dims.state_of(x, i);
                let z = c.target_of(dims, i);
                c.terminal_weights[i]
                    * xi.iter()
                        .zip(z.iter())
                        .map(|(p, t)| (p - t) * (p - t))
                        .sum::<f64>()
            }
            CostModel::Generic(g) => (g.terminal)(x, i),
        }
    }

    /// `d g_i / d x_i`.
    pub fn terminal_grad(&self, dims: Dims, x: &[f64], i: usize, out: &mut [f64]) {
        match self {
            CostModel::Crowd(c) => {
                let xi = dims.state_of(x, i);
                let z = c.target_of(dims, i);
                for ((o, p), t) in out.iter_mut().zip(xi.iter()).zip(z.iter()) {
                    *o = 2.0 * c.terminal_weights[i] * (p - t);
                }
            }
            CostModel::Generic(g) => (g.terminal_grad)(x, i, out),
        }
    }

    /// `d^2 g_i / d x_i d x_j`.
    pub fn terminal_cross_hess(&self, dims: Dims, x: &[f64], i: usize, j: usize) -> Mat {
        match self {
            CostModel::Crowd(c) => {
                let d = dims.state_dim;
                if i == j {
                    Mat::scaled_identity(d, 2.0 * c.terminal_weights[i])
                } else {
                    Mat::zeros(d, d)
                }
            }
            CostModel::Generic(g) => (g.terminal_hess)(x, i, j),
        }
    }
}

/// Running cost of player `i` for a crowd cost, with first partials and the
/// requested second-derivative block with respect to another player's state.
pub fn crowd_running_cost(
    cost: &CrowdCost,
    dims: Dims,
    i: usize,
    x: &[f64],
    a: &[f64],
) -> RunningEval {
    CostModel::Crowd(cost.clone()).running_eval(dims, 0.0, x, a, i)
}
