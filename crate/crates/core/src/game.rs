//! The distributed game: per-player drift-controlled jump-diffusion dynamics
//! whose coefficients depend only on time, plus a joint cost descriptor.
//!
//! Drifts are linear in the control only. A linear dependence on the state
//! itself can be absorbed into this form by rescaling the state with the
//! exponential of the integrated state coefficient (adjusting costs
//! accordingly); that change of variables is left to the caller.

use std::fmt;
use std::sync::Arc;

use crate::cost::{CostModel, Dims};
use crate::error::{CoreError, Result};
use crate::grid::TimeGrid;
use crate::linalg::Mat;
use crate::rng::{stream, Stream};

/// Time-dependent matrix coefficient, constant in the common case.
#[derive(Clone)]
pub enum TimeMatrix {
    Constant(Mat),
    Varying {
        rows: usize,
        cols: usize,
        f: Arc<dyn Fn(f64) -> Mat + Send + Sync>,
    },
}

impl fmt::Debug for TimeMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeMatrix::Constant(m) => write!(f, "Constant({}x{})", m.rows, m.cols),
            TimeMatrix::Varying { rows, cols, .. } => write!(f, "Varying({rows}x{cols})"),
        }
    }
}

impl TimeMatrix {
    pub fn constant(m: Mat) -> Self {
        TimeMatrix::Constant(m)
    }

    pub fn rows(&self) -> usize {
        match self {
            TimeMatrix::Constant(m) => m.rows,
            TimeMatrix::Varying { rows, .. } => *rows,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            TimeMatrix::Constant(m) => m.cols,
            TimeMatrix::Varying { cols, .. } => *cols,
        }
    }

    pub fn eval(&self, t: f64) -> std::borrow::Cow<'_, Mat> {
        match self {
            TimeMatrix::Constant(m) => std::borrow::Cow::Borrowed(m),
            TimeMatrix::Varying { f, .. } => std::borrow::Cow::Owned(f(t)),
        }
    }
}

/// Time-dependent vector coefficient (jump loadings).
#[derive(Clone)]
pub enum TimeVec {
    Constant(Vec<f64>),
    Varying {
        dim: usize,
        f: Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
    },
}

impl fmt::Debug for TimeVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeVec::Constant(v) => write!(f, "Constant(dim {})", v.len()),
            TimeVec::Varying { dim, .. } => write!(f, "Varying(dim {dim})"),
        }
    }
}

impl TimeVec {
    pub fn dim(&self) -> usize {
        match self {
            TimeVec::Constant(v) => v.len(),
            TimeVec::Varying { dim, .. } => *dim,
        }
    }

    pub fn eval(&self, t: f64) -> std::borrow::Cow<'_, [f64]> {
        match self {
            TimeVec::Constant(v) => std::borrow::Cow::Borrowed(v.as_slice()),
            TimeVec::Varying { f, .. } => std::borrow::Cow::Owned(f(t)),
        }
    }
}

/// Distribution of a scalar jump size. Only the unit point mass is exercised
/// by the shipped experiments; the sampler hook covers other finite-activity
/// distributions.
#[derive(Clone)]
pub enum JumpSizeModel {
    /// Every jump has size exactly one.
    Unit,
    /// Sizes drawn via the counter stream; `mean` feeds the compensator.
    Sampled {
        mean: f64,
        sampler: Arc<dyn Fn(Stream) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for JumpSizeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JumpSizeModel::Unit => f.write_str("Unit"),
            JumpSizeModel::Sampled { mean, .. } => write!(f, "Sampled(mean {mean})"),
        }
    }
}

impl JumpSizeModel {
    pub fn mean(&self) -> f64 {
        match self {
            JumpSizeModel::Unit => 1.0,
            JumpSizeModel::Sampled { mean, .. } => *mean,
        }
    }
}

/// One finite-activity Poisson jump source with per-player loadings.
#[derive(Debug, Clone)]
pub struct JumpSource {
    pub intensity: f64,
    /// Loading vector per player (`d`-dimensional each).
    pub loadings: Vec<TimeVec>,
    pub size: JumpSizeModel,
}

/// Initial condition of the joint state.
#[derive(Debug, Clone)]
pub enum InitialStates {
    /// Deterministic joint initial state, flat `N * d`.
    Fixed(Vec<f64>),
    /// Independent Gaussian coordinates (same law for every trajectory).
    GaussianIid { mean: Vec<f64>, std_dev: Vec<f64> },
}

impl InitialStates {
    pub fn joint_dim(&self) -> usize {
        match self {
            InitialStates::Fixed(v) => v.len(),
            InitialStates::GaussianIid { mean, .. } => mean.len(),
        }
    }

    /// Initial joint state for one trajectory, reproducible from the seed.
    pub fn sample(&self, seed: u64, trajectory: usize, out: &mut [f64]) {
        match self {
            InitialStates::Fixed(v) => out.copy_from_slice(v),
            InitialStates::GaussianIid { mean, std_dev } => {
                for (c, o) in out.iter_mut().enumerate() {
                    let z = Stream::new(seed)
                        .with(stream::INIT_STATE)
                        .with(trajectory as u64)
                        .with(c as u64)
                        .normal();
                    *o = mean[c] + std_dev[c] * z;
                }
            }
        }
    }
}

/// Full description of a distributed game.
#[derive(Debug, Clone)]
pub struct GameSpec {
    pub players: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    /// Shared Brownian dimension.
    pub brownian_dim: usize,
    /// Drift loading `b_i(t)`, one `d x k` map per player.
    pub drift: Vec<TimeMatrix>,
    /// Diffusion loading `sigma_i(t)`, one `d x n` map per player.
    pub diffusion: Vec<TimeMatrix>,
    pub jumps: Vec<JumpSource>,
    pub initial: InitialStates,
    pub cost: CostModel,
    /// Admissible control norm cap `U`; enters bound computations only.
    pub control_cap: f64,
}

impl GameSpec {
    pub fn dims(&self) -> Dims {
        Dims {
            players: self.players,
            state_dim: self.state_dim,
            action_dim: self.action_dim,
        }
    }

    pub fn joint_state_dim(&self) -> usize {
        self.players * self.state_dim
    }

    pub fn joint_action_dim(&self) -> usize {
        self.players * self.action_dim
    }

    pub fn jump_count(&self) -> usize {
        self.jumps.len()
    }

    /// Validate dimensions and probe coefficient maps for finiteness at the
    /// grid nodes (the square-integrability check for sampled coefficients).
    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        let n = self.players;
        if n == 0 {
            return Err(CoreError::Invalid("game needs at least one player".into()));
        }
        if self.state_dim == 0 || self.action_dim == 0 {
            return Err(CoreError::Invalid(
                "state and action dimensions must be positive".into(),
            ));
        }
        if self.drift.len() != n {
            return Err(CoreError::DimensionMismatch {
                context: "drift maps",
                expected: n,
                actual: self.drift.len(),
            });
        }
        if self.diffusion.len() != n {
            return Err(CoreError::DimensionMismatch {
                context: "diffusion maps",
                expected: n,
                actual: self.diffusion.len(),
            });
        }
        if self.initial.joint_dim() != self.joint_state_dim() {
            return Err(CoreError::DimensionMismatch {
                context: "initial states",
                expected: self.joint_state_dim(),
                actual: self.initial.joint_dim(),
            });
        }
        if !(self.control_cap > 0.0 && self.control_cap.is_finite()) {
            return Err(CoreError::Invalid(format!(
                "control cap must be positive, got {}",
                self.control_cap
            )));
        }
        for (i, b) in self.drift.iter().enumerate() {
            if b.rows() != self.state_dim || b.cols() != self.action_dim {
                return Err(CoreError::Invalid(format!(
                    "drift map of player {i} must be {}x{}, got {}x{}",
                    self.state_dim,
                    self.action_dim,
                    b.rows(),
                    b.cols()
                )));
            }
        }
        for (i, s) in self.diffusion.iter().enumerate() {
            if s.rows() != self.state_dim || s.cols() != self.brownian_dim {
                return Err(CoreError::Invalid(format!(
                    "diffusion map of player {i} must be {}x{}, got {}x{}",
                    self.state_dim,
                    self.brownian_dim,
                    s.rows(),
                    s.cols()
                )));
            }
        }
        for (j, src) in self.jumps.iter().enumerate() {
            if !(src.intensity >= 0.0 && src.intensity.is_finite()) {
                return Err(CoreError::NegativeInput {
                    what: "jump intensity",
                    value: src.intensity,
                });
            }
            if src.loadings.len() != n {
                return Err(CoreError::DimensionMismatch {
                    context: "jump loadings",
                    expected: n,
                    actual: src.loadings.len(),
                });
            }
            for (i, l) in src.loadings.iter().enumerate() {
                if l.dim() != self.state_dim {
                    return Err(CoreError::Invalid(format!(
                        "jump source {j} loading of player {i} must have dim {}, got {}",
                        self.state_dim,
                        l.dim()
                    )));
                }
            }
        }
        // Riemann-sum finiteness probe of time-dependent coefficients.
        for l in 0..=grid.steps() {
            let t = grid.node(l);
            for b in &self.drift {
                if !b.eval(t).is_finite() {
                    return Err(CoreError::NonFiniteInput {
                        context: "drift coefficient",
                    });
                }
            }
            for s in &self.diffusion {
                if !s.eval(t).is_finite() {
                    return Err(CoreError::NonFiniteInput {
                        context: "diffusion coefficient",
                    });
                }
            }
            for src in &self.jumps {
                for ld in &src.loadings {
                    if !ld.eval(t).iter().all(|v| v.is_finite()) {
                        return Err(CoreError::NonFiniteInput {
                            context: "jump loading",
                        });
                    }
                }
            }
        }
        if let CostModel::Crowd(c) = &self.cost {
            c.validate(self.dims())?;
        }
        Ok(())
    }

    /// `L^2` norm of the drift loading of player `i` over the horizon,
    /// trapezoid rule on the grid nodes (exact for constant drift).
    pub fn drift_l2_norm(&self, grid: &TimeGrid, i: usize) -> f64 {
        let dt = grid.dt();
        let sq = |t: f64| {
            let m = self.drift[i].eval(t);
            let s = crate::linalg::spectral_norm(&m);
            s * s
        };
        let mut acc = 0.5 * (sq(grid.node(0)) + sq(grid.node(grid.steps())));
        for l in 1..grid.steps() {
            acc += sq(grid.node(l));
        }
        (acc * dt).sqrt()
    }

    pub fn max_drift_l2_norm(&self, grid: &TimeGrid) -> f64 {
        (0..self.players)
            .map(|i| self.drift_l2_norm(grid, i))
            .fold(0.0, f64::max)
    }
}
