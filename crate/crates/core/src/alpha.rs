//! Explicit upper bounds on the potential gap: the general distributed-game
//! bound assembled from cross-derivative sup-norms, and its crowd-motion
//! specialization driven by kernel curvature and interaction asymmetry.

use serde::Serialize;

use crate::cost::{CostModel, CrossBlock, CrowdCost, Dims};
use crate::error::{CoreError, Result};
use crate::linalg::spectral_norm;
use crate::rng::{stream, Stream};

/// Sup-norms of the cross second derivatives of the pairwise cost
/// differences `f_i - f_j` and `g_i - g_j`, per ordered pair `(i, j)`.
#[derive(Debug, Clone)]
pub struct DerivativeBounds {
    pub players: usize,
    pub xx: Vec<f64>,
    pub xa: Vec<f64>,
    pub ax: Vec<f64>,
    pub aa: Vec<f64>,
    pub gxx: Vec<f64>,
}

impl DerivativeBounds {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.players + j
    }

    /// Closed-form bounds for a crowd cost: the control and terminal parts
    /// are player-separable, so only the kernel Hessian survives, scaled by
    /// the asymmetry of the interaction weights.
    pub fn from_crowd(cost: &CrowdCost, dims: Dims) -> Self {
        let n = dims.players;
        let kappa = cost.kernel.curvature(dims.state_dim);
        let scale = CrowdCost::pair_scale(n);
        let mut xx = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    xx[i * n + j] = scale * (cost.q(n, i, j) - cost.q(n, j, i)).abs() * kappa;
                }
            }
        }
        DerivativeBounds {
            players: n,
            xx,
            xa: vec![0.0; n * n],
            ax: vec![0.0; n * n],
            aa: vec![0.0; n * n],
            gxx: vec![0.0; n * n],
        }
    }

    /// Sampled sup-norms for callback costs: the max spectral norm of each
    /// difference block over `samples` points drawn uniformly from the given
    /// box. Reported bounds are lower estimates of the true sup.
    pub fn sampled(
        cost: &CostModel,
        dims: Dims,
        horizon: f64,
        state_box: f64,
        action_box: f64,
        samples: usize,
        seed: u64,
    ) -> Self {
        let n = dims.players;
        let jd = dims.joint_state();
        let ja = dims.joint_action();
        let mut out = DerivativeBounds {
            players: n,
            xx: vec![0.0; n * n],
            xa: vec![0.0; n * n],
            ax: vec![0.0; n * n],
            aa: vec![0.0; n * n],
            gxx: vec![0.0; n * n],
        };
        let mut x = vec![0.0; jd];
        let mut a = vec![0.0; ja];
        for s in 0..samples {
            let base = Stream::new(seed).with(stream::DEVIATION).with(s as u64);
            let t = base.with(0).uniform() * horizon;
            for (c, v) in x.iter_mut().enumerate() {
                *v = state_box * (2.0 * base.with(1).with(c as u64).uniform() - 1.0);
            }
            for (c, v) in a.iter_mut().enumerate() {
                *v = action_box * (2.0 * base.with(2).with(c as u64).uniform() - 1.0);
            }
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let idx = i * n + j;
                    for (block, slot) in [
                        (CrossBlock::XX, 0usize),
                        (CrossBlock::XA, 1),
                        (CrossBlock::AX, 2),
                        (CrossBlock::AA, 3),
                    ] {
                        let hi = cost.running_cross_hess(dims, t, &x, &a, i, j, block);
                        let hj = cost.running_cross_hess(dims, t, &x, &a, j, i, block);
                        // d^2 (f_i - f_j) / dz_i dz_j: the second block is the
                        // transpose of d^2 f_j / dz_j dz_i.
                        let diff = hi.sub(&hj.transpose());
                        let nrm = spectral_norm(&diff);
                        let target = match slot {
                            0 => &mut out.xx[idx],
                            1 => &mut out.xa[idx],
                            2 => &mut out.ax[idx],
                            _ => &mut out.aa[idx],
                        };
                        if nrm > *target {
                            *target = nrm;
                        }
                    }
                    let gi = cost.terminal_cross_hess(dims, &x, i, j);
                    let gj = cost.terminal_cross_hess(dims, &x, j, i);
                    let nrm = spectral_norm(&gi.sub(&gj.transpose()));
                    if nrm > out.gxx[idx] {
                        out.gxx[idx] = nrm;
                    }
                }
            }
        }
        out
    }
}

/// Per-term breakdown of the general bound for the maximizing player.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GeneralTerms {
    pub state_state: f64,
    pub state_action: f64,
    pub action_state: f64,
    pub action_action: f64,
    pub terminal: f64,
}

/// Computed potential-gap bound with its breakdown and echoed inputs.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaReport {
    General {
        bound: f64,
        terms: GeneralTerms,
        max_player: usize,
        horizon: f64,
        drift_norms: Vec<f64>,
        control_caps: Vec<f64>,
    },
    Crowd {
        bound: f64,
        kappa: f64,
        zeta: f64,
        horizon: f64,
        drift_norm: f64,
        control_cap: f64,
    },
}

impl AlphaReport {
    pub fn bound(&self) -> f64 {
        match self {
            AlphaReport::General { bound, .. } => *bound,
            AlphaReport::Crowd { bound, .. } => *bound,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}

/// General distributed-game bound:
/// `1/2 max_i sum_{j != i} U_i U_j (T B_i B_j |xx| + sqrt(T) B_i |xa|
///  + sqrt(T) B_j |ax| + |aa| + B_i B_j |gxx|)`.
pub fn alpha_bound_general(
    bounds: &DerivativeBounds,
    drift_norms: &[f64],
    control_caps: &[f64],
    horizon: f64,
) -> Result<AlphaReport> {
    let n = bounds.players;
    if drift_norms.len() != n || control_caps.len() != n {
        return Err(CoreError::DimensionMismatch {
            context: "per-player norms",
            expected: n,
            actual: drift_norms.len().min(control_caps.len()),
        });
    }
    for &v in drift_norms.iter().chain(control_caps.iter()) {
        if v < 0.0 || !v.is_finite() {
            return Err(CoreError::NegativeInput {
                what: "norm input",
                value: v,
            });
        }
    }
    if horizon < 0.0 || !horizon.is_finite() {
        return Err(CoreError::NegativeInput {
            what: "horizon",
            value: horizon,
        });
    }
    for v in bounds
        .xx
        .iter()
        .chain(&bounds.xa)
        .chain(&bounds.ax)
        .chain(&bounds.aa)
        .chain(&bounds.gxx)
    {
        if *v < 0.0 || !v.is_finite() {
            return Err(CoreError::NegativeInput {
                what: "derivative bound",
                value: *v,
            });
        }
    }
    let sqrt_t = horizon.sqrt();
    let mut best = GeneralTerms {
        state_state: 0.0,
        state_action: 0.0,
        action_state: 0.0,
        action_action: 0.0,
        terminal: 0.0,
    };
    let mut best_total = -1.0;
    let mut best_player = 0;
    for i in 0..n {
        let mut terms = GeneralTerms {
            state_state: 0.0,
            state_action: 0.0,
            action_state: 0.0,
            action_action: 0.0,
            terminal: 0.0,
        };
        for j in 0..n {
            if j == i {
                continue;
            }
            let uu = control_caps[i] * control_caps[j];
            let idx = bounds.idx(i, j);
            terms.state_state +=
                0.5 * uu * horizon * drift_norms[i] * drift_norms[j] * bounds.xx[idx];
            terms.state_action += 0.5 * uu * sqrt_t * drift_norms[i] * bounds.xa[idx];
            terms.action_state += 0.5 * uu * sqrt_t * drift_norms[j] * bounds.ax[idx];
            terms.action_action += 0.5 * uu * bounds.aa[idx];
            terms.terminal += 0.5 * uu * drift_norms[i] * drift_norms[j] * bounds.gxx[idx];
        }
        let total = terms.state_state
            + terms.state_action
            + terms.action_state
            + terms.action_action
            + terms.terminal;
        if total > best_total {
            best_total = total;
            best = terms;
            best_player = i;
        }
    }
    let bound = best.state_state
        + best.state_action
        + best.action_state
        + best.action_action
        + best.terminal;
    Ok(AlphaReport::General {
        bound,
        terms: best,
        max_player: best_player,
        horizon,
        drift_norms: drift_norms.to_vec(),
        control_caps: control_caps.to_vec(),
    })
}

/// Normalized maximal row sum of interaction-weight asymmetries:
/// `1/(N-1) max_i sum_{j != i} |q_ji - q_ij|`.
pub fn zeta_exact(interaction: &[f64], players: usize) -> f64 {
    debug_assert_eq!(interaction.len(), players * players);
    if players < 2 {
        return 0.0;
    }
    let mut best: f64 = 0.0;
    for i in 0..players {
        let mut row = 0.0;
        for j in 0..players {
            if j == i {
                continue;
            }
            row += (interaction[j * players + i] - interaction[i * players + j]).abs();
        }
        best = best.max(row);
    }
    best / (players as f64 - 1.0)
}

/// Crowd-motion bound `1/2 T B^2 U^2 kappa zeta_N`.
pub fn crowd_alpha(
    cost: &CrowdCost,
    dims: Dims,
    drift_norm: f64,
    control_cap: f64,
    horizon: f64,
) -> Result<AlphaReport> {
    for (what, v) in [
        ("drift norm", drift_norm),
        ("control cap", control_cap),
        ("horizon", horizon),
    ] {
        if v < 0.0 || !v.is_finite() {
            return Err(CoreError::NegativeInput { what, value: v });
        }
    }
    let kappa = cost.kernel.curvature(dims.state_dim);
    let zeta = zeta_exact(&cost.interaction, dims.players);
    let bound = 0.5 * horizon * drift_norm * drift_norm * control_cap * control_cap * kappa * zeta;
    Ok(AlphaReport::Crowd {
        bound,
        kappa,
        zeta,
        horizon,
        drift_norm,
        control_cap,
    })
}
