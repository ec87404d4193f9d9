//! Evaluation of the potential functional on simulated paths.
//!
//! The running integrand pairs each player's sensitivity and action with the
//! cost gradients evaluated along the ray of scaled controls; the scaling
//! variable is integrated with Gauss-Legendre quadrature, or in closed form
//! where the integrand is polynomial (quadratic control cost, quadratic
//! kernel, quadratic terminal cost). The symmetric variant drops the
//! sensitivity argument entirely and is an exact potential when the
//! interaction weights are symmetric.

use rayon::prelude::*;
use serde::Serialize;

use crate::cost::{CostModel, CrowdCost, Dims};
use crate::error::{CoreError, Result};
use crate::game::GameSpec;
use crate::kernel::Kernel;
use crate::quad::QuadratureRule;
use crate::sim::PathBatch;

/// A Monte-Carlo potential (or objective) value with its decomposition and
/// sampling error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PotentialValue {
    pub value: f64,
    pub running: f64,
    pub terminal: f64,
    pub std_error: f64,
}

fn aggregate(per_trajectory: Vec<(f64, f64)>) -> PotentialValue {
    let m = per_trajectory.len();
    let mut run = 0.0;
    let mut term = 0.0;
    for &(r, t) in &per_trajectory {
        run += r;
        term += t;
    }
    let inv = 1.0 / m as f64;
    run *= inv;
    term *= inv;
    let mean_total = run + term;
    let std_error = if m > 1 {
        let var = per_trajectory
            .iter()
            .map(|&(r, t)| {
                let dev = (r + t) - mean_total;
                dev * dev
            })
            .sum::<f64>()
            / (m as f64 - 1.0);
        (var / m as f64).sqrt()
    } else {
        0.0
    };
    PotentialValue {
        value: run + term,
        running: run,
        terminal: term,
        std_error,
    }
}

/// Running integrand `F(t, x, y, a)`: closed forms where available.
pub fn f_integrand(
    game: &GameSpec,
    t: f64,
    x: &[f64],
    y: &[f64],
    a: &[f64],
    rule: &QuadratureRule,
) -> f64 {
    f_running(game, t, x, y, a, rule, false)
}

/// Running integrand evaluated purely by quadrature (no closed forms); used
/// to cross-check the closed-form paths.
pub fn f_integrand_quadrature(
    game: &GameSpec,
    t: f64,
    x: &[f64],
    y: &[f64],
    a: &[f64],
    rule: &QuadratureRule,
) -> f64 {
    f_running(game, t, x, y, a, rule, true)
}

fn f_running(
    game: &GameSpec,
    t: f64,
    x: &[f64],
    y: &[f64],
    a: &[f64],
    rule: &QuadratureRule,
    force_quadrature: bool,
) -> f64 {
    let dims = game.dims();
    match (&game.cost, force_quadrature) {
        (CostModel::Crowd(c), false) => {
            let mut total = crowd_control_part(c, dims, a);
            total += crowd_kernel_part(c, dims, x, y, rule);
            total
        }
        _ => f_generic_quadrature(game, dims, t, x, y, a, rule),
    }
}

/// `sum_i (w_i/2) |a_i|^2` - the exact scaling integral of the control term.
fn crowd_control_part(c: &CrowdCost, dims: Dims, a: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..dims.players {
        let ai = dims.action_of(a, i);
        total += 0.5 * c.control_weights[i] * ai.iter().map(|v| v * v).sum::<f64>();
    }
    total
}

/// Kernel interaction part of the running integrand, merged over ordered
/// pairs: the kernel is even, so both orientations of a pair share the same
/// evaluation point.
fn crowd_kernel_part(
    c: &CrowdCost,
    dims: Dims,
    x: &[f64],
    y: &[f64],
    rule: &QuadratureRule,
) -> f64 {
    let n = dims.players;
    let d = dims.state_dim;
    let scale = CrowdCost::pair_scale(n);
    if scale == 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut z = vec![0.0; d];
    let mut w = vec![0.0; d];
    let mut u = vec![0.0; d];
    let mut v = vec![0.0; d];
    for i in 0..n {
        for j in i + 1..n {
            let qij = c.q(n, i, j);
            let qji = c.q(n, j, i);
            if qij == 0.0 && qji == 0.0 {
                continue;
            }
            let xi = dims.state_of(x, i);
            let xj = dims.state_of(x, j);
            let yi = dims.state_of(y, i);
            let yj = dims.state_of(y, j);
            for cix in 0..d {
                z[cix] = xi[cix] - xj[cix];
                w[cix] = yi[cix] - yj[cix];
                u[cix] = qij * yi[cix] - qji * yj[cix];
            }
            match c.kernel {
                Kernel::Quadratic => {
                    // integral of grad K(z - (1-r) w) over r is z - w/2
                    let mut dot = 0.0;
                    for cix in 0..d {
                        dot += u[cix] * (z[cix] - 0.5 * w[cix]);
                    }
                    total += scale * dot;
                }
                _ => {
                    for (&r, &wq) in rule.nodes.iter().zip(rule.weights.iter()) {
                        let shift = 1.0 - r;
                        for cix in 0..d {
                            v[cix] = z[cix] - shift * w[cix];
                        }
                        let g = c.kernel.eval(&v).expect("finite path state").gradient;
                        let mut dot = 0.0;
                        for cix in 0..d {
                            dot += u[cix] * g[cix];
                        }
                        total += scale * wq * dot;
                    }
                }
            }
        }
    }
    total
}

fn f_generic_quadrature(
    game: &GameSpec,
    dims: Dims,
    t: f64,
    x: &[f64],
    y: &[f64],
    a: &[f64],
    rule: &QuadratureRule,
) -> f64 {
    let jd = dims.joint_state();
    let ja = dims.joint_action();
    let mut xs = vec![0.0; jd];
    let mut ra = vec![0.0; ja];
    let mut total = 0.0;
    for (&r, &wq) in rule.nodes.iter().zip(rule.weights.iter()) {
        let shift = 1.0 - r;
        for c in 0..jd {
            xs[c] = x[c] - shift * y[c];
        }
        for c in 0..ja {
            ra[c] = r * a[c];
        }
        for i in 0..dims.players {
            let e = game.cost.running_eval(dims, t, &xs, &ra, i);
            let yi = dims.state_of(y, i);
            let ai = dims.action_of(a, i);
            let mut pair = 0.0;
            for c in 0..dims.state_dim {
                pair += yi[c] * e.grad_x[c];
            }
            for c in 0..dims.action_dim {
                pair += ai[c] * e.grad_a[c];
            }
            total += wq * pair;
        }
    }
    total
}

/// Terminal integrand `G(x, y)`.
pub fn g_terminal(game: &GameSpec, x: &[f64], y: &[f64], rule: &QuadratureRule) -> f64 {
    g_terminal_inner(game, x, y, rule, false)
}

pub fn g_terminal_quadrature(
    game: &GameSpec,
    x: &[f64],
    y: &[f64],
    rule: &QuadratureRule,
) -> f64 {
    g_terminal_inner(game, x, y, rule, true)
}

fn g_terminal_inner(
    game: &GameSpec,
    x: &[f64],
    y: &[f64],
    rule: &QuadratureRule,
    force_quadrature: bool,
) -> f64 {
    let dims = game.dims();
    match (&game.cost, force_quadrature) {
        (CostModel::Crowd(c), false) => {
            // closed form for g_i = c_i |x_i - z_i|^2:
            //   2 c_i y_i . (x_i - z_i) - c_i |y_i|^2
            let mut total = 0.0;
            for i in 0..dims.players {
                let ci = c.terminal_weights[i];
                let xi = dims.state_of(x, i);
                let yi = dims.state_of(y, i);
                let zi = c.target_of(dims, i);
                let mut dot = 0.0;
                let mut ysq = 0.0;
                for cix in 0..dims.state_dim {
                    dot += yi[cix] * (xi[cix] - zi[cix]);
                    ysq += yi[cix] * yi[cix];
                }
                total += 2.0 * ci * dot - ci * ysq;
            }
            total
        }
        _ => {
            let jd = dims.joint_state();
            let mut xs = vec![0.0; jd];
            let mut grad = vec![0.0; dims.state_dim];
            let mut total = 0.0;
            for (&r, &wq) in rule.nodes.iter().zip(rule.weights.iter()) {
                let shift = 1.0 - r;
                for c in 0..jd {
                    xs[c] = x[c] - shift * y[c];
                }
                for i in 0..dims.players {
                    game.cost.terminal_grad(dims, &xs, i, &mut grad);
                    let yi = dims.state_of(y, i);
                    for cix in 0..dims.state_dim {
                        total += wq * yi[cix] * grad[cix];
                    }
                }
            }
            total
        }
    }
}

/// Empirical potential over a path batch: time-discretized running integral
/// plus terminal term, averaged across trajectories.
pub fn empirical_potential(
    paths: &PathBatch,
    game: &GameSpec,
    rule: &QuadratureRule,
) -> Result<PotentialValue> {
    check_paths(paths, game)?;
    let dt = paths.grid.dt();
    let p = paths.grid.steps();
    let per: Vec<(f64, f64)> = (0..paths.trajectories)
        .into_par_iter()
        .map(|m| {
            let mut run = 0.0;
            for l in 0..p {
                run += f_integrand(
                    game,
                    paths.grid.node(l),
                    paths.state(m, l),
                    paths.sensitivity(m, l),
                    paths.actions(m, l),
                    rule,
                ) * dt;
            }
            let term = g_terminal(game, paths.state(m, p), paths.sensitivity(m, p), rule);
            (run, term)
        })
        .collect();
    Ok(aggregate(per))
}

/// Symmetric-case potential: requires a symmetric interaction table for
/// crowd costs (callers of generic costs are responsible for the symmetry of
/// their second derivatives).
pub fn symmetric_potential(
    paths: &PathBatch,
    game: &GameSpec,
    rule: &QuadratureRule,
) -> Result<PotentialValue> {
    check_paths(paths, game)?;
    if let CostModel::Crowd(c) = &game.cost {
        if let Some((i, j)) = c.symmetry_violation(game.players) {
            return Err(CoreError::AsymmetricWeights { i, j });
        }
    }
    let dt = paths.grid.dt();
    let p = paths.grid.steps();
    let per: Vec<(f64, f64)> = (0..paths.trajectories)
        .into_par_iter()
        .map(|m| {
            let mut run = 0.0;
            for l in 0..p {
                run += f_symmetric(
                    game,
                    paths.grid.node(l),
                    paths.state(m, l),
                    paths.actions(m, l),
                    rule,
                ) * dt;
            }
            let term = g_symmetric(game, paths.state(m, p), rule);
            (run, term)
        })
        .collect();
    Ok(aggregate(per))
}

/// Symmetric running integrand `sum_i int [x_i; a_i] . grad f_i(t, rx, ra) dr`.
pub fn f_symmetric(game: &GameSpec, t: f64, x: &[f64], a: &[f64], rule: &QuadratureRule) -> f64 {
    let dims = game.dims();
    match &game.cost {
        CostModel::Crowd(c) => {
            let mut total = crowd_control_part(c, dims, a);
            let n = dims.players;
            let d = dims.state_dim;
            let scale = CrowdCost::pair_scale(n);
            if scale == 0.0 {
                return total;
            }
            let mut z = vec![0.0; d];
            let mut v = vec![0.0; d];
            for i in 0..n {
                for j in i + 1..n {
                    let q = c.q(n, i, j);
                    if q == 0.0 {
                        continue;
                    }
                    let xi = dims.state_of(x, i);
                    let xj = dims.state_of(x, j);
                    for cix in 0..d {
                        z[cix] = xi[cix] - xj[cix];
                    }
                    match c.kernel {
                        Kernel::Quadratic => {
                            // int r |z|^2 dr = |z|^2 / 2
                            let zsq: f64 = z.iter().map(|u| u * u).sum();
                            total += scale * q * 0.5 * zsq;
                        }
                        _ => {
                            for (&r, &wq) in rule.nodes.iter().zip(rule.weights.iter()) {
                                for cix in 0..d {
                                    v[cix] = r * z[cix];
                                }
                                let g =
                                    c.kernel.eval(&v).expect("finite path state").gradient;
                                let mut dot = 0.0;
                                for cix in 0..d {
                                    dot += z[cix] * g[cix];
                                }
                                total += scale * q * wq * dot;
                            }
                        }
                    }
                }
            }
            total
        }
        CostModel::Generic(_) => {
            let jd = dims.joint_state();
            let ja = dims.joint_action();
            let mut rx = vec![0.0; jd];
            let mut ra = vec![0.0; ja];
            let mut total = 0.0;
            for (&r, &wq) in rule.nodes.iter().zip(rule.weights.iter()) {
                for c in 0..jd {
                    rx[c] = r * x[c];
                }
                for c in 0..ja {
                    ra[c] = r * a[c];
                }
                for i in 0..dims.players {
                    let e = game.cost.running_eval(dims, t, &rx, &ra, i);
                    let xi = dims.state_of(x, i);
                    let ai = dims.action_of(a, i);
                    let mut pair = 0.0;
                    for c in 0..dims.state_dim {
                        pair += xi[c] * e.grad_x[c];
                    }
                    for c in 0..dims.action_dim {
                        pair += ai[c] * e.grad_a[c];
                    }
                    total += wq * pair;
                }
            }
            total
        }
    }
}

/// Symmetric terminal integrand `sum_i int x_i . grad g_i(rx) dr`.
pub fn g_symmetric(game: &GameSpec, x: &[f64], rule: &QuadratureRule) -> f64 {
    let dims = game.dims();
    match &game.cost {
        CostModel::Crowd(c) => {
            // int x . 2c(rx - z) dr = c |x|^2 - 2c x.z
            let mut total = 0.0;
            for i in 0..dims.players {
                let ci = c.terminal_weights[i];
                let xi = dims.state_of(x, i);
                let zi = c.target_of(dims, i);
                let mut xsq = 0.0;
                let mut dot = 0.0;
                for cix in 0..dims.state_dim {
                    xsq += xi[cix] * xi[cix];
                    dot += xi[cix] * zi[cix];
                }
                total += ci * xsq - 2.0 * ci * dot;
            }
            total
        }
        CostModel::Generic(_) => {
            let jd = dims.joint_state();
            let mut rx = vec![0.0; jd];
            let mut grad = vec![0.0; dims.state_dim];
            let mut total = 0.0;
            for (&r, &wq) in rule.nodes.iter().zip(rule.weights.iter()) {
                for c in 0..jd {
                    rx[c] = r * x[c];
                }
                for i in 0..dims.players {
                    game.cost.terminal_grad(dims, &rx, i, &mut grad);
                    let xi = dims.state_of(x, i);
                    for cix in 0..dims.state_dim {
                        total += wq * xi[cix] * grad[cix];
                    }
                }
            }
            total
        }
    }
}

/// Player `i`'s discretized objective over the batch: left-endpoint running
/// sum plus terminal cost, with Monte-Carlo standard error.
pub fn player_cost(paths: &PathBatch, game: &GameSpec, player: usize) -> Result<PotentialValue> {
    check_paths(paths, game)?;
    let dims = game.dims();
    let dt = paths.grid.dt();
    let p = paths.grid.steps();
    let per: Vec<(f64, f64)> = (0..paths.trajectories)
        .into_par_iter()
        .map(|m| {
            let mut run = 0.0;
            for l in 0..p {
                run += game.cost.running(
                    dims,
                    paths.grid.node(l),
                    paths.state(m, l),
                    paths.actions(m, l),
                    player,
                ) * dt;
            }
            let term = game.cost.terminal(dims, paths.state(m, p), player);
            (run, term)
        })
        .collect();
    Ok(aggregate(per))
}

fn check_paths(paths: &PathBatch, game: &GameSpec) -> Result<()> {
    if paths.players != game.players
        || paths.state_dim != game.state_dim
        || paths.action_dim != game.action_dim
    {
        return Err(CoreError::DimensionMismatch {
            context: "path batch dimensions",
            expected: game.players * game.state_dim,
            actual: paths.players * paths.state_dim,
        });
    }
    Ok(())
}
