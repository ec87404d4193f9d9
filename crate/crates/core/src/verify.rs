//! Numerical oracles: pathwise directional derivatives of player objectives,
//! mixed second derivatives, audits of the potential inequality against the
//! computed gap bound, and best-response exploitability estimates.

use rayon::prelude::*;
use serde::Serialize;

use crate::alpha::crowd_alpha;
use crate::cost::CrossBlock;
use crate::error::{CoreError, Result};
use crate::game::GameSpec;
use crate::grid::TimeGrid;
use crate::kernel::Kernel;
use crate::noise::NoiseBundle;
use crate::optim::{adam_step, AdamState};
use crate::policy::{NeuralPolicy, PolicyConfig, PolicyParams};
use crate::potential::{empirical_potential, player_cost, symmetric_potential};
use crate::quad::QuadratureRule;
use crate::rng::{stream, Stream};
use crate::sim::{simulate, simulate_open_loop, step_coefficients, ControlArray};
use crate::tape::Tape;
use crate::train::PlateauScheduler;

/// Monte-Carlo mean of player `i`'s objective under open-loop controls.
pub fn objective_value(
    game: &GameSpec,
    controls: &ControlArray,
    noise: &NoiseBundle,
    player: usize,
) -> Result<f64> {
    let paths = simulate_open_loop(game, controls, noise)?;
    Ok(player_cost(&paths, game, player)?.value)
}

/// Pathwise directional derivative of `J_i` at `controls` in `direction`
/// (an open-loop perturbation of player `i` only): the sensitivity driven by
/// the direction is paired with the cost gradients along the base paths.
pub fn analytic_linear_derivative(
    game: &GameSpec,
    controls: &ControlArray,
    player: usize,
    direction: &ControlArray,
    noise: &NoiseBundle,
) -> Result<f64> {
    if direction.width != game.action_dim {
        return Err(CoreError::DimensionMismatch {
            context: "direction width",
            expected: game.action_dim,
            actual: direction.width,
        });
    }
    let paths = simulate_open_loop(game, controls, noise)?;
    let dims = game.dims();
    let grid = noise.grid;
    let dt = grid.dt();
    let p = grid.steps();
    let d = game.state_dim;
    let coeffs = step_coefficients(game, &grid);
    let per: Vec<f64> = (0..noise.trajectories)
        .into_par_iter()
        .map(|m| {
            let mut sens = vec![0.0; d];
            let mut acc = 0.0;
            for l in 0..p {
                let eval = game.cost.running_eval(
                    dims,
                    grid.node(l),
                    paths.state(m, l),
                    paths.actions(m, l),
                    player,
                );
                let dir = direction.row(m, l);
                for c in 0..d {
                    acc += sens[c] * eval.grad_x[c] * dt;
                }
                for c in 0..game.action_dim {
                    acc += dir[c] * eval.grad_a[c] * dt;
                }
                let mut ba = vec![0.0; d];
                coeffs[l].drift[player].matvec_add(dir, &mut ba);
                for c in 0..d {
                    sens[c] += ba[c] * dt;
                }
            }
            let mut tgrad = vec![0.0; d];
            game.cost
                .terminal_grad(dims, paths.state(m, p), player, &mut tgrad);
            for c in 0..d {
                acc += sens[c] * tgrad[c];
            }
            acc
        })
        .collect();
    Ok(per.iter().sum::<f64>() / noise.trajectories as f64)
}

/// Mixed second derivative of `J_i` along `(dir_i, dir_j)`: the analytic
/// bilinear form assembled from cost second derivatives along the base
/// paths, next to the mixed central finite difference of the objective under
/// common noise.
#[allow(clippy::too_many_arguments)]
pub fn second_derivative_check(
    game: &GameSpec,
    controls: &ControlArray,
    i: usize,
    j: usize,
    dir_i: &ControlArray,
    dir_j: &ControlArray,
    noise: &NoiseBundle,
    fd_step: f64,
) -> Result<(f64, f64)> {
    if i == j {
        return Err(CoreError::Invalid(
            "cross derivative needs two distinct players".into(),
        ));
    }
    let dims = game.dims();
    let grid = noise.grid;
    let dt = grid.dt();
    let p = grid.steps();
    let d = game.state_dim;
    let k = game.action_dim;
    let coeffs = step_coefficients(game, &grid);
    let paths = simulate_open_loop(game, controls, noise)?;

    let per: Vec<f64> = (0..noise.trajectories)
        .into_par_iter()
        .map(|m| {
            let mut sens_i = vec![0.0; d];
            let mut sens_j = vec![0.0; d];
            let mut acc = 0.0;
            for l in 0..p {
                let t = grid.node(l);
                let x = paths.state(m, l);
                let a = paths.actions(m, l);
                let di = dir_i.row(m, l);
                let dj = dir_j.row(m, l);
                let xx = game.cost.running_cross_hess(dims, t, x, a, i, j, CrossBlock::XX);
                let xa = game.cost.running_cross_hess(dims, t, x, a, i, j, CrossBlock::XA);
                let ax = game.cost.running_cross_hess(dims, t, x, a, i, j, CrossBlock::AX);
                let aa = game.cost.running_cross_hess(dims, t, x, a, i, j, CrossBlock::AA);
                let mut form = 0.0;
                for r in 0..d {
                    for c in 0..d {
                        form += sens_i[r] * xx.at(r, c) * sens_j[c];
                    }
                    for c in 0..k {
                        form += sens_i[r] * xa.at(r, c) * dj[c];
                    }
                }
                for r in 0..k {
                    for c in 0..d {
                        form += di[r] * ax.at(r, c) * sens_j[c];
                    }
                    for c in 0..k {
                        form += di[r] * aa.at(r, c) * dj[c];
                    }
                }
                acc += form * dt;
                let mut ba = vec![0.0; d];
                coeffs[l].drift[i].matvec_add(di, &mut ba);
                for c in 0..d {
                    sens_i[c] += ba[c] * dt;
                }
                ba.fill(0.0);
                coeffs[l].drift[j].matvec_add(dj, &mut ba);
                for c in 0..d {
                    sens_j[c] += ba[c] * dt;
                }
            }
            let gxx = game
                .cost
                .terminal_cross_hess(dims, paths.state(m, p), i, j);
            for r in 0..d {
                for c in 0..d {
                    acc += sens_i[r] * gxx.at(r, c) * sens_j[c];
                }
            }
            acc
        })
        .collect();
    let analytic = per.iter().sum::<f64>() / noise.trajectories as f64;

    // mixed central finite differences of J_i under common noise
    let mut values = [0.0; 4];
    for (slot, (si, sj)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
        .iter()
        .enumerate()
    {
        let mut perturbed = controls.clone();
        add_player_direction(&mut perturbed, i, k, dir_i, si * fd_step);
        add_player_direction(&mut perturbed, j, k, dir_j, sj * fd_step);
        values[slot] = objective_value(game, &perturbed, noise, i)?;
    }
    let fd = (values[0] - values[1] - values[2] + values[3]) / (4.0 * fd_step * fd_step);
    Ok((analytic, fd))
}

fn add_player_direction(
    controls: &mut ControlArray,
    player: usize,
    action_dim: usize,
    direction: &ControlArray,
    scale: f64,
) {
    for m in 0..controls.trajectories {
        for l in 0..controls.steps {
            let dir = direction.row(m, l).to_vec();
            let row = controls.row_mut(m, l);
            for c in 0..action_dim {
                row[player * action_dim + c] += scale * dir[c];
            }
        }
    }
}

/// Draw a piecewise-constant deviation with i.i.d. standard normal levels,
/// rescaled to the requested control norm.
pub fn sample_deviation(
    grid: &TimeGrid,
    action_dim: usize,
    trajectories: usize,
    norm: f64,
    seed: u64,
    tag: u64,
) -> ControlArray {
    let mut dev = ControlArray::zeros(trajectories, grid.steps(), action_dim);
    for m in 0..trajectories {
        for l in 0..grid.steps() {
            let row = dev.row_mut(m, l);
            for (c, v) in row.iter_mut().enumerate() {
                *v = Stream::new(seed)
                    .with(stream::DEVIATION)
                    .with(tag)
                    .with(m as u64)
                    .with((l * action_dim + c) as u64)
                    .normal();
            }
        }
    }
    let current = dev.max_h2_norm(grid);
    if current > 0.0 {
        let s = norm / current;
        for v in dev.data.iter_mut() {
            *v *= s;
        }
    }
    dev
}

/// Which potential the audit compares objective differences against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditPotential {
    Standard,
    Symmetric,
}

/// Audit report; `pass` uses the statistical flag threshold
/// `gap <= bound + 3 * stderr` per sampled deviation.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub bound: f64,
    pub max_gap: f64,
    pub std_error: f64,
    pub samples: usize,
    pub pass: bool,
    pub base_control_norm: f64,
    pub control_cap: f64,
    pub cap_exceeded: bool,
}

impl AuditReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}

/// Sample unilateral deviations of random players, compute the change of the
/// deviating player's objective and of the potential on common noise, and
/// compare the worst gap against the closed-form bound.
pub fn potential_inequality_audit(
    game: &GameSpec,
    base: &ControlArray,
    deviations: usize,
    noise: &NoiseBundle,
    rule: &QuadratureRule,
    which: AuditPotential,
) -> Result<AuditReport> {
    if deviations == 0 {
        return Err(CoreError::Invalid("need at least one deviation".into()));
    }
    let crowd = game.cost.as_crowd().ok_or(CoreError::Unsupported {
        what: "potential inequality audit",
        detail: "closed-form bound needs the crowd cost".into(),
    })?;
    let grid = noise.grid;
    let bound = match which {
        AuditPotential::Standard => crowd_alpha(
            crowd,
            game.dims(),
            game.max_drift_l2_norm(&grid),
            game.control_cap,
            grid.horizon(),
        )?
        .bound(),
        AuditPotential::Symmetric => 0.0,
    };
    let eval_potential = |paths: &crate::sim::PathBatch| -> Result<crate::potential::PotentialValue> {
        match which {
            AuditPotential::Standard => empirical_potential(paths, game, rule),
            AuditPotential::Symmetric => symmetric_potential(paths, game, rule),
        }
    };

    let base_paths = simulate_open_loop(game, base, noise)?;
    let phi_base = eval_potential(&base_paths)?;
    let base_norm = base.max_h2_norm(&grid);
    // covers scaling-quadrature and floating-point rounding in the
    // deterministic case, where bound and sampling error can both be zero
    let numerical_floor = 1e-6 * (1.0 + phi_base.value.abs());

    let mut max_gap = 0.0f64;
    let mut max_gap_se = 0.0f64;
    let mut pass = true;
    for s in 0..deviations {
        let player = s % game.players;
        let dev = sample_deviation(
            &grid,
            game.action_dim,
            1,
            game.control_cap,
            noise.seed,
            s as u64,
        );
        let deviated = base.with_player_slice(player, game.action_dim, &dev);
        let dev_paths = simulate_open_loop(game, &deviated, noise)?;
        let j_dev = player_cost(&dev_paths, game, player)?;
        let j_base = player_cost(&base_paths, game, player)?;
        let phi_dev = eval_potential(&dev_paths)?;
        let gap = ((j_dev.value - j_base.value) - (phi_dev.value - phi_base.value)).abs();
        let se = (j_dev.std_error.powi(2)
            + j_base.std_error.powi(2)
            + phi_dev.std_error.powi(2)
            + phi_base.std_error.powi(2))
        .sqrt();
        if gap > max_gap {
            max_gap = gap;
            max_gap_se = se;
        }
        if gap > bound + 3.0 * se + numerical_floor {
            pass = false;
        }
    }
    Ok(AuditReport {
        bound,
        max_gap,
        std_error: max_gap_se,
        samples: deviations,
        pass,
        base_control_norm: base_norm,
        control_cap: game.control_cap,
        cap_exceeded: base_norm > game.control_cap,
    })
}

/// Inner best-response optimization settings.
#[derive(Debug, Clone, Copy)]
pub struct BestResponseConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for BestResponseConfig {
    fn default() -> Self {
        BestResponseConfig {
            iterations: 300,
            learning_rate: 1e-2,
            seed: 17,
        }
    }
}

/// Per-player best-response improvements against the joint policy.
#[derive(Debug, Clone, Serialize)]
pub struct ExploitabilityReport {
    pub per_player: Vec<f64>,
    pub max: f64,
    pub inner_iterations: usize,
}

/// Freeze all opponents at the joint policy's play and train a fresh
/// single-player policy for each player in turn; the improvement
/// `J_i(joint) - J_i(best response)` lower-bounds that player's true
/// exploitability (the inner optimization is inexact).
pub fn exploitability(
    game: &GameSpec,
    params: &PolicyParams,
    config: &BestResponseConfig,
    train_noise: &NoiseBundle,
    eval_noise: &NoiseBundle,
) -> Result<ExploitabilityReport> {
    let crowd = game.cost.as_crowd().ok_or(CoreError::Unsupported {
        what: "exploitability",
        detail: "best-response trainer needs the crowd cost".into(),
    })?;
    if matches!(crowd.kernel, Kernel::SmoothedIndicator { .. }) {
        return Err(CoreError::Unsupported {
            what: "exploitability",
            detail: "smoothed indicator kernel has no differentiable path".into(),
        });
    }
    let joint = NeuralPolicy {
        params,
        horizon: train_noise.grid.horizon(),
    };
    let frozen_train = simulate(game, &joint, train_noise)?;
    let frozen_eval = simulate(game, &joint, eval_noise)?;

    let mut per_player = Vec::with_capacity(game.players);
    for i in 0..game.players {
        let j_joint = player_cost(&frozen_eval, game, i)?.value;
        let br = train_best_response(game, crowd, &frozen_train, train_noise, i, config)?;
        let j_best = eval_best_response(game, crowd, &br, &frozen_eval, eval_noise, i)?;
        per_player.push(j_joint - j_best);
    }
    let max = per_player.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(ExploitabilityReport {
        per_player,
        max,
        inner_iterations: config.iterations,
    })
}

/// Gradient-descent best response for one player against frozen opponent
/// paths, minimizing the player's own discretized objective.
fn train_best_response(
    game: &GameSpec,
    crowd: &crate::cost::CrowdCost,
    frozen: &crate::sim::PathBatch,
    noise: &NoiseBundle,
    player: usize,
    config: &BestResponseConfig,
) -> Result<PolicyParams> {
    let policy_config =
        PolicyConfig::for_single_player(game.players, game.state_dim, game.action_dim);
    let mut params = PolicyParams::init(policy_config, config.seed);
    let mut adam = AdamState::new(params.data.len(), config.learning_rate);
    let mut scheduler = PlateauScheduler::new(Default::default(), config.learning_rate);
    let coeffs = step_coefficients(game, &noise.grid);
    let dt = noise.grid.dt();

    for _iter in 0..config.iterations {
        let results: Vec<(f64, Vec<f64>)> = (0..noise.trajectories)
            .into_par_iter()
            .map_init(Tape::new, |tape, m| {
                tape.clear();
                let (loss, grad) = best_response_trajectory(
                    tape, game, crowd, &params, frozen, noise, &coeffs, player, m, dt,
                );
                (loss, grad)
            })
            .collect();
        let m = noise.trajectories as f64;
        let mut mean_loss = 0.0;
        let mut grad = vec![0.0; params.data.len()];
        for (l, g) in &results {
            mean_loss += l;
            for (acc, v) in grad.iter_mut().zip(g.iter()) {
                *acc += v;
            }
        }
        mean_loss /= m;
        for v in grad.iter_mut() {
            *v /= m;
        }
        if !mean_loss.is_finite() {
            break;
        }
        adam_step(&mut params.data, &grad, &mut adam);
        adam.learning_rate = scheduler.observe(mean_loss);
    }
    Ok(params)
}

#[allow(clippy::too_many_arguments)]
fn best_response_trajectory(
    tape: &mut Tape,
    game: &GameSpec,
    crowd: &crate::cost::CrowdCost,
    params: &PolicyParams,
    frozen: &crate::sim::PathBatch,
    noise: &NoiseBundle,
    coeffs: &[crate::sim::StepCoeffs],
    player: usize,
    m: usize,
    dt: f64,
) -> (f64, Vec<f64>) {
    let grid = noise.grid;
    let p = grid.steps();
    let n = game.players;
    let d = game.state_dim;
    let k = game.action_dim;
    let horizon = grid.horizon();
    let scale = crate::cost::CrowdCost::pair_scale(n);

    let vars = params.push_leaves(tape);
    let mut init = vec![0.0; n * d];
    game.initial.sample(noise.seed, m, &mut init);
    let mut x_i = tape.leaf(&init[player * d..(player + 1) * d]);
    let mut y_i = tape.leaf(&vec![0.0; d]);
    let mut shift = vec![0.0; n * d];
    let mut running = tape.leaf_scalar(0.0);
    let mut drift_dt = vec![0.0; d * k];

    for l in 0..p {
        let t = grid.node(l);
        let t_leaf = tape.leaf_scalar(t / horizon);
        // input: frozen joint state/sensitivity with our live slice
        let fx = frozen.state(m, l);
        let fy = frozen.sensitivity(m, l);
        let mut parts = Vec::with_capacity(1 + 2 * n);
        parts.push(t_leaf);
        for j in 0..n {
            if j == player {
                parts.push(x_i);
            } else {
                parts.push(tape.leaf(&fx[j * d..(j + 1) * d]));
            }
        }
        for j in 0..n {
            if j == player {
                parts.push(y_i);
            } else {
                parts.push(tape.leaf(&fy[j * d..(j + 1) * d]));
            }
        }
        let input = tape.concat(&parts);
        let action = params.forward_tape(tape, &vars, input);

        // own running cost: control penalty plus interaction with frozen opponents
        let w = crowd.control_weights[player];
        if w != 0.0 {
            let sq = tape.square(action);
            let s = tape.sum(sq);
            let term = tape.scale(s, 0.5 * w);
            running = tape.add(running, term);
        }
        if scale > 0.0 {
            for j in 0..n {
                if j == player {
                    continue;
                }
                let q = crowd.q(n, player, j);
                if q == 0.0 {
                    continue;
                }
                let neg: Vec<f64> = fx[j * d..(j + 1) * d].iter().map(|v| -v).collect();
                let diff = tape.add_const(x_i, &neg);
                let sq = tape.square(diff);
                let s = tape.sum(sq);
                let term = match crowd.kernel {
                    Kernel::Quadratic => tape.scale(s, 0.5 * q * scale),
                    Kernel::Gaussian { amplitude, rate } => {
                        let se = tape.scale(s, -rate);
                        let e = tape.exp(se);
                        tape.scale(e, amplitude * q * scale)
                    }
                    Kernel::SmoothedIndicator { .. } => unreachable!(),
                };
                running = tape.add(running, term);
            }
        }

        // own dynamics
        let b = coeffs[l].drift[player].data.as_slice();
        for (o, v) in drift_dt.iter_mut().zip(b.iter()) {
            *o = v * dt;
        }
        let ba = tape.matvec_const(&drift_dt, action, d, k);
        y_i = tape.add(y_i, ba);
        let xa = tape.add(x_i, ba);
        coeffs[l].noise_shift(game, noise, m, l, &mut shift);
        x_i = tape.add_const(xa, &shift[player * d..(player + 1) * d]);
    }

    let running = tape.scale(running, dt);
    let neg_target: Vec<f64> = crowd
        .target_of(game.dims(), player)
        .iter()
        .map(|v| -v)
        .collect();
    let di = tape.add_const(x_i, &neg_target);
    let sq = tape.square(di);
    let s = tape.sum(sq);
    let terminal = tape.scale(s, crowd.terminal_weights[player]);
    let loss = tape.add(running, terminal);
    let value = tape.scalar(loss);
    let mut grad = vec![0.0; params.data.len()];
    if tape.backward(loss).is_ok() {
        params.gradient_from(tape, &vars, &mut grad);
    }
    (value, grad)
}

/// Plain evaluation of a trained best-response policy against frozen
/// opponents on an evaluation bundle.
fn eval_best_response(
    game: &GameSpec,
    crowd: &crate::cost::CrowdCost,
    br_params: &PolicyParams,
    frozen: &crate::sim::PathBatch,
    noise: &NoiseBundle,
    player: usize,
) -> Result<f64> {
    let grid = noise.grid;
    let p = grid.steps();
    let n = game.players;
    let d = game.state_dim;
    let k = game.action_dim;
    let dt = grid.dt();
    let horizon = grid.horizon();
    let dims = game.dims();
    let coeffs = step_coefficients(game, &grid);
    let scale = crate::cost::CrowdCost::pair_scale(n);

    let per: Vec<f64> = (0..noise.trajectories)
        .into_par_iter()
        .map(|m| {
            let mut init = vec![0.0; n * d];
            game.initial.sample(noise.seed, m, &mut init);
            let mut x_i = init[player * d..(player + 1) * d].to_vec();
            let mut y_i = vec![0.0; d];
            let mut input = vec![0.0; 1 + 2 * n * d];
            let mut action = vec![0.0; k];
            let mut shift = vec![0.0; n * d];
            let mut acc = 0.0;
            for l in 0..p {
                let t = grid.node(l);
                let fx = frozen.state(m, l);
                let fy = frozen.sensitivity(m, l);
                input[0] = t / horizon;
                input[1..1 + n * d].copy_from_slice(fx);
                input[1 + player * d..1 + (player + 1) * d].copy_from_slice(&x_i);
                input[1 + n * d..].copy_from_slice(fy);
                input[1 + n * d + player * d..1 + n * d + (player + 1) * d]
                    .copy_from_slice(&y_i);
                // forward expects (t, x, y) split
                br_params.forward(
                    input[0],
                    &input[1..1 + n * d],
                    &input[1 + n * d..],
                    &mut action,
                );
                acc += 0.5
                    * crowd.control_weights[player]
                    * action.iter().map(|v| v * v).sum::<f64>()
                    * dt;
                if scale > 0.0 {
                    let mut diff = vec![0.0; d];
                    for j in 0..n {
                        if j == player {
                            continue;
                        }
                        let q = crowd.q(n, player, j);
                        if q == 0.0 {
                            continue;
                        }
                        for c in 0..d {
                            diff[c] = x_i[c] - fx[j * d + c];
                        }
                        acc += scale
                            * q
                            * crowd.kernel.eval(&diff).expect("finite state").value
                            * dt;
                    }
                }
                let mut ba = vec![0.0; d];
                coeffs[l].drift[player].matvec_add(&action, &mut ba);
                for c in 0..d {
                    let v = ba[c] * dt;
                    y_i[c] += v;
                    x_i[c] += v;
                }
                coeffs[l].noise_shift(game, noise, m, l, &mut shift);
                for c in 0..d {
                    x_i[c] += shift[player * d + c];
                }
            }
            let z = crowd.target_of(dims, player);
            let term: f64 = x_i
                .iter()
                .zip(z.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                * crowd.terminal_weights[player];
            acc + term
        })
        .collect();
    Ok(per.iter().sum::<f64>() / noise.trajectories as f64)
}
