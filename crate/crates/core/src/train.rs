//! Policy-gradient minimization of the empirical potential: simulate a batch
//! under the current policy, evaluate the discretized potential, backpropagate
//! through the unrolled dynamics, and take an Adam step, with a reduce-on-
//! plateau learning-rate schedule.
//!
//! Each trajectory builds its own tape; per-trajectory gradients are reduced
//! in trajectory order, so results are bit-identical no matter how many
//! threads execute the batch.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cost::{CostModel, CrowdCost};
use crate::error::{CoreError, Result};
use crate::game::GameSpec;
use crate::grid::TimeGrid;
use crate::kernel::Kernel;
use crate::noise::{sample_noise, NoiseBundle};
use crate::optim::{adam_step, AdamState};
use crate::policy::{PolicyConfig, PolicyParams};
use crate::potential::PotentialValue;
use crate::quad::QuadratureRule;
use crate::rng::{stream, Stream};
use crate::sim::step_coefficients;
use crate::tape::{Tape, Var};

/// Whether driving noise is redrawn every iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Resample {
    /// Fresh trajectories each iteration (stochastic gradient).
    Fresh,
    /// One bundle reused throughout (deterministic objective).
    Fixed,
}

/// Reduce-on-plateau schedule parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlateauConfig {
    pub patience: usize,
    pub factor: f64,
    /// Relative improvement threshold against the best value so far.
    pub threshold: f64,
    pub min_rate: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        PlateauConfig {
            patience: 10,
            factor: 0.5,
            threshold: 1e-4,
            min_rate: 1e-5,
        }
    }
}

/// Learning-rate schedule that halves the rate after `patience` iterations
/// without sufficient relative improvement of the running best.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    config: PlateauConfig,
    rate: f64,
    best: f64,
    since_improvement: usize,
}

impl PlateauScheduler {
    pub fn new(config: PlateauConfig, initial_rate: f64) -> Self {
        PlateauScheduler {
            config,
            rate: initial_rate,
            best: f64::INFINITY,
            since_improvement: 0,
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Feed one loss value; returns the rate to use from now on.
    pub fn observe(&mut self, value: f64) -> f64 {
        if !self.best.is_finite() {
            self.best = value;
            self.since_improvement = 0;
            return self.rate;
        }
        let margin = self.config.threshold * self.best.abs();
        if value < self.best - margin {
            self.best = value;
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
            if self.since_improvement >= self.config.patience {
                self.rate = (self.rate * self.config.factor).max(self.config.min_rate);
                self.since_improvement = 0;
            }
        }
        self.rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Trajectories per iteration.
    pub batch: usize,
    pub grid: TimeGrid,
    pub learning_rate: f64,
    pub plateau: PlateauConfig,
    pub seed: u64,
    pub quadrature_nodes: usize,
    pub resample: Resample,
    /// Optional global-norm gradient clip.
    pub grad_clip: Option<f64>,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(CoreError::EmptyBatch);
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(CoreError::Invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.plateau.factor > 0.0 && self.plateau.factor < 1.0) {
            return Err(CoreError::Invalid(format!(
                "plateau factor must lie in (0,1), got {}",
                self.plateau.factor
            )));
        }
        if self.quadrature_nodes == 0 {
            return Err(CoreError::Invalid(
                "need at least one quadrature node".into(),
            ));
        }
        Ok(())
    }
}

/// One training iteration record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainRecord {
    pub iteration: usize,
    pub potential: f64,
    pub running: f64,
    pub terminal: f64,
    pub std_error: f64,
    pub grad_norm: f64,
    pub learning_rate: f64,
    /// Informational only; excluded from reproducibility comparisons.
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

impl TrainLog {
    /// Equality of everything that is supposed to be deterministic
    /// (wall-clock timings are not).
    pub fn semantically_equal(&self, other: &TrainLog) -> bool {
        self.records.len() == other.records.len()
            && self.records.iter().zip(other.records.iter()).all(|(a, b)| {
                a.iteration == b.iteration
                    && a.potential.to_bits() == b.potential.to_bits()
                    && a.running.to_bits() == b.running.to_bits()
                    && a.terminal.to_bits() == b.terminal.to_bits()
                    && a.std_error.to_bits() == b.std_error.to_bits()
                    && a.grad_norm.to_bits() == b.grad_norm.to_bits()
                    && a.learning_rate.to_bits() == b.learning_rate.to_bits()
            })
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at iteration {iteration}; last finite parameters preserved")]
    NonFiniteLoss {
        iteration: usize,
        params: Box<PolicyParams>,
        log: TrainLog,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
}

fn trainable_cost(game: &GameSpec) -> Result<&CrowdCost> {
    let crowd = match &game.cost {
        CostModel::Crowd(c) => c,
        CostModel::Generic(_) => {
            return Err(CoreError::Unsupported {
                what: "policy-gradient training",
                detail: "requires the structured crowd cost".into(),
            })
        }
    };
    match crowd.kernel {
        Kernel::Gaussian { .. } | Kernel::Quadratic => Ok(crowd),
        Kernel::SmoothedIndicator { .. } => Err(CoreError::Unsupported {
            what: "policy-gradient training",
            detail: "smoothed indicator kernel has no differentiable path".into(),
        }),
    }
}

/// Per-iteration constants of the differentiable rollout.
struct RolloutPlan {
    /// `b_i(t_l) * dt`, flattened row-major per (step, player).
    drift_dt: Vec<Vec<Vec<f64>>>,
    /// Negated targets for the terminal closed form.
    neg_targets: Vec<Vec<f64>>,
    quad: QuadratureRule,
}

fn rollout_plan(game: &GameSpec, crowd: &CrowdCost, grid: &TimeGrid, nodes: usize) -> Result<RolloutPlan> {
    let dt = grid.dt();
    let drift_dt = (0..grid.steps())
        .map(|l| {
            let t = grid.node(l);
            game.drift
                .iter()
                .map(|b| b.eval(t).data.iter().map(|v| v * dt).collect())
                .collect()
        })
        .collect();
    let neg_targets = (0..game.players)
        .map(|i| {
            crowd.target_of(game.dims(), i)
                .iter()
                .map(|v| -v)
                .collect()
        })
        .collect();
    Ok(RolloutPlan {
        drift_dt,
        neg_targets,
        quad: QuadratureRule::gauss_legendre(nodes)?,
    })
}

/// Record one trajectory on the tape and return the running and terminal
/// nodes plus the parameter leaf handles. The running node is already scaled
/// by `dt`.
fn record_trajectory(
    tape: &mut Tape,
    game: &GameSpec,
    crowd: &CrowdCost,
    params: &PolicyParams,
    plan: &RolloutPlan,
    noise: &NoiseBundle,
    coeffs: &[crate::sim::StepCoeffs],
    trajectory: usize,
) -> Result<(Var, Var, crate::policy::PolicyVars)> {
    let grid = noise.grid;
    let p = grid.steps();
    let n = game.players;
    let d = game.state_dim;
    let k = game.action_dim;
    let horizon = grid.horizon();
    let dt = grid.dt();

    let vars = params.push_leaves(tape);
    let mut init = vec![0.0; n * d];
    game.initial.sample(noise.seed, trajectory, &mut init);
    let mut x = tape.leaf(&init);
    let mut y = tape.leaf(&vec![0.0; n * d]);

    let mut shift = vec![0.0; n * d];
    let mut running: Option<Var> = None;
    for l in 0..p {
        let t = grid.node(l);
        let t_leaf = tape.leaf_scalar(t / horizon);
        let input = tape.concat(&[t_leaf, x, y]);
        let actions = params.forward_tape(tape, &vars, input);
        if !tape.val(actions).iter().all(|v| v.is_finite()) {
            return Err(CoreError::NonFiniteAction {
                trajectory,
                step: l,
            });
        }
        // running integrand at (x, y, a)
        let f_l = crowd_f_tape(tape, crowd, n, d, k, x, y, actions, &plan.quad);
        running = Some(match running {
            Some(acc) => tape.add(acc, f_l),
            None => f_l,
        });
        // dynamics
        let mut parts = Vec::with_capacity(n);
        for i in 0..n {
            let a_i = tape.slice(actions, i * k, k);
            parts.push(tape.matvec_const(&plan.drift_dt[l][i], a_i, d, k));
        }
        let ba = tape.concat(&parts);
        y = tape.add(y, ba);
        let xa = tape.add(x, ba);
        coeffs[l].noise_shift(game, noise, trajectory, l, &mut shift);
        x = tape.add_const(xa, &shift);
    }
    let running = tape.scale(running.expect("at least one step"), dt);
    // terminal closed form: sum_i 2 c_i y_i.(x_i - z_i) - c_i |y_i|^2
    let mut terminal: Option<Var> = None;
    for i in 0..n {
        let xi = tape.slice(x, i * d, d);
        let yi = tape.slice(y, i * d, d);
        let di = tape.add_const(xi, &plan.neg_targets[i]);
        let dotv = tape.dot(yi, di);
        let t1 = tape.scale(dotv, 2.0 * crowd.terminal_weights[i]);
        let ysq = tape.square(yi);
        let ysum = tape.sum(ysq);
        let t2 = tape.scale(ysum, -crowd.terminal_weights[i]);
        let gi = tape.add(t1, t2);
        terminal = Some(match terminal {
            Some(acc) => tape.add(acc, gi),
            None => gi,
        });
    }
    let terminal = terminal.expect("at least one player");
    Ok((running, terminal, vars))
}

/// Differentiable crowd running integrand on the tape; mirrors the closed
/// forms of the plain evaluator.
fn crowd_f_tape(
    tape: &mut Tape,
    crowd: &CrowdCost,
    n: usize,
    d: usize,
    k: usize,
    x: Var,
    y: Var,
    actions: Var,
    quad: &QuadratureRule,
) -> Var {
    let mut acc: Option<Var> = None;
    let push = |tape: &mut Tape, acc: &mut Option<Var>, v: Var| {
        *acc = Some(match acc.take() {
            Some(a) => tape.add(a, v),
            None => v,
        });
    };
    // control part: (w_i/2) |a_i|^2
    for i in 0..n {
        let w = crowd.control_weights[i];
        if w == 0.0 {
            continue;
        }
        let a_i = tape.slice(actions, i * k, k);
        let sq = tape.square(a_i);
        let s = tape.sum(sq);
        let term = tape.scale(s, 0.5 * w);
        push(tape, &mut acc, term);
    }
    // kernel part per unordered pair
    let scale = CrowdCost::pair_scale(n);
    if scale > 0.0 {
        let xs: Vec<Var> = (0..n).map(|i| tape.slice(x, i * d, d)).collect();
        let ys: Vec<Var> = (0..n).map(|i| tape.slice(y, i * d, d)).collect();
        for i in 0..n {
            for j in i + 1..n {
                let qij = crowd.q(n, i, j);
                let qji = crowd.q(n, j, i);
                if qij == 0.0 && qji == 0.0 {
                    continue;
                }
                let z = tape.sub(xs[i], xs[j]);
                let w = tape.sub(ys[i], ys[j]);
                let ui = tape.scale(ys[i], qij * scale);
                let uj = tape.scale(ys[j], qji * scale);
                let u = tape.sub(ui, uj);
                match crowd.kernel {
                    Kernel::Quadratic => {
                        let half_w = tape.scale(w, 0.5);
                        let v = tape.sub(z, half_w);
                        let term = tape.dot(u, v);
                        push(tape, &mut acc, term);
                    }
                    Kernel::Gaussian { amplitude, rate } => {
                        for (&r, &wq) in quad.nodes.iter().zip(quad.weights.iter()) {
                            let sw = tape.scale(w, 1.0 - r);
                            let v = tape.sub(z, sw);
                            let vsq = tape.square(v);
                            let s = tape.sum(vsq);
                            let se = tape.scale(s, -rate);
                            let e = tape.exp(se);
                            let dotv = tape.dot(u, v);
                            let prod = tape.mul(e, dotv);
                            let term = tape.scale(prod, -2.0 * amplitude * rate * wq);
                            push(tape, &mut acc, term);
                        }
                    }
                    Kernel::SmoothedIndicator { .. } => {
                        unreachable!("screened by trainable_cost")
                    }
                }
            }
        }
    }
    match acc {
        Some(v) => v,
        None => tape.leaf_scalar(0.0),
    }
}

struct BatchEval {
    value: PotentialValue,
    gradient: Option<Vec<f64>>,
}

fn run_batch(
    game: &GameSpec,
    crowd: &CrowdCost,
    params: &PolicyParams,
    plan: &RolloutPlan,
    noise: &NoiseBundle,
    want_gradient: bool,
) -> std::result::Result<BatchEval, CoreError> {
    let coeffs = step_coefficients(game, &noise.grid);
    let param_len = params.data.len();
    let per: Vec<std::result::Result<(f64, f64, Option<Vec<f64>>), CoreError>> = (0..noise
        .trajectories)
        .into_par_iter()
        .map_init(Tape::new, |tape, m| {
            tape.clear();
            let (running, terminal, vars) =
                record_trajectory(tape, game, crowd, params, plan, noise, &coeffs, m)?;
            let phi = tape.add(running, terminal);
            let run_v = tape.scalar(running);
            let term_v = tape.scalar(terminal);
            let grad = if want_gradient {
                tape.backward(phi)?;
                let mut g = vec![0.0; param_len];
                params.gradient_from(tape, &vars, &mut g);
                Some(g)
            } else {
                None
            };
            Ok((run_v, term_v, grad))
        })
        .collect();

    let m = noise.trajectories as f64;
    let mut totals = Vec::with_capacity(noise.trajectories);
    let mut run_mean = 0.0;
    let mut term_mean = 0.0;
    let mut grad_mean = if want_gradient {
        Some(vec![0.0; param_len])
    } else {
        None
    };
    for r in per {
        let (run, term, grad) = r?;
        run_mean += run;
        term_mean += term;
        totals.push(run + term);
        if let (Some(acc), Some(g)) = (grad_mean.as_mut(), grad) {
            for (a, v) in acc.iter_mut().zip(g.iter()) {
                *a += v;
            }
        }
    }
    run_mean /= m;
    term_mean /= m;
    if let Some(acc) = grad_mean.as_mut() {
        for v in acc.iter_mut() {
            *v /= m;
        }
    }
    let mean_total = run_mean + term_mean;
    let std_error = if noise.trajectories > 1 {
        let var = totals
            .iter()
            .map(|t| (t - mean_total) * (t - mean_total))
            .sum::<f64>()
            / (m - 1.0);
        (var / m).sqrt()
    } else {
        0.0
    };
    Ok(BatchEval {
        value: PotentialValue {
            value: run_mean + term_mean,
            running: run_mean,
            terminal: term_mean,
            std_error,
        },
        gradient: grad_mean,
    })
}

/// Evaluate the potential of a policy on a fixed noise bundle through the
/// same code path the trainer logs, so values reproduce bit-exactly.
pub fn evaluate_policy(
    game: &GameSpec,
    params: &PolicyParams,
    noise: &NoiseBundle,
    quadrature_nodes: usize,
) -> Result<PotentialValue> {
    let crowd = trainable_cost(game)?;
    let plan = rollout_plan(game, crowd, &noise.grid, quadrature_nodes)?;
    let eval = run_batch(game, crowd, params, &plan, noise, false)?;
    Ok(eval.value)
}

/// Empirical potential and its full parameter gradient, backpropagated
/// through the unrolled state/sensitivity recursion.
pub fn potential_gradient(
    game: &GameSpec,
    params: &PolicyParams,
    noise: &NoiseBundle,
    quadrature_nodes: usize,
) -> Result<(PotentialValue, Vec<f64>)> {
    let crowd = trainable_cost(game)?;
    let plan = rollout_plan(game, crowd, &noise.grid, quadrature_nodes)?;
    let eval = run_batch(game, crowd, params, &plan, noise, true)?;
    Ok((eval.value, eval.gradient.expect("gradient requested")))
}

/// Train a joint policy by gradient descent on the empirical potential.
pub fn train(game: &GameSpec, config: &TrainConfig) -> std::result::Result<(PolicyParams, TrainLog), TrainError> {
    train_with(game, config, |_, _| {})
}

/// As `train`, invoking `observer` after every iteration with the record and
/// the just-updated parameters (for streaming logs and checkpointing).
pub fn train_with<F: FnMut(&TrainRecord, &PolicyParams)>(
    game: &GameSpec,
    config: &TrainConfig,
    mut observer: F,
) -> std::result::Result<(PolicyParams, TrainLog), TrainError> {
    config.validate().map_err(TrainError::Core)?;
    game.validate(&config.grid).map_err(TrainError::Core)?;
    let crowd = trainable_cost(game).map_err(TrainError::Core)?;
    let plan = rollout_plan(game, crowd, &config.grid, config.quadrature_nodes)
        .map_err(TrainError::Core)?;
    let policy_config = PolicyConfig::for_game(game.players, game.state_dim, game.action_dim);
    let mut params = PolicyParams::init(policy_config, config.seed);
    let mut adam = AdamState::new(params.data.len(), config.learning_rate);
    let mut scheduler = PlateauScheduler::new(config.plateau, config.learning_rate);
    let mut log = TrainLog::default();

    let fixed_noise = match config.resample {
        Resample::Fixed => Some(
            sample_noise(game, &config.grid, config.batch, config.seed)
                .map_err(TrainError::Core)?,
        ),
        Resample::Fresh => None,
    };

    let start = std::time::Instant::now();
    for iter in 0..config.iterations {
        let owned;
        let noise = match &fixed_noise {
            Some(b) => b,
            None => {
                let iter_seed = Stream::new(config.seed)
                    .with(stream::ITERATION)
                    .with(iter as u64)
                    .bits();
                owned = sample_noise(game, &config.grid, config.batch, iter_seed)
                    .map_err(TrainError::Core)?;
                &owned
            }
        };
        let abort = |log: TrainLog, params: PolicyParams| TrainError::NonFiniteLoss {
            iteration: iter,
            params: Box::new(params),
            log,
        };
        let eval = match run_batch(game, crowd, &params, &plan, noise, true) {
            Ok(e) => e,
            Err(CoreError::NonFiniteAction { .. }) => {
                return Err(abort(log, params));
            }
            Err(e) => return Err(TrainError::Core(e)),
        };
        let mut grad = eval.gradient.expect("gradient requested");
        if !eval.value.value.is_finite() || !grad.iter().all(|g| g.is_finite()) {
            return Err(abort(log, params));
        }
        if let Some(clip) = config.grad_clip {
            let norm = crate::linalg::norm2(&grad);
            if norm > clip {
                let s = clip / norm;
                for g in grad.iter_mut() {
                    *g *= s;
                }
            }
        }
        let record = TrainRecord {
            iteration: iter,
            potential: eval.value.value,
            running: eval.value.running,
            terminal: eval.value.terminal,
            std_error: eval.value.std_error,
            grad_norm: crate::linalg::norm2(&grad),
            learning_rate: adam.learning_rate,
            wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        adam_step(&mut params.data, &grad, &mut adam);
        adam.learning_rate = scheduler.observe(eval.value.value);
        observer(&record, &params);
        log.records.push(record);
    }
    Ok((params, log))
}
