//! Euler scheme for the joint state/sensitivity system under a feedback
//! policy or externally supplied open-loop controls.
//!
//! Per step and player: the state picks up the drift load `b_i(t_l) a_i dt`,
//! the Brownian increment through `sigma_i(t_l)`, and the compensated jump
//! contribution of every source (all jumps inside a step aggregate at its
//! right endpoint, with loadings evaluated at the left endpoint). The
//! sensitivity accumulates only the drift load, so it is exactly the
//! derivative of the state with respect to the player's own control path.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::game::GameSpec;
use crate::grid::TimeGrid;
use crate::linalg::Mat;
use crate::noise::NoiseBundle;

/// Source of actions for the simulator: maps `(step, t, X, Y)` to the joint
/// action vector.
pub trait ActionSource: Sync {
    fn actions(&self, step: usize, t: f64, x: &[f64], y: &[f64], out: &mut [f64]);
}

/// The zero control.
pub struct ZeroPolicy;

impl ActionSource for ZeroPolicy {
    fn actions(&self, _step: usize, _t: f64, _x: &[f64], _y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

impl<F> ActionSource for F
where
    F: Fn(usize, f64, &[f64], &[f64], &mut [f64]) + Sync,
{
    fn actions(&self, step: usize, t: f64, x: &[f64], y: &[f64], out: &mut [f64]) {
        self(step, t, x, y, out)
    }
}

/// Open-loop control values on the grid: `[M][P][width]`, where `width` is
/// the joint action dimension (or a per-player slice for deviations). A
/// single-trajectory array broadcasts across the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlArray {
    pub trajectories: usize,
    pub steps: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl ControlArray {
    pub fn zeros(trajectories: usize, steps: usize, width: usize) -> Self {
        ControlArray {
            trajectories,
            steps,
            width,
            data: vec![0.0; trajectories * steps * width],
        }
    }

    #[inline]
    pub fn row(&self, trajectory: usize, step: usize) -> &[f64] {
        let t = if self.trajectories == 1 { 0 } else { trajectory };
        let base = (t * self.steps + step) * self.width;
        &self.data[base..base + self.width]
    }

    #[inline]
    pub fn row_mut(&mut self, trajectory: usize, step: usize) -> &mut [f64] {
        let base = (trajectory * self.steps + step) * self.width;
        &mut self.data[base..base + self.width]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        ControlArray {
            trajectories: self.trajectories,
            steps: self.steps,
            width: self.width,
            data: self.data.iter().map(|v| factor * v).collect(),
        }
    }

    /// Discrete squared control norm `sum_l |u_l|^2 dt` per trajectory;
    /// returns the maximum over the batch.
    pub fn max_h2_norm(&self, grid: &TimeGrid) -> f64 {
        let dt = grid.dt();
        (0..self.trajectories)
            .map(|m| {
                (0..self.steps)
                    .map(|l| self.row(m, l).iter().map(|v| v * v).sum::<f64>() * dt)
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Replace one player's slice in a joint control array.
    pub fn with_player_slice(
        &self,
        player: usize,
        action_dim: usize,
        values: &ControlArray,
    ) -> Self {
        assert_eq!(values.width, action_dim);
        let mut out = self.clone();
        for m in 0..out.trajectories {
            for l in 0..out.steps {
                let src = values.row(m, l).to_vec();
                out.row_mut(m, l)[player * action_dim..(player + 1) * action_dim]
                    .copy_from_slice(&src);
            }
        }
        out
    }
}

/// Simulated batch: joint states, sensitivities and the actions that drove
/// them, on a shared time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub grid: TimeGrid,
    pub trajectories: usize,
    pub players: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    pub noise_seed: u64,
    states: Vec<f64>,
    sensitivities: Vec<f64>,
    actions: Vec<f64>,
}

impl PathBatch {
    fn state_stride(&self) -> usize {
        (self.grid.steps() + 1) * self.players * self.state_dim
    }

    fn action_stride(&self) -> usize {
        self.grid.steps() * self.players * self.action_dim
    }

    #[inline]
    pub fn state(&self, trajectory: usize, step: usize) -> &[f64] {
        let w = self.players * self.state_dim;
        let base = trajectory * self.state_stride() + step * w;
        &self.states[base..base + w]
    }

    #[inline]
    pub fn sensitivity(&self, trajectory: usize, step: usize) -> &[f64] {
        let w = self.players * self.state_dim;
        let base = trajectory * self.state_stride() + step * w;
        &self.sensitivities[base..base + w]
    }

    #[inline]
    pub fn actions(&self, trajectory: usize, step: usize) -> &[f64] {
        let w = self.players * self.action_dim;
        let base = trajectory * self.action_stride() + step * w;
        &self.actions[base..base + w]
    }

    /// Stored actions as an open-loop control array.
    pub fn actions_array(&self) -> ControlArray {
        ControlArray {
            trajectories: self.trajectories,
            steps: self.grid.steps(),
            width: self.players * self.action_dim,
            data: self.actions.clone(),
        }
    }

    /// Mean joint state per grid node over the batch, `[P+1][N*d]`.
    pub fn mean_states(&self) -> Vec<Vec<f64>> {
        let w = self.players * self.state_dim;
        let mut out = vec![vec![0.0; w]; self.grid.steps() + 1];
        for m in 0..self.trajectories {
            for (l, row) in out.iter_mut().enumerate() {
                for (acc, v) in row.iter_mut().zip(self.state(m, l).iter()) {
                    *acc += v;
                }
            }
        }
        let inv = 1.0 / self.trajectories as f64;
        for row in out.iter_mut() {
            for v in row.iter_mut() {
                *v *= inv;
            }
        }
        out
    }

    /// CSV export: one row per (trajectory, step), with time, the flattened
    /// state and sensitivity, and the actions taken at that step (empty on
    /// the final row, which has no action).
    pub fn to_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let d = self.state_dim;
        let k = self.action_dim;
        write!(out, "trajectory,step,t")?;
        for i in 0..self.players {
            for c in 0..d {
                write!(out, ",x_{i}_{c}")?;
            }
        }
        for i in 0..self.players {
            for c in 0..d {
                write!(out, ",y_{i}_{c}")?;
            }
        }
        for i in 0..self.players {
            for c in 0..k {
                write!(out, ",a_{i}_{c}")?;
            }
        }
        writeln!(out)?;
        for m in 0..self.trajectories {
            for l in 0..=self.grid.steps() {
                write!(out, "{m},{l},{}", self.grid.node(l))?;
                for v in self.state(m, l) {
                    write!(out, ",{v}")?;
                }
                for v in self.sensitivity(m, l) {
                    write!(out, ",{v}")?;
                }
                if l < self.grid.steps() {
                    for v in self.actions(m, l) {
                        write!(out, ",{v}")?;
                    }
                } else {
                    for _ in 0..self.players * k {
                        write!(out, ",")?;
                    }
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }

    const MAGIC: &'static [u8; 8] = b"APGPATH1";

    /// Compact binary dump for checkpoint/resume.
    pub fn write_binary<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(Self::MAGIC)?;
        for v in [
            self.trajectories as u64,
            self.grid.steps() as u64,
            self.players as u64,
            self.state_dim as u64,
            self.action_dim as u64,
            self.noise_seed,
        ] {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&self.grid.horizon().to_le_bytes())?;
        for arr in [&self.states, &self.sensitivities, &self.actions] {
            for v in arr.iter() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(input: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(CoreError::Invalid("not a path batch file".into()));
        }
        let mut u64buf = [0u8; 8];
        let mut next_u64 = |input: &mut R| -> Result<u64> {
            input.read_exact(&mut u64buf)?;
            Ok(u64::from_le_bytes(u64buf))
        };
        let trajectories = next_u64(input)? as usize;
        let steps = next_u64(input)? as usize;
        let players = next_u64(input)? as usize;
        let state_dim = next_u64(input)? as usize;
        let action_dim = next_u64(input)? as usize;
        let noise_seed = next_u64(input)?;
        let mut f64buf = [0u8; 8];
        input.read_exact(&mut f64buf)?;
        let horizon = f64::from_le_bytes(f64buf);
        let grid = TimeGrid::new(horizon, steps)?;
        let state_len = trajectories * (steps + 1) * players * state_dim;
        let action_len = trajectories * steps * players * action_dim;
        let mut read_arr = |input: &mut R, len: usize| -> Result<Vec<f64>> {
            let mut v = Vec::with_capacity(len);
            for _ in 0..len {
                input.read_exact(&mut f64buf)?;
                v.push(f64::from_le_bytes(f64buf));
            }
            Ok(v)
        };
        let states = read_arr(input, state_len)?;
        let sensitivities = read_arr(input, state_len)?;
        let actions = read_arr(input, action_len)?;
        Ok(PathBatch {
            grid,
            trajectories,
            players,
            state_dim,
            action_dim,
            noise_seed,
            states,
            sensitivities,
            actions,
        })
    }
}

/// Per-step coefficient tables, evaluated once per grid node.
pub(crate) struct StepCoeffs {
    pub(crate) drift: Vec<Mat>,
    pub(crate) diffusion: Vec<Mat>,
    /// `loadings[source]` is the stacked joint loading, `[N * d]`.
    pub(crate) loadings: Vec<Vec<f64>>,
    /// Joint compensator drift per step: `sum_j lambda_j E[size] gamma_j dt`.
    pub(crate) compensator: Vec<f64>,
}

impl StepCoeffs {
    /// Control-independent shift of the joint state over one step: Brownian
    /// load plus compensated jumps.
    pub(crate) fn noise_shift(
        &self,
        game: &GameSpec,
        noise: &NoiseBundle,
        trajectory: usize,
        step: usize,
        out: &mut [f64],
    ) {
        out.fill(0.0);
        let d = game.state_dim;
        let dw = noise.brownian(trajectory, step);
        for (i, diff) in self.diffusion.iter().enumerate() {
            diff.matvec_add(dw, &mut out[i * d..(i + 1) * d]);
        }
        for (j, joint) in self.loadings.iter().enumerate() {
            let sz = noise.jump_size_sum(game, trajectory, step, j);
            if sz != 0.0 {
                for (o, g) in out.iter_mut().zip(joint.iter()) {
                    *o += sz * g;
                }
            }
        }
        for (o, c) in out.iter_mut().zip(self.compensator.iter()) {
            *o -= c;
        }
    }
}

pub(crate) fn step_coefficients(game: &GameSpec, grid: &TimeGrid) -> Vec<StepCoeffs> {
    let dt = grid.dt();
    let jd = game.joint_state_dim();
    (0..grid.steps())
        .map(|l| {
            let t = grid.node(l);
            let drift: Vec<Mat> = game.drift.iter().map(|b| b.eval(t).into_owned()).collect();
            let diffusion: Vec<Mat> = game
                .diffusion
                .iter()
                .map(|s| s.eval(t).into_owned())
                .collect();
            let mut loadings = Vec::with_capacity(game.jumps.len());
            let mut compensator = vec![0.0; jd];
            for src in &game.jumps {
                let mut joint = vec![0.0; jd];
                for (i, ld) in src.loadings.iter().enumerate() {
                    let v = ld.eval(t);
                    joint[i * game.state_dim..(i + 1) * game.state_dim].copy_from_slice(&v);
                }
                let rate = src.intensity * src.size.mean() * dt;
                for (c, g) in compensator.iter_mut().zip(joint.iter()) {
                    *c += rate * g;
                }
                loadings.push(joint);
            }
            StepCoeffs {
                drift,
                diffusion,
                loadings,
                compensator,
            }
        })
        .collect()
}

enum ActionProvider<'a> {
    Policy(&'a dyn ActionSource),
    OpenLoop(&'a ControlArray),
}

fn run_scheme(
    game: &GameSpec,
    provider: ActionProvider<'_>,
    noise: &NoiseBundle,
) -> Result<PathBatch> {
    if noise.brownian_dim != game.brownian_dim {
        return Err(CoreError::DimensionMismatch {
            context: "noise brownian dimension",
            expected: game.brownian_dim,
            actual: noise.brownian_dim,
        });
    }
    if noise.jump_sources != game.jumps.len() {
        return Err(CoreError::DimensionMismatch {
            context: "noise jump sources",
            expected: game.jumps.len(),
            actual: noise.jump_sources,
        });
    }
    if let ActionProvider::OpenLoop(c) = &provider {
        if c.width != game.joint_action_dim() {
            return Err(CoreError::DimensionMismatch {
                context: "open-loop control width",
                expected: game.joint_action_dim(),
                actual: c.width,
            });
        }
        if c.steps != noise.grid.steps() {
            return Err(CoreError::DimensionMismatch {
                context: "open-loop control steps",
                expected: noise.grid.steps(),
                actual: c.steps,
            });
        }
        if c.trajectories != 1 && c.trajectories != noise.trajectories {
            return Err(CoreError::DimensionMismatch {
                context: "open-loop control trajectories",
                expected: noise.trajectories,
                actual: c.trajectories,
            });
        }
        if !c.data.iter().all(|v| v.is_finite()) {
            return Err(CoreError::NonFiniteInput {
                context: "open-loop controls",
            });
        }
    }

    let grid = noise.grid;
    let p = grid.steps();
    let m_traj = noise.trajectories;
    let n = game.players;
    let d = game.state_dim;
    let k = game.action_dim;
    let jd = n * d;
    let ja = n * k;
    let dt = grid.dt();
    let coeffs = step_coefficients(game, &grid);

    let mut batch = PathBatch {
        grid,
        trajectories: m_traj,
        players: n,
        state_dim: d,
        action_dim: k,
        noise_seed: noise.seed,
        states: vec![0.0; m_traj * (p + 1) * jd],
        sensitivities: vec![0.0; m_traj * (p + 1) * jd],
        actions: vec![0.0; m_traj * p * ja],
    };
    let state_stride = (p + 1) * jd;
    let action_stride = p * ja;
    let provider = &provider;

    batch
        .states
        .par_chunks_mut(state_stride)
        .zip(batch.sensitivities.par_chunks_mut(state_stride))
        .zip(batch.actions.par_chunks_mut(action_stride))
        .enumerate()
        .try_for_each(|(m, ((xs, ys), acts))| -> Result<()> {
            game.initial.sample(noise.seed, m, &mut xs[0..jd]);
            for l in 0..p {
                let t = grid.node(l);
                let co = &coeffs[l];
                let (xcur, xnext) = {
                    let (head, tail) = xs.split_at_mut((l + 1) * jd);
                    (&head[l * jd..], &mut tail[..jd])
                };
                let (ycur, ynext) = {
                    let (head, tail) = ys.split_at_mut((l + 1) * jd);
                    (&head[l * jd..], &mut tail[..jd])
                };
                let arow = &mut acts[l * ja..(l + 1) * ja];
                match provider {
                    ActionProvider::Policy(pol) => pol.actions(l, t, xcur, ycur, arow),
                    ActionProvider::OpenLoop(c) => arow.copy_from_slice(c.row(m, l)),
                }
                if !arow.iter().all(|v| v.is_finite()) {
                    return Err(CoreError::NonFiniteAction {
                        trajectory: m,
                        step: l,
                    });
                }
                let dw = noise.brownian(m, l);
                for i in 0..n {
                    let xi = &xcur[i * d..(i + 1) * d];
                    let yi = &ycur[i * d..(i + 1) * d];
                    let ai = &arow[i * k..(i + 1) * k];
                    let xo = &mut xnext[i * d..(i + 1) * d];
                    // drift load b_i(t) a_i dt, shared by state and sensitivity
                    let mut ba = vec![0.0; d];
                    co.drift[i].matvec_add(ai, &mut ba);
                    for v in ba.iter_mut() {
                        *v *= dt;
                    }
                    for c in 0..d {
                        xo[c] = xi[c] + ba[c];
                    }
                    co.diffusion[i].matvec_add(dw, xo);
                    let yo = &mut ynext[i * d..(i + 1) * d];
                    for c in 0..d {
                        yo[c] = yi[c] + ba[c];
                    }
                }
                // compensated jumps, aggregated at the step end
                for (j, joint) in co.loadings.iter().enumerate() {
                    let sz = noise.jump_size_sum(game, m, l, j);
                    if sz != 0.0 {
                        for (xv, g) in xnext.iter_mut().zip(joint.iter()) {
                            *xv += sz * g;
                        }
                    }
                }
                for (xv, c) in xnext.iter_mut().zip(co.compensator.iter()) {
                    *xv -= c;
                }
            }
            Ok(())
        })?;

    Ok(batch)
}

/// The control-independent part of one scheme step for one trajectory: the
/// Brownian load plus compensated jump contribution of the joint state, as
/// applied by the simulator.
pub fn control_independent_shift(
    game: &GameSpec,
    noise: &NoiseBundle,
    trajectory: usize,
    step: usize,
) -> Vec<f64> {
    let coeffs = step_coefficients(game, &noise.grid);
    let mut out = vec![0.0; game.joint_state_dim()];
    coeffs[step].noise_shift(game, noise, trajectory, step, &mut out);
    out
}

/// Simulate the batch under a feedback policy.
pub fn simulate(
    game: &GameSpec,
    policy: &dyn ActionSource,
    noise: &NoiseBundle,
) -> Result<PathBatch> {
    run_scheme(game, ActionProvider::Policy(policy), noise)
}

/// Simulate the batch under externally supplied open-loop controls.
pub fn simulate_open_loop(
    game: &GameSpec,
    controls: &ControlArray,
    noise: &NoiseBundle,
) -> Result<PathBatch> {
    run_scheme(game, ActionProvider::OpenLoop(controls), noise)
}
