//! Shared game builders for the integration tests.
// Each test binary compiles this module separately and uses its own subset.
#![allow(dead_code)]

use apg_core::linalg::Mat;
use apg_core::*;

pub struct CrowdGameSetup {
    pub players: usize,
    pub state_dim: usize,
    pub kernel: Kernel,
    /// Row-major interaction table, zero diagonal.
    pub interaction: Vec<f64>,
    pub control_weight: f64,
    pub terminal_weight: f64,
    /// Flat N*d targets.
    pub targets: Vec<f64>,
    /// Flat N*d initial positions.
    pub x0: Vec<f64>,
    /// Per-player diffusion scale on the player's own Brownian block.
    pub sigma: Vec<f64>,
    /// Per-player idiosyncratic jump loading scale (per-coordinate sources).
    pub jump_scale: Vec<f64>,
    /// Per-player jump intensity.
    pub jump_intensity: Vec<f64>,
    /// Common jump loading scale and intensity (per-coordinate sources).
    pub common_jump: f64,
    pub common_intensity: f64,
    pub control_cap: f64,
}

impl CrowdGameSetup {
    pub fn deterministic(players: usize, state_dim: usize, kernel: Kernel) -> Self {
        let mut interaction = vec![1.0; players * players];
        for i in 0..players {
            interaction[i * players + i] = 0.0;
        }
        // spread initial positions so kernel derivatives are non-trivial
        let x0: Vec<f64> = (0..players * state_dim)
            .map(|c| 0.35 * ((c as f64 * 0.713).sin()))
            .collect();
        let targets: Vec<f64> = (0..players * state_dim)
            .map(|c| 0.5 * ((c as f64 * 1.37).cos()))
            .collect();
        CrowdGameSetup {
            players,
            state_dim,
            kernel,
            interaction,
            control_weight: 0.1,
            terminal_weight: 1.0,
            targets,
            x0,
            sigma: vec![0.0; players],
            jump_scale: vec![0.0; players],
            jump_intensity: vec![0.2; players],
            common_jump: 0.0,
            common_intensity: 0.25,
            control_cap: 1.0,
        }
    }

    pub fn with_noise(mut self, sigma: f64, jump: f64) -> Self {
        self.sigma = vec![sigma; self.players];
        self.jump_scale = vec![jump; self.players];
        self
    }

    pub fn with_interaction(mut self, q: Vec<f64>) -> Self {
        assert_eq!(q.len(), self.players * self.players);
        self.interaction = q;
        self
    }

    pub fn build(&self) -> GameSpec {
        let n = self.players;
        let d = self.state_dim;
        let brownian_dim = n * d;
        let drift = (0..n)
            .map(|_| TimeMatrix::constant(Mat::identity(d)))
            .collect();
        let diffusion = (0..n)
            .map(|i| {
                let mut m = Mat::zeros(d, brownian_dim);
                for c in 0..d {
                    *m.at_mut(c, i * d + c) = self.sigma[i];
                }
                TimeMatrix::constant(m)
            })
            .collect();
        let mut jumps = Vec::new();
        // common sources, one per coordinate
        for c in 0..d {
            let mut loading = vec![0.0; d];
            loading[c] = self.common_jump;
            jumps.push(JumpSource {
                intensity: self.common_intensity,
                loadings: (0..n).map(|_| TimeVec::Constant(loading.clone())).collect(),
                size: JumpSizeModel::Unit,
            });
        }
        // idiosyncratic sources, one per player and coordinate
        for i in 0..n {
            for c in 0..d {
                let mut loading = vec![0.0; d];
                loading[c] = self.jump_scale[i];
                jumps.push(JumpSource {
                    intensity: self.jump_intensity[i],
                    loadings: (0..n)
                        .map(|j| {
                            TimeVec::Constant(if j == i {
                                loading.clone()
                            } else {
                                vec![0.0; d]
                            })
                        })
                        .collect(),
                    size: JumpSizeModel::Unit,
                });
            }
        }
        // drop sources that can never fire or never move anything
        let jumps: Vec<JumpSource> = jumps
            .into_iter()
            .filter(|s| {
                s.intensity > 0.0
                    && s.loadings.iter().any(|l| match l {
                        TimeVec::Constant(v) => v.iter().any(|x| *x != 0.0),
                        TimeVec::Varying { .. } => true,
                    })
            })
            .collect();
        GameSpec {
            players: n,
            state_dim: d,
            action_dim: d,
            brownian_dim,
            drift,
            diffusion,
            jumps,
            initial: InitialStates::Fixed(self.x0.clone()),
            cost: CostModel::Crowd(CrowdCost {
                control_weights: vec![self.control_weight; n],
                kernel: self.kernel,
                interaction: self.interaction.clone(),
                terminal_weights: vec![self.terminal_weight; n],
                targets: self.targets.clone(),
            }),
            control_cap: self.control_cap,
        }
    }
}

/// Open-loop controls with deterministic pseudo-random entries.
pub fn random_controls(
    trajectories: usize,
    grid: &TimeGrid,
    width: usize,
    scale: f64,
    seed: u64,
) -> ControlArray {
    let mut c = ControlArray::zeros(trajectories, grid.steps(), width);
    for (i, v) in c.data.iter_mut().enumerate() {
        *v = scale
            * (2.0
                * apg_core::rng::Stream::new(seed)
                    .with(0x7E57)
                    .with(i as u64)
                    .uniform()
                - 1.0);
    }
    c
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
