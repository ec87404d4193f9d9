//! Shipped experiment presets: a four-player crowd-aversion game, two
//! flocking variants, a common-jump flocking game, and a single-player
//! tracking instance with a dynamic-programming reference solution.

use apg_core::linalg::Mat;
use apg_core::*;

/// A fully specified experiment: game plus training configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub game: GameSpec,
    pub train: TrainConfig,
}

pub const PRESET_NAMES: [&str; 5] = [
    "aversion",
    "flocking-uniform",
    "flocking-groups",
    "flocking-common-jump",
    "lqr-oracle",
];

/// Look up a preset by name.
pub fn preset(name: &str) -> Option<Scenario> {
    match name {
        "aversion" => Some(aversion()),
        "flocking-uniform" => Some(flocking_uniform()),
        "flocking-groups" => Some(flocking_groups()),
        "flocking-common-jump" => Some(flocking_common_jump()),
        "lqr-oracle" => Some(lqr_oracle()),
        _ => None,
    }
}

const PLAYERS: usize = 4;
const DIM: usize = 2;

/// Shared four-player scaffold: unit drift, per-player diffusion scales,
/// per-coordinate idiosyncratic and common jump sources.
fn four_player_game(
    sigma_scale: f64,
    idio_jump: f64,
    common_jump: f64,
    kernel: Kernel,
    interaction: Vec<f64>,
    control_weight: f64,
    terminal_weight: f64,
    targets: Vec<f64>,
) -> GameSpec {
    let n = PLAYERS;
    let d = DIM;
    let brownian_dim = n * d;
    let drift = (0..n)
        .map(|_| TimeMatrix::constant(Mat::identity(d)))
        .collect();
    let diffusion = (0..n)
        .map(|i| {
            // sigma_i = scale * (i - 1) / N with 1-based player index
            let s = sigma_scale * i as f64 / n as f64;
            let mut m = Mat::zeros(d, brownian_dim);
            for c in 0..d {
                *m.at_mut(c, i * d + c) = s;
            }
            TimeMatrix::constant(m)
        })
        .collect();
    let mut jumps = Vec::new();
    // common sources (one per coordinate), intensity lambda_0 = 0.25
    for c in 0..d {
        let mut loading = vec![0.0; d];
        loading[c] = common_jump;
        jumps.push(JumpSource {
            intensity: 0.25,
            loadings: (0..n)
                .map(|_| TimeVec::Constant(loading.clone()))
                .collect(),
            size: JumpSizeModel::Unit,
        });
    }
    // idiosyncratic sources: lambda_1 = 0.3, lambda_i = 0.2 for i >= 2
    for i in 0..n {
        let lambda = if i == 0 { 0.3 } else { 0.2 };
        for c in 0..d {
            let mut loading = vec![0.0; d];
            loading[c] = idio_jump;
            jumps.push(JumpSource {
                intensity: lambda,
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
    GameSpec {
        players: n,
        state_dim: d,
        action_dim: d,
        brownian_dim,
        drift,
        diffusion,
        jumps,
        initial: InitialStates::Fixed(vec![0.0; n * d]),
        cost: CostModel::Crowd(CrowdCost {
            control_weights: vec![control_weight; n],
            kernel,
            interaction,
            terminal_weights: vec![terminal_weight; n],
            targets,
        }),
        control_cap: 10.0,
    }
}

fn uniform_interaction(n: usize) -> Vec<f64> {
    let mut q = vec![1.0; n * n];
    for i in 0..n {
        q[i * n + i] = 0.0;
    }
    q
}

fn default_train(seed: u64) -> TrainConfig {
    TrainConfig {
        iterations: 500,
        batch: 500,
        grid: TimeGrid::new(1.0, 50).expect("grid"),
        learning_rate: 1e-3,
        plateau: PlateauConfig::default(),
        seed,
        quadrature_nodes: 16,
        resample: Resample::Fresh,
        grad_clip: None,
    }
}

/// Crowd aversion with idiosyncratic noise: everyone starts at the origin
/// and heads for (0.5, 0.5) while a sharp Gaussian kernel penalizes
/// proximity.
pub fn aversion() -> Scenario {
    let targets = vec![0.5, 0.5].repeat(PLAYERS);
    Scenario {
        game: four_player_game(
            0.1,
            0.1,
            0.0,
            Kernel::Gaussian {
                amplitude: 100.0,
                rate: 100.0,
            },
            uniform_interaction(PLAYERS),
            0.1,
            1.0,
            targets,
        ),
        train: default_train(2025),
    }
}

fn flocking_targets() -> Vec<f64> {
    vec![0.25, 0.0, 0.0, 0.5, -0.5, 0.0, 0.0, -1.0]
}

/// Flocking toward distinct targets under uniform interaction.
pub fn flocking_uniform() -> Scenario {
    Scenario {
        game: four_player_game(
            0.1,
            0.1,
            0.0,
            Kernel::Quadratic,
            uniform_interaction(PLAYERS),
            0.1,
            40.0,
            flocking_targets(),
        ),
        train: default_train(2025),
    }
}

/// Flocking in two groups: players 2 and 3 coordinate, players 1 and 4
/// coordinate, no interaction across groups.
pub fn flocking_groups() -> Scenario {
    let n = PLAYERS;
    let mut q = vec![0.0; n * n];
    // groups {2, 3} and {1, 4} in 1-based labels
    for (a, b) in [(1usize, 2usize), (0, 3)] {
        q[a * n + b] = 1.0;
        q[b * n + a] = 1.0;
    }
    Scenario {
        game: four_player_game(
            0.1,
            0.1,
            0.0,
            Kernel::Quadratic,
            q,
            0.1,
            40.0,
            flocking_targets(),
        ),
        train: default_train(2025),
    }
}

/// Flocking driven purely by common jumps: no diffusion, no idiosyncratic
/// jumps, a shared jump source with loading 0.1 for every player.
pub fn flocking_common_jump() -> Scenario {
    Scenario {
        game: four_player_game(
            0.0,
            0.0,
            0.1,
            Kernel::Quadratic,
            uniform_interaction(PLAYERS),
            0.1,
            40.0,
            flocking_targets(),
        ),
        train: default_train(2025),
    }
}

/// Single-player deterministic tracking problem; its optimum is computable
/// by a Riccati recursion on the same grid, which makes it the trainer's
/// reference instance.
pub fn lqr_oracle() -> Scenario {
    let d = DIM;
    let game = GameSpec {
        players: 1,
        state_dim: d,
        action_dim: d,
        brownian_dim: d,
        drift: vec![TimeMatrix::constant(Mat::identity(d))],
        diffusion: vec![TimeMatrix::constant(Mat::zeros(d, d))],
        jumps: vec![],
        initial: InitialStates::Fixed(vec![0.0; d]),
        cost: CostModel::Crowd(CrowdCost {
            control_weights: vec![0.1],
            kernel: Kernel::Quadratic,
            interaction: vec![0.0],
            terminal_weights: vec![1.0],
            targets: vec![0.5, 0.5],
        }),
        control_cap: 10.0,
    };
    let mut train = default_train(2025);
    train.batch = 1;
    train.learning_rate = 1e-2;
    Scenario { game, train }
}
