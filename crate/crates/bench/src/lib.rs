//! Shared fixtures for the pipeline benchmarks.

use apg_core::linalg::Mat;
use apg_core::*;

/// Four-player crowd game in the shape of the shipped experiments.
pub fn bench_game(kernel: Kernel) -> GameSpec {
    let n = 4;
    let d = 2;
    let mut q = vec![1.0; n * n];
    for i in 0..n {
        q[i * n + i] = 0.0;
    }
    GameSpec {
        players: n,
        state_dim: d,
        action_dim: d,
        brownian_dim: n * d,
        drift: (0..n)
            .map(|_| TimeMatrix::constant(Mat::identity(d)))
            .collect(),
        diffusion: (0..n)
            .map(|i| {
                let mut m = Mat::zeros(d, n * d);
                for c in 0..d {
                    *m.at_mut(c, i * d + c) = 0.05;
                }
                TimeMatrix::constant(m)
            })
            .collect(),
        jumps: (0..n)
            .map(|i| JumpSource {
                intensity: 0.2,
                loadings: (0..n)
                    .map(|j| {
                        TimeVec::Constant(if i == j { vec![0.1, 0.1] } else { vec![0.0, 0.0] })
                    })
                    .collect(),
                size: JumpSizeModel::Unit,
            })
            .collect(),
        initial: InitialStates::Fixed(vec![0.0; n * d]),
        cost: CostModel::Crowd(CrowdCost {
            control_weights: vec![0.1; n],
            kernel,
            interaction: q,
            terminal_weights: vec![1.0; n],
            targets: vec![0.5; n * d],
        }),
        control_cap: 10.0,
    }
}
