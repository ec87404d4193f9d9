//! Pre-sampled driving noise for a batch of trajectories.
//!
//! Brownian increments and per-source jump counts are generated from the
//! counter scheme keyed on (seed, trajectory, step, channel), so the bundle
//! is a pure function of its inputs: regenerating any subset of trajectories,
//! serially or in parallel, reproduces the same bits.

use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::game::GameSpec;
use crate::grid::TimeGrid;
use crate::rng::{stream, Stream};

#[derive(Debug, Clone)]
pub struct NoiseBundle {
    pub seed: u64,
    pub grid: TimeGrid,
    pub trajectories: usize,
    pub brownian_dim: usize,
    pub jump_sources: usize,
    /// Brownian increments, `[M][P][n]`, each `~ N(0, dt)`.
    brownian: Vec<f64>,
    /// Jump counts per source, `[M][P][m]`.
    jump_counts: Vec<u32>,
}

impl NoiseBundle {
    #[inline]
    pub fn brownian(&self, trajectory: usize, step: usize) -> &[f64] {
        let base = (trajectory * self.grid.steps() + step) * self.brownian_dim;
        &self.brownian[base..base + self.brownian_dim]
    }

    #[inline]
    pub fn jump_counts(&self, trajectory: usize, step: usize) -> &[u32] {
        let base = (trajectory * self.grid.steps() + step) * self.jump_sources;
        &self.jump_counts[base..base + self.jump_sources]
    }

    /// Total jump-size contribution of source `j` in one step: the number of
    /// jumps for the unit size model, or the sum of sampled sizes.
    pub fn jump_size_sum(
        &self,
        game: &GameSpec,
        trajectory: usize,
        step: usize,
        source: usize,
    ) -> f64 {
        let count = self.jump_counts(trajectory, step)[source];
        match &game.jumps[source].size {
            crate::game::JumpSizeModel::Unit => count as f64,
            crate::game::JumpSizeModel::Sampled { sampler, .. } => {
                let mut total = 0.0;
                for k in 0..count {
                    let s = Stream::new(self.seed)
                        .with(stream::JUMP_SIZE)
                        .with(trajectory as u64)
                        .with(step as u64)
                        .with(source as u64)
                        .with(k as u64);
                    total += sampler(s);
                }
                total
            }
        }
    }
}

/// Sample a noise bundle for `trajectories` paths of the game on the grid.
pub fn sample_noise(
    game: &GameSpec,
    grid: &TimeGrid,
    trajectories: usize,
    seed: u64,
) -> Result<NoiseBundle> {
    if trajectories == 0 {
        return Err(CoreError::EmptyBatch);
    }
    let p = grid.steps();
    let n = game.brownian_dim;
    let m_src = game.jumps.len();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let intensities: Vec<f64> = game.jumps.iter().map(|j| j.intensity).collect();

    let mut brownian = vec![0.0; trajectories * p * n];
    let mut jump_counts = vec![0u32; trajectories * p * m_src];

    if n > 0 {
        brownian
            .par_chunks_mut(p * n)
            .enumerate()
            .for_each(|(traj, bw)| {
                let base = Stream::new(seed);
                for step in 0..p {
                    for ch in 0..n {
                        bw[step * n + ch] = base
                            .with(stream::BROWNIAN)
                            .with(traj as u64)
                            .with((step * n + ch) as u64)
                            .normal()
                            * sqrt_dt;
                    }
                }
            });
    }
    if m_src > 0 {
        jump_counts
            .par_chunks_mut(p * m_src)
            .enumerate()
            .for_each(|(traj, jc)| {
                let base = Stream::new(seed);
                for step in 0..p {
                    for (j, &lambda) in intensities.iter().enumerate() {
                        jc[step * m_src + j] = base
                            .with(stream::JUMP_COUNT)
                            .with(traj as u64)
                            .with((step * m_src + j) as u64)
                            .poisson(lambda * dt);
                    }
                }
            });
    }

    Ok(NoiseBundle {
        seed,
        grid: *grid,
        trajectories,
        brownian_dim: n,
        jump_sources: m_src,
        brownian,
        jump_counts,
    })
}
