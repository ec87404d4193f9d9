use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Uniform time grid `0 = t_0 < t_1 < ... < t_P = T`.
///
/// Only uniform grids are supported; the simulation scheme evaluates
/// coefficients at the left endpoint of each step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(CoreError::Invalid(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(CoreError::Invalid("grid needs at least one step".into()));
        }
        Ok(TimeGrid { horizon, steps })
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    #[inline]
    pub fn steps(&self) -> usize {
        self.steps
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `t_l`, computed so that `node(steps) == horizon` exactly.
    #[inline]
    pub fn node(&self, l: usize) -> f64 {
        debug_assert!(l <= self.steps);
        self.horizon * (l as f64) / (self.steps as f64)
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|l| self.node(l))
    }
}
