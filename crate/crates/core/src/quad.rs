//! Gauss-Legendre quadrature on the unit interval, used for the scaling
//! integral in the potential integrands.

use crate::error::{CoreError, Result};

/// Quadrature rule on (0, 1): nodes in the open interval, positive weights
/// summing to one, exact for polynomials up to degree `2n - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Gauss-Legendre rule with `n` nodes mapped from [-1, 1] to [0, 1].
    pub fn gauss_legendre(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(CoreError::Invalid(
                "quadrature rule needs at least one node".into(),
            ));
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi-style initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // x is the i-th largest root; fill symmetric pair.
            nodes[n - 1 - i] = x;
            nodes[i] = -x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        // Map to [0, 1].
        for v in nodes.iter_mut() {
            *v = 0.5 * (*v + 1.0);
        }
        for w in weights.iter_mut() {
            *w *= 0.5;
        }
        Ok(QuadratureRule { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrate `f` over [0, 1].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(self.weights.iter())
            .map(|(&r, &w)| w * f(r))
            .sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
