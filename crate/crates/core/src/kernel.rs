//! Pairwise interaction kernels for crowd games: a Gaussian aversion bump, a
//! mollified indicator of a personal-space ball, and the quadratic flocking
//! kernel. Each kernel evaluates its value together with exact first and
//! second derivatives, and exposes the sup-norm of its Hessian (the curvature
//! constant entering the interaction-asymmetry bounds).

use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::error::{CoreError, Result};
use crate::linalg::{spectral_norm_symmetric, Mat};
use crate::quad::QuadratureRule;

/// Interaction kernel variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    /// `K(z) = amplitude * exp(-rate * |z|^2)`
    Gaussian { amplitude: f64, rate: f64 },
    /// Indicator of the ball of `radius`, mollified by a compactly supported
    /// bump of width `delta`. Evaluated by fixed-node tensor quadrature.
    SmoothedIndicator { radius: f64, delta: f64 },
    /// `K(z) = |z|^2 / 2`
    Quadratic,
}

/// Value, gradient and Hessian of a kernel at a point.
#[derive(Debug, Clone)]
pub struct KernelEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Mat,
}

impl Kernel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Gaussian { amplitude, rate } => {
                if !(amplitude > 0.0 && amplitude.is_finite() && rate > 0.0 && rate.is_finite()) {
                    return Err(CoreError::Invalid(format!(
                        "gaussian kernel needs positive finite amplitude and rate, got ({amplitude}, {rate})"
                    )));
                }
            }
            Kernel::SmoothedIndicator { radius, delta } => {
                if !(radius > 0.0 && radius.is_finite() && delta > 0.0 && delta.is_finite()) {
                    return Err(CoreError::Invalid(format!(
                        "smoothed indicator needs positive finite radius and width, got ({radius}, {delta})"
                    )));
                }
            }
            Kernel::Quadratic => {}
        }
        Ok(())
    }

    /// Evaluate `K`, its gradient and its Hessian at `z`.
    pub fn eval(&self, z: &[f64]) -> Result<KernelEval> {
        if !z.iter().all(|v| v.is_finite()) {
            return Err(CoreError::NonFiniteInput {
                context: "kernel evaluation point",
            });
        }
        let d = z.len();
        match *self {
            Kernel::Quadratic => {
                let value = 0.5 * z.iter().map(|v| v * v).sum::<f64>();
                Ok(KernelEval {
                    value,
                    gradient: z.to_vec(),
                    hessian: Mat::identity(d),
                })
            }
            Kernel::Gaussian { amplitude, rate } => {
                let s: f64 = z.iter().map(|v| v * v).sum();
                let value = amplitude * (-rate * s).exp();
                let gradient: Vec<f64> = z.iter().map(|v| -2.0 * rate * value * v).collect();
                // value * (4 rate^2 z z^T - 2 rate I)
                let mut hessian = Mat::scaled_identity(d, -2.0 * rate * value);
                for i in 0..d {
                    for j in 0..d {
                        *hessian.at_mut(i, j) += 4.0 * rate * rate * value * z[i] * z[j];
                    }
                }
                Ok(KernelEval {
                    value,
                    gradient,
                    hessian,
                })
            }
            Kernel::SmoothedIndicator { radius, delta } => {
                smoothed_indicator_eval(radius, delta, z)
            }
        }
    }

    /// Sup-norm over `z` of the spectral norm of the kernel Hessian.
    ///
    /// Gaussian and quadratic kernels have closed forms; the smoothed
    /// indicator is maximized by a deterministic grid search over the
    /// inflated support ball, with one local refinement pass.
    pub fn curvature(&self, dim: usize) -> f64 {
        match *self {
            Kernel::Quadratic => 1.0,
            // The largest eigenvalue magnitude is attained at the origin.
            Kernel::Gaussian { amplitude, rate } => 2.0 * amplitude * rate,
            Kernel::SmoothedIndicator { radius, delta } => {
                smoothed_indicator_curvature(radius, delta, dim)
            }
        }
    }

    /// All supported kernels are even functions of `z`.
    pub fn is_even(&self) -> bool {
        true
    }
}

/// Base tensor-quadrature resolution; raised when the mollifier is narrow
/// relative to the ball. The node spacing must resolve the scale on which
/// the mollifier's second derivatives vary, or the kernel Hessian picks up
/// spurious oscillations.
const BASE_NODES_PER_AXIS: usize = 16;

fn nodes_per_axis(radius: f64, delta: f64, dim: usize) -> usize {
    let needed = (20.0 * radius / delta).ceil() as usize;
    let cap = if dim <= 2 { 128 } else { 48 };
    needed.clamp(BASE_NODES_PER_AXIS, cap)
}

/// Mollifier normalization: integral of `exp(-1/(1 - |v|^2))` over the unit
/// ball in dimension `d`. The bump vanishes to all orders at the boundary,
/// so a masked tensor rule converges fast.
fn unit_bump_mass(d: usize) -> f64 {
    static CACHE: OnceLock<[OnceLock<f64>; 8]> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    *cache[d].get_or_init(|| {
        let n = 64usize;
        let rule = QuadratureRule::gauss_legendre(n).expect("rule");
        let mut total = 0.0;
        let mut idx = vec![0usize; d];
        loop {
            let mut w = 1.0;
            let mut s = 0.0;
            for &i in idx.iter() {
                // map (0,1) -> (-1,1)
                let v = 2.0 * rule.nodes[i] - 1.0;
                w *= 2.0 * rule.weights[i];
                s += v * v;
            }
            if s < 1.0 {
                total += w * (-1.0 / (1.0 - s)).exp();
            }
            // advance multi-index
            let mut axis = 0;
            loop {
                if axis == d {
                    return total;
                }
                idx[axis] += 1;
                if idx[axis] < n {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
            }
        }
    })
}

/// Normalized bump of width `delta`: value, gradient and Hessian at `u`.
fn bump_eval(delta: f64, d: usize, u: &[f64], norm: f64) -> (f64, Vec<f64>, Mat) {
    let s: f64 = u.iter().map(|v| v * v).sum::<f64>() / (delta * delta);
    if s >= 1.0 {
        return (0.0, vec![0.0; d], Mat::zeros(d, d));
    }
    let one_minus = 1.0 - s;
    let value = (-1.0 / one_minus).exp() / norm;
    if value == 0.0 {
        return (0.0, vec![0.0; d], Mat::zeros(d, d));
    }
    let phi1 = -1.0 / (one_minus * one_minus);
    let phi2 = -2.0 / (one_minus * one_minus * one_minus);
    let ds: Vec<f64> = u.iter().map(|v| 2.0 * v / (delta * delta)).collect();
    let gradient: Vec<f64> = ds.iter().map(|g| value * phi1 * g).collect();
    let mut hessian = Mat::scaled_identity(d, value * phi1 * 2.0 / (delta * delta));
    let c = value * (phi1 * phi1 + phi2);
    for i in 0..d {
        for j in 0..d {
            *hessian.at_mut(i, j) += c * ds[i] * ds[j];
        }
    }
    (value, gradient, hessian)
}

/// Convolution of the ball indicator with the mollifier, written as an
/// integral over the (fixed) ball so the point `z` only enters through the
/// smooth bump. Differentiation then commutes with the quadrature, which
/// keeps value, gradient and Hessian mutually consistent.
fn smoothed_indicator_eval(radius: f64, delta: f64, z: &[f64]) -> Result<KernelEval> {
    let d = z.len();
    if d == 0 || d > 3 {
        return Err(CoreError::Unsupported {
            what: "smoothed indicator kernel",
            detail: format!("state dimension {d} (supported: 1..=3)"),
        });
    }
    let norm = unit_bump_mass(d) * delta.powi(d as i32);
    let n = nodes_per_axis(radius, delta, d);
    let rule = QuadratureRule::gauss_legendre(n).expect("rule");
    let mut value = 0.0;
    let mut gradient = vec![0.0; d];
    let mut hessian = Mat::zeros(d, d);
    let mut idx = vec![0usize; d];
    let mut w_node = vec![0.0; d];
    let mut u = vec![0.0; d];
    loop {
        let mut w = 1.0;
        let mut s = 0.0;
        for (axis, &i) in idx.iter().enumerate() {
            let v = radius * (2.0 * rule.nodes[i] - 1.0);
            w_node[axis] = v;
            w *= 2.0 * radius * rule.weights[i];
            s += v * v;
        }
        if s <= radius * radius {
            for axis in 0..d {
                u[axis] = z[axis] - w_node[axis];
            }
            let (bv, bg, bh) = bump_eval(delta, d, &u, norm);
            value += w * bv;
            for axis in 0..d {
                gradient[axis] += w * bg[axis];
            }
            for i in 0..d {
                for j in 0..d {
                    *hessian.at_mut(i, j) += w * bh.at(i, j);
                }
            }
        }
        let mut axis = 0;
        loop {
            if axis == d {
                return Ok(KernelEval {
                    value,
                    gradient,
                    hessian,
                });
            }
            idx[axis] += 1;
            if idx[axis] < n {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

fn smoothed_indicator_curvature(radius: f64, delta: f64, dim: usize) -> f64 {
    // K vanishes outside |z| <= radius + delta. Scan a grid over that ball
    // at a resolution tied to the mollifier width, then run a shrinking
    // local search from the best candidates. The tensor quadrature is not
    // exactly rotation invariant, so the scan covers the full ball.
    let reach = radius + delta;
    let per_axis = if dim <= 2 {
        ((24.0 * reach / delta).ceil() as usize).clamp(64, 256)
    } else {
        ((8.0 * reach / delta).ceil() as usize).clamp(24, 48)
    };
    let eval = |z: &[f64]| -> f64 {
        smoothed_indicator_eval(radius, delta, z)
            .map(|e| spectral_norm_symmetric(&e.hessian))
            .unwrap_or(0.0)
    };
    let mut candidates: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut idx = vec![0usize; dim];
    let mut z = vec![0.0; dim];
    'outer: loop {
        for (axis, &i) in idx.iter().enumerate() {
            z[axis] = reach * (2.0 * i as f64 / (per_axis - 1) as f64 - 1.0);
        }
        if z.iter().map(|v| v * v).sum::<f64>() <= reach * reach {
            let v = eval(&z);
            if v > 0.0 {
                candidates.push((v, z.clone()));
            }
        }
        let mut axis = 0;
        loop {
            if axis == dim {
                break 'outer;
            }
            idx[axis] += 1;
            if idx[axis] < per_axis {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
    candidates.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut best = candidates.first().map(|c| c.0).unwrap_or(0.0);
    let coarse_step = 2.0 * reach / (per_axis - 1) as f64;
    for (_, start) in candidates.into_iter().take(8) {
        let mut center = start;
        let mut h = coarse_step;
        for _round in 0..14 {
            let mut improved = false;
            let mut best_local = center.clone();
            let mut idx = vec![0usize; dim];
            'local: loop {
                for (axis, &i) in idx.iter().enumerate() {
                    z[axis] = center[axis] + h * (i as f64 - 2.0) / 2.0;
                }
                let v = eval(&z);
                if v > best {
                    best = v;
                    best_local.copy_from_slice(&z);
                    improved = true;
                }
                let mut axis = 0;
                loop {
                    if axis == dim {
                        break 'local;
                    }
                    idx[axis] += 1;
                    if idx[axis] < 5 {
                        break;
                    }
                    idx[axis] = 0;
                    axis += 1;
                }
            }
            if improved {
                center = best_local;
            } else {
                h *= 0.5;
            }
        }
    }
    best
}
