//! Graph-structured interaction asymmetry: shortest-path distances, the
//! level-by-level tree rebalancing that caps how many vertices can sit close
//! to a root in a degree-bounded graph, and the resulting finite-size bounds
//! and asymptotic rates for the asymmetry statistic.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::rng::{stream, Stream};

/// How interaction asymmetry decays with graph distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DecayLaw {
    /// `|q_ij - q_ji| <= w_ij rho^{c(i,j)}`, `rho` in (0, 1).
    Exponential { rho: f64 },
    /// `|q_ij - q_ji| <= w_ij / c(i,j)^beta`, `beta > 0`.
    Power { beta: f64 },
}

impl DecayLaw {
    pub fn factor(&self, distance: u32) -> f64 {
        match *self {
            DecayLaw::Exponential { rho } => rho.powi(distance as i32),
            DecayLaw::Power { beta } => (distance as f64).powf(-beta),
        }
    }
}

/// An undirected simple graph over the player set plus the decay law of the
/// interaction asymmetry.
#[derive(Debug, Clone)]
pub struct GraphSpec {
    pub vertices: usize,
    pub edges: Vec<(usize, usize)>,
    pub decay: DecayLaw,
    /// Uniform bound on the asymmetry amplitudes.
    pub amplitude_max: f64,
}

impl GraphSpec {
    pub fn validate(&self) -> Result<()> {
        match self.decay {
            DecayLaw::Exponential { rho } => {
                if !(rho > 0.0 && rho < 1.0) {
                    return Err(CoreError::Invalid(format!(
                        "exponential decay rate must lie in (0,1), got {rho}"
                    )));
                }
            }
            DecayLaw::Power { beta } => {
                if !(beta > 0.0 && beta.is_finite()) {
                    return Err(CoreError::Invalid(format!(
                        "power decay exponent must be positive, got {beta}"
                    )));
                }
            }
        }
        if !(self.amplitude_max > 0.0 && self.amplitude_max.is_finite()) {
            return Err(CoreError::Invalid(format!(
                "amplitude bound must be positive, got {}",
                self.amplitude_max
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &(u, v) in &self.edges {
            if u >= self.vertices || v >= self.vertices {
                return Err(CoreError::Invalid(format!(
                    "edge ({u}, {v}) out of range for {} vertices",
                    self.vertices
                )));
            }
            if u == v {
                return Err(CoreError::Invalid(format!("self-loop at vertex {u}")));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(CoreError::Invalid(format!("duplicate edge ({u}, {v})")));
            }
        }
        Ok(())
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency().iter().map(Vec::len).max().unwrap_or(0)
    }

    /// BFS distances from `root`; `None` for unreachable vertices.
    pub fn distances_from(&self, root: usize) -> Vec<Option<u32>> {
        let adj = self.adjacency();
        let mut dist = vec![None; self.vertices];
        let mut queue = std::collections::VecDeque::new();
        dist[root] = Some(0);
        queue.push_back(root);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &v in &adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn all_distances(&self) -> Vec<Vec<Option<u32>>> {
        (0..self.vertices).map(|r| self.distances_from(r)).collect()
    }

    /// Interaction table whose asymmetry saturates the decay law exactly:
    /// `q_ij = w_bar * decay(c(i,j))` for `i < j`, zero otherwise.
    pub fn interaction_table_exact(&self) -> Vec<f64> {
        self.interaction_table_with(|_, _| self.amplitude_max)
    }

    /// Interaction table with per-pair amplitudes drawn in (0, w_bar].
    pub fn interaction_table_random(&self, seed: u64) -> Vec<f64> {
        self.interaction_table_with(|i, j| {
            self.amplitude_max
                * Stream::new(seed)
                    .with(stream::WEIGHTS)
                    .with(i as u64)
                    .with(j as u64)
                    .uniform()
        })
    }

    fn interaction_table_with<F: Fn(usize, usize) -> f64>(&self, amp: F) -> Vec<f64> {
        let n = self.vertices;
        let dist = self.all_distances();
        let mut q = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                if let Some(c) = dist[i][j] {
                    q[i * n + j] = amp(i, j) * self.decay.factor(c);
                }
            }
        }
        q
    }
}

/// Rebalanced depths with the capacity base taken from the graph's maximum
/// degree: vertices reachable from `root`, reassigned greedily in order of
/// increasing original distance to the levels of a tree whose level `l`
/// holds `d_G^l` slots. Depths never increase, which is what makes the level
/// sums an upper bound for distance-decaying quantities.
pub fn rebalance_tree(graph: &GraphSpec, root: usize) -> Result<Vec<Option<usize>>> {
    rebalance_tree_with_base(graph, root, graph.max_degree().max(1))
}

/// As `rebalance_tree` with an explicit branching base for the level
/// capacities `(base, base^2, ...)`. Depths are non-increasing whenever
/// `base` is at least the graph's maximum degree; a tree whose level sizes
/// already match the capacities is left unchanged.
pub fn rebalance_tree_with_base(
    graph: &GraphSpec,
    root: usize,
    base: usize,
) -> Result<Vec<Option<usize>>> {
    if root >= graph.vertices {
        return Err(CoreError::Invalid(format!(
            "root {root} out of range for {} vertices",
            graph.vertices
        )));
    }
    if base == 0 {
        return Err(CoreError::Invalid("branching base must be positive".into()));
    }
    let dist = graph.distances_from(root);
    let mut order: Vec<(u32, usize)> = dist
        .iter()
        .enumerate()
        .filter_map(|(v, d)| d.map(|d| (d, v)))
        .filter(|&(d, _)| d > 0)
        .collect();
    order.sort_unstable();
    let mut depths = vec![None; graph.vertices];
    depths[root] = Some(0);
    let mut level = 1usize;
    let mut capacity = base;
    let mut used = 0usize;
    for (_orig, v) in order {
        if used == capacity {
            level += 1;
            capacity = capacity.saturating_mul(base);
            used = 0;
        }
        depths[v] = Some(level);
        used += 1;
    }
    Ok(depths)
}

/// Asymptotic regime of the asymmetry statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RateRegime {
    /// Exponential decay slower than the branching: polynomial rate in N.
    ExponentialSupercritical,
    /// Exponential decay exactly matching the branching.
    ExponentialCritical,
    /// Exponential decay faster than the branching.
    ExponentialSubcritical,
    /// Power-law decay.
    Power,
}

impl RateRegime {
    pub fn label(&self) -> &'static str {
        match self {
            RateRegime::ExponentialSupercritical => "N^(ln(rho)/ln(d_G))",
            RateRegime::ExponentialCritical => "ln(N)/N",
            RateRegime::ExponentialSubcritical => "1/N",
            RateRegime::Power => "ln(ln(N))/ln(N)^beta",
        }
    }
}

/// Output of the finite-size asymmetry bound.
#[derive(Debug, Clone, Serialize)]
pub struct ZetaAsymptotic {
    pub regime: RateRegime,
    pub label: &'static str,
    pub bound: f64,
    /// Predicted decay exponent: on `N` for exponential regimes (log factors
    /// noted by the label), on `ln N` for power decay.
    pub rate_exponent: f64,
    pub levels: usize,
    pub max_degree: usize,
}

/// Finite-size upper bound on the asymmetry statistic for a decay-consistent
/// interaction table, via the rebalanced-tree level sums, together with the
/// asymptotic regime classification.
pub fn zeta_asymptotic_bound(graph: &GraphSpec) -> Result<ZetaAsymptotic> {
    graph.validate()?;
    let degree = graph.max_degree();
    if degree < 2 {
        return Err(CoreError::DegreeTooSmall { degree });
    }
    let n = graph.vertices;
    if n < 2 {
        return Err(CoreError::Invalid("need at least two vertices".into()));
    }
    let d_g = degree as f64;
    // Smallest L with 1 + d_G + ... + d_G^L >= N.
    let mut levels = 0usize;
    let mut cap = 1u128;
    let mut level_size = 1u128;
    while cap < n as u128 {
        level_size = level_size.saturating_mul(degree as u128);
        cap = cap.saturating_add(level_size);
        levels += 1;
    }
    let w = graph.amplitude_max;
    let nf = n as f64;
    match graph.decay {
        DecayLaw::Exponential { rho } => {
            let x = rho * d_g;
            let mut sum = 0.0;
            let mut pow = 1.0;
            for _ in 1..=levels {
                pow *= x;
                sum += pow;
            }
            let bound = w / (nf - 1.0) * sum;
            let (regime, rate_exponent) = if (x - 1.0).abs() <= 1e-12 {
                (RateRegime::ExponentialCritical, -1.0)
            } else if x > 1.0 {
                (RateRegime::ExponentialSupercritical, rho.ln() / d_g.ln())
            } else {
                (RateRegime::ExponentialSubcritical, -1.0)
            };
            Ok(ZetaAsymptotic {
                regime,
                label: regime.label(),
                bound,
                rate_exponent,
                levels,
                max_degree: degree,
            })
        }
        DecayLaw::Power { beta } => {
            let l = levels.max(1);
            let lf = l as f64;
            let m_star_raw = if beta > 1.0 {
                (beta * lf.ln() / d_g.ln()).floor() as usize
            } else {
                (lf.ln() / d_g.ln()).floor() as usize
            };
            // The tail split needs the term function increasing on the
            // dropped range; fall back to the full sum when the level count
            // is too small for that.
            let m_star = if m_star_raw >= l || ((l - m_star_raw) as f64) < beta / d_g.ln() {
                0
            } else {
                m_star_raw
            };
            let mut head = 0.0;
            let mut pow = 1.0;
            for lev in 1..=(l - m_star) {
                pow *= d_g;
                head += pow / (lev as f64).powf(beta);
            }
            let tail = m_star as f64 * d_g.powi(l as i32) / lf.powf(beta);
            let bound = 2.0 * w / nf * (head + tail);
            Ok(ZetaAsymptotic {
                regime: RateRegime::Power,
                label: RateRegime::Power.label(),
                bound,
                rate_exponent: beta,
                levels,
                max_degree: degree,
            })
        }
    }
}

/// Balanced tree where every internal vertex has `arity` children, filled for
/// `levels` levels below the root. Vertex 0 is the root; children are laid
/// out level by level.
pub fn balanced_tree(arity: usize, levels: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    let mut level_start = 0usize;
    let mut level_size = 1usize;
    let mut next = 1usize;
    for _ in 0..levels {
        for parent in level_start..level_start + level_size {
            for _ in 0..arity {
                edges.push((parent, next));
                next += 1;
            }
        }
        level_start += level_size;
        level_size *= arity;
    }
    edges
}
