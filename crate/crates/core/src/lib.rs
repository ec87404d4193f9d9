//! Computation of approximate Nash equilibria for N-player distributed
//! stochastic differential games with jump-diffusion dynamics.
//!
//! Players control only the drift of their own state, while running and
//! terminal costs couple everyone. The crate evaluates the potential
//! functional whose unilateral differences track each player's objective up
//! to an explicitly computable gap, minimizes it with a policy-gradient
//! trainer over residual feedforward policies, computes the closed-form gap
//! bounds (including graph-structured interaction-asymmetry bounds), and
//! ships numerical oracles that audit all of the above.

pub mod alpha;
pub mod cost;
pub mod error;
pub mod game;
pub mod graph;
pub mod grid;
pub mod kernel;
pub mod linalg;
pub mod noise;
pub mod optim;
pub mod policy;
pub mod potential;
pub mod quad;
pub mod rng;
pub mod sim;
pub mod tape;
pub mod train;
pub mod verify;

pub use alpha::{alpha_bound_general, crowd_alpha, zeta_exact, AlphaReport, DerivativeBounds};
pub use cost::{CostModel, CrowdCost, Dims, GenericCost};
pub use error::{CoreError, Result};
pub use game::{GameSpec, InitialStates, JumpSizeModel, JumpSource, TimeMatrix, TimeVec};
pub use graph::{
    rebalance_tree, rebalance_tree_with_base, zeta_asymptotic_bound, DecayLaw, GraphSpec,
    RateRegime,
};
pub use grid::TimeGrid;
pub use kernel::{Kernel, KernelEval};
pub use noise::{sample_noise, NoiseBundle};
pub use optim::{adam_step, AdamState};
pub use policy::{NeuralPolicy, PolicyConfig, PolicyParams};
pub use potential::{
    empirical_potential, f_integrand, g_terminal, player_cost, symmetric_potential,
    PotentialValue,
};
pub use quad::QuadratureRule;
pub use sim::{
    control_independent_shift, simulate, simulate_open_loop, ActionSource, ControlArray,
    PathBatch, ZeroPolicy,
};
pub use train::{
    evaluate_policy, potential_gradient, train, train_with, PlateauConfig, PlateauScheduler,
    Resample, TrainConfig, TrainError, TrainLog, TrainRecord,
};
pub use verify::{
    analytic_linear_derivative, exploitability, objective_value, potential_inequality_audit,
    sample_deviation, second_derivative_check, AuditPotential, AuditReport, BestResponseConfig,
    ExploitabilityReport,
};
