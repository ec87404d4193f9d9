//! Trainer-level properties: gradient correctness through the unrolled
//! dynamics, stationarity on cost-free games, schedule behavior, thread-count
//! reproducibility and checkpoint round trips.

mod common;

use apg_core::*;
use common::CrowdGameSetup;

fn small_grid() -> TimeGrid {
    TimeGrid::new(1.0, 10).unwrap()
}

fn train_config(grid: TimeGrid, iterations: usize, batch: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        iterations,
        batch,
        grid,
        learning_rate: 1e-3,
        plateau: PlateauConfig::default(),
        seed,
        quadrature_nodes: 16,
        resample: Resample::Fresh,
        grad_clip: None,
    }
}

#[test]
fn full_rollout_gradient_matches_finite_differences() {
    // two players, five steps, three trajectories, small network: every
    // parameter's gradient against central differences of the rollout value
    let game = CrowdGameSetup::deterministic(2, 1, Kernel::Gaussian {
        amplitude: 1.0,
        rate: 1.0,
    })
    .with_noise(0.2, 0.1)
    .build();
    let grid = TimeGrid::new(1.0, 5).unwrap();
    let noise = sample_noise(&game, &grid, 3, 11).unwrap();
    let config = PolicyConfig {
        input_dim: 1 + 2 * 2,
        width: 7,
        blocks: 2,
        output_dim: 2,
    };
    let params = PolicyParams::random_init(config, 21);
    let (_, grad) = potential_gradient(&game, &params, &noise, 8).unwrap();

    let h = 1e-5;
    let mut worst = 0.0f64;
    for idx in 0..params.data.len() {
        let mut pp = params.clone();
        pp.data[idx] += h;
        let mut pm = params.clone();
        pm.data[idx] -= h;
        let vp = evaluate_policy(&game, &pp, &noise, 8).unwrap().value;
        let vm = evaluate_policy(&game, &pm, &noise, 8).unwrap().value;
        let fd = (vp - vm) / (2.0 * h);
        let rel = (grad[idx] - fd).abs() / grad[idx].abs().max(fd.abs()).max(1e-7);
        worst = worst.max(rel);
        assert!(
            rel <= 1e-4,
            "param {idx}: ad {} vs fd {} (rel {rel})",
            grad[idx],
            fd
        );
    }
    assert!(worst > 0.0);
}

#[test]
fn truncating_state_dependence_changes_the_gradient() {
    // gradients must flow through the state recursion: freezing the visited
    // states and differentiating only the action argument gives a measurably
    // different gradient
    let game = CrowdGameSetup::deterministic(2, 1, Kernel::Gaussian {
        amplitude: 1.0,
        rate: 1.0,
    })
    .build();
    let grid = TimeGrid::new(1.0, 5).unwrap();
    let noise = sample_noise(&game, &grid, 2, 3).unwrap();
    let config = PolicyConfig {
        input_dim: 5,
        width: 7,
        blocks: 1,
        output_dim: 2,
    };
    let params = PolicyParams::random_init(config, 4);
    let (_, full_grad) = potential_gradient(&game, &params, &noise, 8).unwrap();

    // truncated objective: actions re-evaluated at the frozen rollout states
    let rule = QuadratureRule::gauss_legendre(8).unwrap();
    let frozen = {
        let policy = NeuralPolicy {
            params: &params,
            horizon: 1.0,
        };
        simulate(&game, &policy, &noise).unwrap()
    };
    let truncated_value = |p: &PolicyParams| -> f64 {
        let dt = grid.dt();
        let mut total = 0.0;
        for m in 0..2 {
            let mut out = vec![0.0; 2];
            for l in 0..5 {
                let t = grid.node(l);
                p.forward(t, frozen.state(m, l), frozen.sensitivity(m, l), &mut out);
                total += f_integrand(
                    &game,
                    t,
                    frozen.state(m, l),
                    frozen.sensitivity(m, l),
                    &out,
                    &rule,
                ) * dt;
            }
            total += g_terminal(&game, frozen.state(m, 5), frozen.sensitivity(m, 5), &rule);
        }
        total / 2.0
    };
    let h = 1e-5;
    let mut truncated_grad = vec![0.0; params.data.len()];
    for idx in 0..params.data.len() {
        let mut pp = params.clone();
        pp.data[idx] += h;
        let mut pm = params.clone();
        pm.data[idx] -= h;
        truncated_grad[idx] = (truncated_value(&pp) - truncated_value(&pm)) / (2.0 * h);
    }
    let diff: f64 = full_grad
        .iter()
        .zip(truncated_grad.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let full_norm = apg_core::linalg::norm2(&full_grad);
    assert!(
        diff > 1e-4 * full_norm,
        "truncated and full gradients are indistinguishable: diff {diff}, norm {full_norm}"
    );
}

#[test]
fn cost_free_game_is_stationary() {
    // zero control cost, zero interaction, target at the start: the zero
    // policy is optimal, the potential and gradient vanish identically
    let mut setup = CrowdGameSetup::deterministic(2, 2, Kernel::Quadratic);
    setup.interaction = vec![0.0; 4];
    setup.control_weight = 0.0;
    setup.targets = setup.x0.clone();
    let game = setup.build();
    let config = train_config(small_grid(), 5, 4, 1);
    let (params, log) = train(&game, &config).unwrap();
    for r in &log.records {
        assert_eq!(r.potential, 0.0);
        assert_eq!(r.grad_norm, 0.0);
    }
    let fresh = PolicyParams::init(PolicyConfig::for_game(2, 2, 2), 1);
    assert_eq!(params.data, fresh.data);
}

#[test]
fn plateau_schedule_examples() {
    let cfg = PlateauConfig {
        patience: 10,
        factor: 0.5,
        threshold: 1e-4,
        min_rate: 1e-5,
    };
    // strictly decreasing loss: rate untouched
    let mut s = PlateauScheduler::new(cfg, 1e-3);
    for k in 0..50 {
        s.observe(10.0 - k as f64);
    }
    assert_eq!(s.rate(), 1e-3);

    // constant loss for patience + 1 observations: exactly one halving
    let mut s = PlateauScheduler::new(cfg, 1e-3);
    for _ in 0..11 {
        s.observe(5.0);
    }
    assert_eq!(s.rate(), 5e-4);

    // two plateaus separated by an improvement: two reductions
    let mut s = PlateauScheduler::new(cfg, 1e-3);
    for _ in 0..11 {
        s.observe(5.0);
    }
    s.observe(1.0);
    for _ in 0..10 {
        s.observe(1.0);
    }
    assert_eq!(s.rate(), 2.5e-4);

    // the floor is respected
    let mut s = PlateauScheduler::new(cfg, 2e-5);
    for _ in 0..30 {
        s.observe(1.0);
    }
    assert_eq!(s.rate(), 1e-5);
}

#[test]
fn training_is_reproducible_across_thread_counts() {
    let game = CrowdGameSetup::deterministic(2, 2, Kernel::Gaussian {
        amplitude: 1.0,
        rate: 1.0,
    })
    .with_noise(0.1, 0.1)
    .build();
    let config = train_config(small_grid(), 5, 16, 2025);
    let pool1 = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let pool4 = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap();
    let (p1, l1) = pool1.install(|| train(&game, &config).unwrap());
    let (p4, l4) = pool4.install(|| train(&game, &config).unwrap());
    assert!(l1.semantically_equal(&l4));
    assert_eq!(p1.data.len(), p4.data.len());
    for (a, b) in p1.data.iter().zip(p4.data.iter()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    // and a second identical run in the same pool reproduces as well
    let (p1b, l1b) = pool1.install(|| train(&game, &config).unwrap());
    assert!(l1.semantically_equal(&l1b));
    assert_eq!(p1.data, p1b.data);
}

#[test]
fn fixed_noise_log_values_reproduce_after_reload() {
    let game = CrowdGameSetup::deterministic(2, 2, Kernel::Quadratic)
        .with_noise(0.15, 0.1)
        .build();
    let mut config = train_config(small_grid(), 3, 8, 7);
    config.resample = Resample::Fixed;
    let (params, log) = train(&game, &config).unwrap();
    let noise = sample_noise(&game, &config.grid, config.batch, config.seed).unwrap();

    // the first record evaluates the freshly initialized policy
    let init = PolicyParams::init(PolicyConfig::for_game(2, 2, 2), config.seed);
    let v0 = evaluate_policy(&game, &init, &noise, config.quadrature_nodes).unwrap();
    assert_eq!(v0.value.to_bits(), log.records[0].potential.to_bits());

    // checkpoint round trip preserves evaluation bit-exactly
    let mut buf = Vec::new();
    params.write_binary(&mut buf).unwrap();
    let reloaded = PolicyParams::read_binary(&mut buf.as_slice()).unwrap();
    let a = evaluate_policy(&game, &params, &noise, 16).unwrap();
    let b = evaluate_policy(&game, &reloaded, &noise, 16).unwrap();
    assert_eq!(a.value.to_bits(), b.value.to_bits());
}

#[test]
fn divergent_losses_abort_with_checkpoint() {
    // an absurd control weight makes the first potential overflow once the
    // policy moves; the huge kernel amplitude blows it up immediately
    let mut setup = CrowdGameSetup::deterministic(2, 2, Kernel::Gaussian {
        amplitude: 1e308,
        rate: 1e-3,
    });
    setup.x0 = vec![0.0; 4]; // coincident players: kernel at full amplitude
    let game = setup.build();
    let config = train_config(small_grid(), 5, 2, 1);
    match train(&game, &config) {
        Err(TrainError::NonFiniteLoss {
            iteration, params, ..
        }) => {
            assert_eq!(iteration, 0);
            assert!(params.is_finite());
        }
        other => panic!("expected abort, got {other:?}"),
    }
}

#[test]
fn descent_on_a_small_tracking_problem() {
    // single player pulled toward a target: a few hundred iterations must
    // reduce the potential strictly
    let mut setup = CrowdGameSetup::deterministic(1, 2, Kernel::Quadratic);
    setup.x0 = vec![0.0, 0.0];
    setup.targets = vec![0.5, 0.5];
    setup.control_weight = 0.1;
    let game = setup.build();
    let mut config = train_config(TimeGrid::new(1.0, 20).unwrap(), 200, 1, 5);
    config.learning_rate = 1e-2;
    let (_, log) = train(&game, &config).unwrap();
    let first = log.records.first().unwrap().potential;
    let last = log.records.last().unwrap().potential;
    assert!(
        last < first,
        "no descent: first {first}, last {last}"
    );
    // the optimum of this tracking problem is strictly negative
    assert!(last < -0.1, "final potential {last}");
}

#[test]
fn generic_costs_are_rejected_by_the_trainer() {
    let mut game = CrowdGameSetup::deterministic(2, 2, Kernel::Quadratic).build();
    game.cost = CostModel::Generic(GenericCost {
        running: std::sync::Arc::new(|_, _, _, _| 0.0),
        running_grad: std::sync::Arc::new(|_, _, _, _, gx, ga| {
            gx.fill(0.0);
            ga.fill(0.0);
        }),
        running_hess: std::sync::Arc::new(|_, _, _, _, _, block| match block {
            cost::CrossBlock::XX => linalg::Mat::zeros(2, 2),
            cost::CrossBlock::XA => linalg::Mat::zeros(2, 2),
            cost::CrossBlock::AX => linalg::Mat::zeros(2, 2),
            cost::CrossBlock::AA => linalg::Mat::zeros(2, 2),
        }),
        terminal: std::sync::Arc::new(|_, _| 0.0),
        terminal_grad: std::sync::Arc::new(|_, _, g| g.fill(0.0)),
        terminal_hess: std::sync::Arc::new(|_, _, _| linalg::Mat::zeros(2, 2)),
    });
    let config = train_config(small_grid(), 1, 1, 1);
    match train(&game, &config) {
        Err(TrainError::Core(CoreError::Unsupported { .. })) => {}
        other => panic!("expected unsupported-cost error, got {other:?}"),
    }
}
