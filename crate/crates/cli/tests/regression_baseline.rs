//! Frozen regression values on the shipped presets: evaluation of the
//! untrained (randomly initialized) policy on a fixed noise bundle. These
//! guard refactors of the simulator, potential evaluation and noise streams;
//! any intentional change to those paths must update the constants.

use apg_cli::presets;
use apg_core::*;

#[test]
fn aversion_initial_potential_baseline() {
    let scenario = presets::preset("aversion").unwrap();
    let params = PolicyParams::random_init(
        PolicyConfig::for_game(4, 2, 2),
        scenario.train.seed,
    );
    let noise = sample_noise(
        &scenario.game,
        &scenario.train.grid,
        500,
        scenario.train.seed,
    )
    .unwrap();
    let policy = NeuralPolicy {
        params: &params,
        horizon: scenario.train.grid.horizon(),
    };
    let paths = simulate(&scenario.game, &policy, &noise).unwrap();
    let rule = QuadratureRule::gauss_legendre(16).unwrap();
    let phi = empirical_potential(&paths, &scenario.game, &rule).unwrap();
    assert!(phi.value.is_finite());
    assert!((phi.value - (phi.running + phi.terminal)).abs() <= 1e-12 * phi.value.abs());

    // golden value frozen from the first verified run
    let frozen: f64 = 2.48450252918260321e3;
    assert_eq!(phi.value.to_bits(), frozen.to_bits());
    let frozen_running: f64 = 3.33556849953020389e2;
    assert_eq!(phi.running.to_bits(), frozen_running.to_bits());
}
