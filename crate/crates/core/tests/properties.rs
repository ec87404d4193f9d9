//! Property-based invariants: derivative consistency of the kernels, the
//! control-scaling decomposition at arbitrary scales, and asymmetry-statistic
//! consistency.

mod common;

use apg_core::linalg::spectral_norm_symmetric;
use apg_core::*;
use common::{random_controls, CrowdGameSetup};
use proptest::prelude::*;

fn kernels() -> impl Strategy<Value = Kernel> {
    prop_oneof![
        Just(Kernel::Quadratic),
        (0.5f64..50.0, 0.5f64..50.0)
            .prop_map(|(amplitude, rate)| Kernel::Gaussian { amplitude, rate }),
        (0.2f64..0.8, 0.1f64..0.3)
            .prop_map(|(radius, delta)| Kernel::SmoothedIndicator { radius, delta }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernel_gradient_matches_finite_differences(
        kernel in kernels(),
        zx in -1.5f64..1.5,
        zy in -1.5f64..1.5,
    ) {
        let z = [zx, zy];
        let e = kernel.eval(&z).unwrap();
        let h = 1e-6;
        let scale = e.gradient.iter().map(|g| g.abs()).fold(1.0f64, f64::max);
        for c in 0..2 {
            let mut zp = z;
            let mut zm = z;
            zp[c] += h;
            zm[c] -= h;
            let fd = (kernel.eval(&zp).unwrap().value - kernel.eval(&zm).unwrap().value)
                / (2.0 * h);
            prop_assert!(
                (e.gradient[c] - fd).abs() <= 1e-6 * scale,
                "{:?} at {:?}: {} vs {}", kernel, z, e.gradient[c], fd
            );
        }
    }

    #[test]
    fn kernel_hessian_matches_gradient_differences(
        kernel in kernels(),
        zx in -1.2f64..1.2,
        zy in -1.2f64..1.2,
    ) {
        let z = [zx, zy];
        let e = kernel.eval(&z).unwrap();
        let h = 1e-5;
        let hscale = e.hessian.data.iter().map(|g| g.abs()).fold(1.0f64, f64::max);
        for j in 0..2 {
            let mut zp = z;
            let mut zm = z;
            zp[j] += h;
            zm[j] -= h;
            let gp = kernel.eval(&zp).unwrap().gradient;
            let gm = kernel.eval(&zm).unwrap().gradient;
            for i in 0..2 {
                let fd = (gp[i] - gm[i]) / (2.0 * h);
                prop_assert!(
                    (e.hessian.at(i, j) - fd).abs() <= 1e-5 * hscale,
                    "{:?} hessian ({i},{j}) at {:?}: {} vs {}",
                    kernel, z, e.hessian.at(i, j), fd
                );
            }
        }
    }

    #[test]
    fn decomposition_holds_for_arbitrary_scales(r in 0.0f64..=1.0, seed in 0u64..500) {
        let game = CrowdGameSetup::deterministic(2, 2, Kernel::Quadratic)
            .with_noise(0.2, 0.1)
            .build();
        let grid = TimeGrid::new(1.0, 12).unwrap();
        let noise = sample_noise(&game, &grid, 2, seed).unwrap();
        let controls = random_controls(2, &grid, 4, 0.7, seed);
        let base = simulate_open_loop(&game, &controls, &noise).unwrap();
        let scaled = simulate_open_loop(&game, &controls.scaled(r), &noise).unwrap();
        for m in 0..2 {
            for l in 0..=12 {
                let x = base.state(m, l);
                let y = base.sensitivity(m, l);
                let xs = scaled.state(m, l);
                for c in 0..x.len() {
                    prop_assert!((xs[c] - (x[c] - (1.0 - r) * y[c])).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn zeta_is_zero_for_symmetric_tables(seed in 0u64..2000, n in 2usize..6) {
        let mut q = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    q[i * n + j] = apg_core::rng::Stream::new(seed)
                        .with((i * n + j) as u64)
                        .uniform();
                }
            }
        }
        // symmetrize and check zero
        let mut sym = q.clone();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let avg = 0.5 * (q[i * n + j] + q[j * n + i]);
                    sym[i * n + j] = avg;
                }
            }
        }
        prop_assert_eq!(zeta_exact(&sym, n), 0.0);
        // the normalized row-sum statistic never exceeds twice the max entry
        let max_entry = q.iter().cloned().fold(0.0f64, f64::max);
        prop_assert!(zeta_exact(&q, n) <= 2.0 * max_entry + 1e-15);
    }
}

// The curvature search for the smoothed indicator is expensive, so the
// domination property runs with a smaller case budget.
proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn curvature_dominates_at_random_points(
        kernel in kernels(),
        zx in -3.0f64..3.0,
        zy in -3.0f64..3.0,
    ) {
        let kappa = kernel.curvature(2);
        let e = kernel.eval(&[zx, zy]).unwrap();
        let nrm = spectral_norm_symmetric(&e.hessian);
        prop_assert!(nrm <= kappa * (1.0 + 1e-10), "{nrm} > {kappa} for {kernel:?}");
    }
}
