//! Property tests of invariants that hold across the public API.

use proptest::prelude::*;

use ddbubble::config::RunConfig;
use ddbubble::iid::{survival_product, IidReturnModel, ReturnLaw};
use ddbubble::kernels::{kernel_moments, KernelDiagnostics, TwoPointComplete};
use ddbubble::montecarlo::{estimate_mass_loss, simulate_drawdowns, DrawdownSpec, KernelChain};
use ddbubble::volterra::{log_grid, GridFunction, Shape};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn two_point_kernels_are_martingales_with_ordered_diagnostics(
        down_prob in 0.05f64..0.95,
        scale in 0.01f64..1.0,
        power in 0.0f64..2.0,
        x in 0.05f64..50.0,
        eps in 0.0f64..1.0,
    ) {
        let kernel = TwoPointComplete::new(down_prob, scale, power).unwrap();
        let (mass, mean) = kernel_moments(&kernel, x).unwrap();
        prop_assert!((mass - 1.0).abs() < 1e-10);
        prop_assert!((mean - x).abs() < 1e-10 * x.max(1.0));
        let d = KernelDiagnostics::compute(&kernel, x, eps).unwrap();
        prop_assert!((0.0..=1.0).contains(&d.a));
        prop_assert!(d.b >= 0.0 && d.b <= d.a + 1e-12);
        prop_assert!(d.b_eps >= d.b - 1e-12);
    }

    #[test]
    fn survival_product_is_a_nonincreasing_probability(
        rate in 0.05f64..0.95,
        depth in 0.0f64..0.95,
        start in 1usize..20,
        len in 0usize..200,
    ) {
        let model = IidReturnModel::new(ReturnLaw::GeometricDrops { rate, depth }).unwrap();
        let short = survival_product(&model, start, start + len).unwrap();
        let long = survival_product(&model, start, start + len + 1).unwrap();
        prop_assert!(short.value > 0.0 && short.value <= 1.0);
        prop_assert!(long.value <= short.value);
        if let Some(lower) = short.limit_lower {
            prop_assert!(lower <= short.value + 1e-15);
        }
    }

    #[test]
    fn grid_function_csv_round_trip(
        ratios in proptest::collection::vec(0.0f64..1.0, 2..40),
        gap in any::<bool>(),
    ) {
        let grid = log_grid(0.01, 100.0, ratios.len()).unwrap();
        let values: Vec<f64> = grid.iter().zip(&ratios).map(|(x, r)| x * r).collect();
        let shape = if gap { Shape::GapLinear } else { Shape::RatioLinear };
        let m = GridFunction::new(grid, values, shape).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        prop_assert_eq!(GridFunction::read_csv(buf.as_slice(), shape).unwrap(), m);
    }

    #[test]
    fn run_config_toml_round_trip(
        lo in 1e-3f64..1.0,
        span in 1.5f64..100.0,
        nodes in 2usize..1000,
        paths in 1usize..1_000_000,
        // TOML integers are signed 64-bit.
        seed in 0..=i64::MAX as u64,
        tol in 1e-14f64..1e-2,
    ) {
        let mut config = RunConfig::default();
        config.grid.lo = lo;
        config.grid.hi = lo * span;
        config.grid.nodes = nodes;
        config.simulate.paths = paths;
        config.simulate.seed = seed;
        config.solve.tol = tol;
        let text = config.to_toml_string().unwrap();
        prop_assert_eq!(RunConfig::from_toml_str(&text).unwrap(), config);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn simulation_is_reproducible_from_the_seed(seed in any::<u64>(), x0 in 0.1f64..10.0) {
        let kernel = TwoPointComplete::absorbing_half();
        let spec = DrawdownSpec::default();
        let first = simulate_drawdowns(&KernelChain(&kernel), x0, 20, 500, seed, &spec).unwrap();
        let second = simulate_drawdowns(&KernelChain(&kernel), x0, 20, 500, seed, &spec).unwrap();
        prop_assert_eq!(&first.paths, &second.paths);
        let est = estimate_mass_loss(&first, 1).unwrap();
        prop_assert!(est.value <= x0 + 1e-12);
    }
}
