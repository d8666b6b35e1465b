use negrates::case1::{case1_mean, case1_variance, Case1Config};
use negrates::kernels::{gaussian_product_moment, generate_wiener, path_seed, wiener_moment, KernelMode};
use negrates::sim::{simulate_primal, simulate_transformed, Grid};
use negrates::{derive_initial_conditions, CoefficientFn, ModelSpec, RationalExponent};
use proptest::prelude::*;

fn coefficient() -> impl Strategy<Value = CoefficientFn> {
    prop_oneof![
        (-2.0f64..2.0).prop_map(CoefficientFn::Constant),
        (-2.0f64..2.0, 0.0f64..2.0).prop_map(|(scale, rate)| CoefficientFn::ScaledExp { scale, rate }),
        (-2.0f64..2.0, 0.0f64..3.0).prop_map(|(scale, freq)| CoefficientFn::ScaledCos { scale, freq }),
        Just(CoefficientFn::DampedCos),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coefficient_text_round_trips(c in coefficient()) {
        let back: CoefficientFn = c.to_string().parse().unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn exponent_text_round_trips(p in -20i64..20, q in 1i64..12) {
        let e = RationalExponent::new(p, q).unwrap();
        prop_assert_eq!(e.to_string().parse::<RationalExponent>().unwrap(), e);
    }

    #[test]
    fn wiener_moment_scales(k in 0u32..10, t in 0.01f64..5.0, lambda in 0.1f64..3.0) {
        let lhs = wiener_moment(k, lambda * t);
        let rhs = lambda.powf(k as f64 / 2.0) * wiener_moment(k, t);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300));
    }

    #[test]
    fn product_moment_is_even_in_rho_for_even_orders(s1 in 0u32..5, s2 in 0u32..5, rho in -1.0f64..1.0) {
        let (a, b) = (2 * s1, 2 * s2);
        let x = gaussian_product_moment(a, b, 1.0, 1.0, rho);
        let y = gaussian_product_moment(a, b, 1.0, 1.0, -rho);
        prop_assert!((x - y).abs() <= 1e-12 * x.abs());
    }

    #[test]
    fn corrected_variance_is_nonnegative(c in coefficient(), m in 1u32..5, sigma in 0.01f64..0.5, t in 0.1f64..3.0) {
        let cfg = Case1Config::new(c, sigma, m, 0.02, 0.0);
        let v = case1_variance(&cfg, t, KernelMode::Corrected).unwrap();
        prop_assert!(v >= -1e-15, "{}", v);
    }

    #[test]
    fn mean_is_affine_in_level(c in coefficient(), shift in -1.0f64..1.0, t in 0.0f64..5.0) {
        let base = case1_mean(&Case1Config::new(c.clone(), 0.1, 2, 0.02, 0.0), t).unwrap();
        let moved = case1_mean(&Case1Config::new(c, 0.1, 2, 0.02 + shift, 0.0), t).unwrap();
        prop_assert!((moved - base - shift).abs() < 1e-12);
    }

    #[test]
    fn schemes_agree_for_constant_sigma(seed in 0u64..1000, c in coefficient(), m in 1i64..4) {
        let spec = ModelSpec::new(c, 0.05.into()).with_m(RationalExponent::integer(m));
        let ic = derive_initial_conditions(&spec, 0.02, 0.0).unwrap();
        let grid = Grid::new(1.0, 200).unwrap();
        let w = generate_wiener(&grid.times(), path_seed(seed, 0)).unwrap();
        let p = simulate_primal(&spec, &ic, &grid, &w).unwrap();
        let q = simulate_transformed(&spec, &ic, &grid, &w).unwrap();
        for (x, y) in p.rate.iter().zip(&q.rate) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
