mod common;

use etrust::oracle::{self, OracleMethod, OracleOptions};
use etrust::relaxation;
use proptest::prelude::*;
use rand::Rng;

fn grid(points: usize) -> OracleOptions {
    OracleOptions {
        method: Some(OracleMethod::Grid),
        grid_points: points,
        ..OracleOptions::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn relaxation_lower_bounds_the_oracle(seed in any::<u64>(), m in 0usize..4) {
        let mut rng = common::rng(seed);
        let hess = common::random_symmetric(2, &mut rng);
        let p = common::slater_instance(hess, m, &mut rng);
        let rel = relaxation::solve_relaxation(&p).unwrap();
        let orc = oracle::brute_force_min(&p, &OracleOptions::default()).unwrap();
        prop_assert!(orc.value >= rel.sdp_value - 1e-6, "oracle {} sdp {}", orc.value, rel.sdp_value);
    }

    #[test]
    fn exact_under_dimension_condition(seed in any::<u64>(), n in 2usize..4) {
        let mut rng = common::rng(seed);
        let m = rng.random_range(0..n);
        let hess = common::hessian_with_multiplicity(n, m + 1, &mut rng);
        let p = common::slater_instance(hess, m, &mut rng);
        prop_assert!(p.check_dimension_condition(1e-8).unwrap().holds);
        let rel = relaxation::solve_relaxation(&p).unwrap();
        let orc = oracle::brute_force_min(&p, &OracleOptions::default()).unwrap();
        prop_assert!((rel.sdp_value - orc.value).abs() <= 1e-4 * (1.0 + orc.value.abs()));
        prop_assert!(rel.exact && rel.candidate_feasible);
    }

    #[test]
    fn grid_refinement_does_not_raise_the_value(seed in any::<u64>(), k in 11usize..60) {
        let mut rng = common::rng(seed);
        let hess = common::random_symmetric(2, &mut rng);
        let m = rng.random_range(0..3);
        let p = common::slater_instance(hess, m, &mut rng);
        let coarse = oracle::brute_force_min(&p, &grid(k)).unwrap();
        let fine = oracle::brute_force_min(&p, &grid(2 * k - 1)).unwrap();
        prop_assert!(fine.value <= coarse.value + 1e-9, "coarse {} fine {}", coarse.value, fine.value);
    }
}
