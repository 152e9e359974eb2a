mod common;

use etrust::linalg::{self, SymMatrix};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn decomposition_reconstructs(seed in any::<u64>(), n in 1usize..9, scale in -3i32..4) {
        let mut rng = common::rng(seed);
        let s = common::random_symmetric(n, &mut rng);
        let s = SymMatrix::symmetrize(s.as_matrix() * 10f64.powi(scale)).unwrap();
        let e = linalg::eig_sym(&s).unwrap();
        let err = (e.reconstruct() - s.as_matrix()).amax();
        prop_assert!(err <= 1e-8 * (1.0 + s.max_abs()));
        let ortho = (e.eigenvectors.transpose() * &e.eigenvectors - DMatrix::identity(n, n)).amax();
        prop_assert!(ortho <= 1e-10);
        prop_assert!(e.eigenvalues.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn kron_vec_identities(seed in any::<u64>(), k in 1usize..7, s in 1usize..7) {
        let mut rng = common::rng(seed);
        let delta = common::gaussian_mat(k, s, &mut rng);
        let x = common::gaussian_vec(s, &mut rng);
        let m = common::gaussian_mat(s, s, &mut rng);
        // Δx = (I_k ⊗ xᵀ) vec(Δᵀ)
        let lhs = &delta * &x;
        let rhs = linalg::kron_identity(k, &DMatrix::from_row_slice(1, s, x.as_slice())) * linalg::vec(&delta.transpose());
        prop_assert!((lhs - rhs).amax() <= 1e-10 * (1.0 + delta.amax() * x.amax()));
        // vec(MΔᵀ) = (I_k ⊗ M) vec(Δᵀ)
        let lhs = linalg::vec(&(&m * delta.transpose()));
        let rhs = linalg::kron_identity(k, &m) * linalg::vec(&delta.transpose());
        prop_assert!((lhs - rhs).amax() <= 1e-10 * (1.0 + m.amax() * delta.amax()));
        // ‖Δx‖² = vec(Δᵀ)ᵀ (I_k ⊗ xxᵀ) vec(Δᵀ)
        let u = linalg::vec(&delta.transpose());
        let quad = (u.transpose() * linalg::kron_identity(k, &(&x * x.transpose())) * &u)[(0, 0)];
        prop_assert!((quad - (&delta * &x).norm_squared()).abs() <= 1e-10 * (1.0 + quad.abs()));
        prop_assert_eq!(linalg::unvec(&linalg::vec(&delta), k, s), delta);
    }

    #[test]
    fn span_rank_invariant_under_permutation_and_scaling(
        seed in any::<u64>(),
        n in 1usize..6,
        count in 1usize..7,
        rank_cap in 1usize..6,
    ) {
        let mut rng = common::rng(seed);
        let r = rank_cap.min(n).min(count);
        let basis = common::gaussian_mat(n, r, &mut rng);
        let vectors: Vec<DVector<f64>> = (0..count)
            .map(|_| &basis * common::gaussian_vec(r, &mut rng))
            .collect();
        let base = linalg::span_rank(&vectors, 1e-8);
        prop_assert_eq!(base, r);
        let mut shuffled: Vec<DVector<f64>> = vectors
            .iter()
            .map(|v| {
                let factor = if rand::Rng::random::<bool>(&mut rng) { 1.0 } else { -1.0 } * 10f64.powf(rand::Rng::random_range(&mut rng, -3.0..3.0));
                v * factor
            })
            .collect();
        shuffled.reverse();
        shuffled.rotate_left(seed as usize % count);
        prop_assert_eq!(linalg::span_rank(&shuffled, 1e-8), base);
    }
}
