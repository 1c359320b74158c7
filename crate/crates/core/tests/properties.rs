//! Property tests over randomly generated matrices and vectors.

use eigenmean::enforce::{select_basis, BasisStrategy};
use eigenmean::likelihood::{sufficient_stats, Dataset};
use eigenmean::linalg::{
    rank_two_eigenvalues, spectral_decompose, symmetrize, RankTwoPair,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn finite_entry() -> impl Strategy<Value = f64> {
    (-50.0f64..50.0).prop_filter("finite", |v| v.is_finite())
}

fn square_matrix(p: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(finite_entry(), p * p)
        .prop_map(move |v| DMatrix::from_vec(p, p, v))
}

fn vector(p: usize) -> impl Strategy<Value = DVector<f64>> {
    proptest::collection::vec(finite_entry(), p).prop_map(DVector::from_vec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symmetrize_is_idempotent_and_elementwise(m in square_matrix(4)) {
        let s = symmetrize(&m).unwrap();
        prop_assert_eq!(symmetrize(&s).unwrap(), s.clone());
        for r in 0..4 {
            for c in 0..4 {
                let expect = 0.5 * (m[(r, c)] + m[(c, r)]);
                prop_assert!((s[(r, c)] - expect).abs() <= 1e-12 * expect.abs().max(1.0));
            }
        }
    }

    #[test]
    fn spectral_reconstruction_round_trips(m in square_matrix(5)) {
        let sym = symmetrize(&m).unwrap();
        let sd = spectral_decompose(&sym).unwrap();
        let back = sd.reconstruct();
        let rel = (&back - &sym).norm() / sym.norm().max(1e-12);
        prop_assert!(rel <= 1e-8, "reconstruction residual {}", rel);
        for w in sd.values.as_slice().windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn rank_two_eigenvalues_match_eigensolver(a in vector(6), b in vector(6)) {
        prop_assume!(a.norm() > 1e-6 && b.norm() > 1e-6);
        let outer = symmetrize(&(&a * b.transpose() + &b * a.transpose())).unwrap();
        let sd = spectral_decompose(&outer).unwrap();
        let (hi, lo) = rank_two_eigenvalues(&RankTwoPair { a, b }).unwrap();
        let scale = hi.abs().max(lo.abs()).max(1.0);
        prop_assert!((sd.values[0] - hi).abs() <= 1e-9 * scale);
        prop_assert!((sd.values[5] - lo).abs() <= 1e-9 * scale);
    }

    #[test]
    fn basis_selection_is_nonempty_and_proper(c in vector(6)) {
        prop_assume!(c.iter().any(|v| *v != 0.0));
        let mags: Vec<f64> = c.iter().map(|v| v.abs()).collect();
        let all_equal = mags.iter().all(|m| *m == mags[0]);
        for strategy in [BasisStrategy::Gap, BasisStrategy::Kmeans2] {
            let s = select_basis(&c, strategy).unwrap();
            prop_assert!(!s.is_empty());
            if all_equal {
                prop_assert_eq!(s.len(), 6);
            } else {
                prop_assert!(s.len() < 6);
            }
        }
    }

    #[test]
    fn scatter_shift_identity_holds(rows in proptest::collection::vec(finite_entry(), 36)) {
        let data = Dataset::new(DMatrix::from_vec(12, 3, rows)).unwrap();
        let stats = sufficient_stats(&data).unwrap();
        let mu = DVector::from_vec(vec![0.3, -1.2, 2.0]);
        // A(mu) = nS + n (xbar - mu)(xbar - mu)'
        let a = stats.scatter_about(&mu);
        let d = &stats.mean - &mu;
        let direct = &stats.scatter * 12.0 + (&d * d.transpose()) * 12.0;
        let rel = (&a - &direct).norm() / direct.norm().max(1e-12);
        prop_assert!(rel <= 1e-9);
    }
}
