use autoqec::error_sets::{symmetrized_product, SymmetrizedProducts};
use autoqec::linalg::{expm, expm_eig};
use autoqec::superop::{devectorize, dissipator_superop, hamiltonian_superop, vectorize};
use autoqec::{CMatrix, Operator, Superoperator, C64};
use proptest::prelude::*;

fn matrix(n: usize) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec(-1.0f64..1.0, 2 * n * n)
        .prop_map(move |v| CMatrix::from_fn(n, n, |i, j| C64::new(v[2 * (i * n + j)], v[2 * (i * n + j) + 1])))
}

fn superop(d: usize) -> impl Strategy<Value = Superoperator> {
    matrix(d * d).prop_map(move |m| {
        let s = m.norm().max(1e-12);
        Superoperator::new(d, m / C64::from(s)).unwrap()
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sandwich_matches_vectorized_product(a in matrix(3), b in matrix(3), x in matrix(3)) {
        let lhs = vectorize(&(&a * &x * &b));
        let rhs = Superoperator::sandwich(&a, &b).matrix() * vectorize(&x);
        prop_assert!((lhs - rhs).norm() < 1e-12);
        let back = devectorize(&vectorize(&x)).unwrap();
        prop_assert_eq!(back.matrix(), &x);
    }

    #[test]
    fn dissipator_is_traceless_and_hermiticity_preserving(f in matrix(3), x in matrix(3)) {
        let d = dissipator_superop(&Operator::new(f).unwrap());
        let rho = &x + x.adjoint();
        let out = d.apply(&rho);
        prop_assert!(out.trace().norm() < 1e-12);
        prop_assert!((&out - out.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn commutator_superop_of_hermitian(x in matrix(3), y in matrix(3)) {
        let h = Operator::new(&x + x.adjoint()).unwrap();
        let s = hamiltonian_superop(&h).unwrap();
        let want = h.matrix() * &y - &y * h.matrix();
        prop_assert!((s.apply(&y) - want).norm() < 1e-12);
    }

    #[test]
    fn pade_and_eigen_exponentials_agree(m in matrix(9), t in 0.0f64..2.0) {
        let a = expm(&m, t).unwrap();
        let b = expm_eig(&m, t).unwrap();
        prop_assert!((&a - &b).norm() < 1e-8 * a.norm().max(1.0));
    }

    #[test]
    fn expm_group_law(m in matrix(4), s in 0.0f64..1.0, t in 0.0f64..1.0) {
        let lhs = expm(&m, s + t).unwrap();
        let rhs = expm(&m, s).unwrap() * expm(&m, t).unwrap();
        prop_assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn symmetrized_binomial_identity(a in superop(2), b in superop(2), n in 0usize..=5) {
        let sum = &a + &b;
        let mut total = CMatrix::zeros(4, 4);
        for k in 0..=n {
            total += symmetrized_product(&[(&a, k), (&b, n - k)], 8).unwrap().into_matrix();
        }
        prop_assert!((total - sum.power(n).into_matrix()).norm() < 1e-10);
    }

    #[test]
    fn symmetrized_commuting_factors_reduce_to_binomials(x in matrix(2), k1 in 0usize..=3, k2 in 0usize..=2) {
        // Commuting factors: the sum over orderings counts each word once.
        let a = Superoperator::sandwich(&(&x + x.adjoint()), &CMatrix::identity(2, 2));
        let b = a.scale(C64::new(0.5, 0.0));
        let s = symmetrized_product(&[(&a, k1), (&b, k2)], 8).unwrap();
        let want = (&a.power(k1) * &b.power(k2)).scale(C64::from(binomial(k1 + k2, k1)));
        prop_assert!((&s - &want).norm() < 1e-10 * want.norm().max(1.0));
    }

    #[test]
    fn symmetrized_permutation_invariance(a in superop(2), b in superop(2), c in superop(2),
                                          k1 in 0usize..=2, k2 in 0usize..=2, k3 in 0usize..=1) {
        let x = symmetrized_product(&[(&a, k1), (&b, k2), (&c, k3)], 8).unwrap();
        let y = symmetrized_product(&[(&c, k3), (&a, k1), (&b, k2)], 8).unwrap();
        let z = symmetrized_product(&[(&b, k2), (&c, k3), (&a, k1)], 8).unwrap();
        prop_assert!((&x - &y).norm() < 1e-10);
        prop_assert!((&x - &z).norm() < 1e-10);
    }

    #[test]
    fn symmetrized_recursivity(a in superop(2), b in superop(2), c in superop(2),
                               k1 in 1usize..=2, k2 in 1usize..=2, k3 in 0usize..=1) {
        let mut s = SymmetrizedProducts::new(&[&a, &b, &c], 8);
        let full = s.get(&[k1, k2, k3]).unwrap();
        let mut rec = a.matrix() * s.get(&[k1 - 1, k2, k3]).unwrap()
            + b.matrix() * s.get(&[k1, k2 - 1, k3]).unwrap();
        if k3 > 0 {
            rec += c.matrix() * s.get(&[k1, k2, k3 - 1]).unwrap();
        }
        prop_assert!((full - rec).norm() < 1e-10);
    }

    #[test]
    fn exponential_of_sum_is_series_of_symmetrized(a in superop(2), b in superop(2)) {
        let t = 0.3;
        let sum = (&a + &b).into_matrix();
        let exact = expm(&sum, t).unwrap();
        let mut series = CMatrix::zeros(4, 4);
        let mut fact = 1.0;
        for n in 0..=8 {
            if n > 0 {
                fact *= n as f64;
            }
            for k in 0..=n {
                let s = symmetrized_product(&[(&a, k), (&b, n - k)], 8).unwrap();
                series += s.into_matrix() * C64::from(t.powi(n as i32) / fact);
            }
        }
        prop_assert!((exact - series).norm() < 1e-9);
    }
}
