use autoqec::dynamics::{occupancy_sweep, probe_states, System};
use autoqec::effective::effective_liouvillian_h0_zero;
use autoqec::error::Error;
use autoqec::factory::models::{lowering3, pauli, toy6, CodeModel};
use autoqec::factory::variants::{build_copy_space_model, syndrome_mixing, syndrome_mixing_per_codeword};
use autoqec::factory::{pseudo_inverse_residuals, synthesize};
use autoqec::kl::{check_knill_laflamme, DEFAULT_KL_TOLERANCE};
use autoqec::linalg::{expm, relaxation_integral};
use autoqec::superop::spectral_kernel_projector;
use autoqec::verify::{check_lemma_condition, DEFAULT_K1, DEFAULT_K2, DEFAULT_LEMMA_TOLERANCE};
use autoqec::{CMatrix, CVector, Operator, Superoperator, C64};
use proptest::prelude::*;

fn rotated(model: &CodeModel, u: &CMatrix) -> Vec<CVector> {
    let v = CMatrix::from_columns(&model.code_basis) * u;
    v.column_iter().map(|c| c.into_owned()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn kl_verdict_is_basis_independent(x in prop::collection::vec(-1.0f64..1.0, 8)) {
        let m = toy6();
        let h = CMatrix::from_fn(2, 2, |i, j| C64::new(x[2 * (2 * i + j)], x[2 * (2 * i + j) + 1]));
        let u = expm(&((&h + h.adjoint()) * C64::new(0.0, 1.0)), 1.0).unwrap();
        let basis = rotated(&m, &u);
        for (order, pass) in [(1, true), (2, false)] {
            let hier = m.hierarchy(order).unwrap();
            let a = check_knill_laflamme(&m.code_basis, &hier, DEFAULT_KL_TOLERANCE).unwrap();
            let b = check_knill_laflamme(&basis, &hier, DEFAULT_KL_TOLERANCE).unwrap();
            prop_assert_eq!(a.passed, pass);
            prop_assert_eq!(b.passed, pass);
            prop_assert!((a.worst_residual - b.worst_residual).abs() < 1e-9 * a.worst_residual.max(1.0));
        }
    }
}

#[test]
fn kl_failure_names_pair() {
    let m = toy6();
    let rep = check_knill_laflamme(&m.code_basis, &m.hierarchy(2).unwrap(), DEFAULT_KL_TOLERANCE).unwrap();
    assert!(!rep.passed);
    let pair = &rep.offending_pairs[0];
    assert!(pair.residual > 1e-3);
    assert!(!pair.left.to_string().is_empty() && !pair.right.to_string().is_empty());
}

#[test]
fn recovery_projector_invariants() {
    for m in [toy6(), lowering3()] {
        let s = synthesize(&m, None).unwrap();
        let pe = &s.recovery_projector;
        let spectral = spectral_kernel_projector(&s.engineered_liouvillian).unwrap();
        assert!((pe - &spectral).norm() < 1e-8, "{}", m.name);
        assert!((&(pe * pe) - pe).norm() < 1e-10);
        assert!((pe * &s.engineered_liouvillian).norm() < 1e-10);
        assert!((&s.engineered_liouvillian * pe).norm() < 1e-10);
        let pc = s.code_superprojector();
        assert!((&(&pc * pe) - pe).norm() < 1e-10);
    }
}

#[test]
fn pseudo_inverse_matches_quadrature() {
    for m in [toy6(), lowering3()] {
        let s = synthesize(&m, None).unwrap();
        let quad = relaxation_integral(
            s.engineered_liouvillian.matrix(),
            s.complementary_projector.matrix(),
        )
        .unwrap();
        assert!((s.pseudo_inverse.matrix() - quad).norm() < 1e-7, "{}", m.name);
        let (a, b) = pseudo_inverse_residuals(&s.engineered_liouvillian, &s.pseudo_inverse);
        assert!(a < 1e-9 && b < 1e-9);
    }
}

#[test]
fn lowering_ladder_shape() {
    let s = synthesize(&lowering3(), None).unwrap();
    assert_eq!(s.error_basis.counts, vec![1, 1]);
    assert_eq!(s.error_basis.q_max(), 1);
}

#[test]
fn lemma_holds_on_builtins_at_certified_order() {
    let toy = toy6();
    let s = synthesize(&toy, Some(&pauli('x').unwrap())).unwrap();
    let sys = System::new(&toy, &s).unwrap();
    assert!(check_lemma_condition(&sys, 1, DEFAULT_K1, DEFAULT_K2, DEFAULT_LEMMA_TOLERANCE).unwrap().passed);
    let low = lowering3();
    let s = synthesize(&low, None).unwrap();
    let sys = System::new(&low, &s).unwrap();
    assert!(check_lemma_condition(&sys, 1, DEFAULT_K1, DEFAULT_K2, DEFAULT_LEMMA_TOLERANCE).unwrap().passed);
}

#[test]
fn syndrome_mixing_keeps_lemma_and_breaks_commutation() {
    let m = toy6();
    let s = synthesize(&m, Some(&pauli('x').unwrap())).unwrap();
    let z = C64::new(0.0, 0.0);
    let e1 = CMatrix::from_row_slice(2, 2, &[z, C64::new(1.0, 0.0), z, z]);
    let dh = syndrome_mixing(&s.error_basis, &[CMatrix::zeros(1, 1), e1.clone()]).unwrap();
    let h = Operator::new(s.eth.matrix() + dh.matrix()).unwrap();
    let sys = System::with_hamiltonian(&m, &s, &h).unwrap();
    assert!(check_lemma_condition(&sys, 1, DEFAULT_K1, DEFAULT_K2, DEFAULT_LEMMA_TOLERANCE).unwrap().passed);
    let f1 = m.natural_jumps[0].matrix();
    let pc = s.code_projector();
    let comm = (dh.matrix() * f1 - f1 * dh.matrix()) * pc.matrix();
    assert!(comm.norm() > 0.5);

    let sabotaged = syndrome_mixing_per_codeword(
        &s.error_basis,
        &[
            vec![CMatrix::zeros(1, 1), e1.clone()],
            vec![CMatrix::zeros(1, 1), e1 * C64::new(0.3, 0.0)],
        ],
    )
    .unwrap();
    let h = Operator::new(s.eth.matrix() + sabotaged.matrix()).unwrap();
    let sys = System::with_hamiltonian(&m, &s, &h).unwrap();
    let rep = check_lemma_condition(&sys, 1, DEFAULT_K1, DEFAULT_K2, DEFAULT_LEMMA_TOLERANCE).unwrap();
    assert!(!rep.passed && rep.worst.1 > 1e-3);
}

#[test]
fn copy_space_model_passes_lemma() {
    let m = toy6();
    let s = synthesize(&m, Some(&pauli('x').unwrap())).unwrap();
    let cm = build_copy_space_model(&m, &s).unwrap();
    let sys = System::new(&cm.model, &cm.synthesis).unwrap();
    assert_eq!(sys.dim, 12);
    assert!(check_lemma_condition(&sys, 1, DEFAULT_K1, DEFAULT_K2, DEFAULT_LEMMA_TOLERANCE).unwrap().passed);
    let p = cm.synthesis.code_projector();
    let off = (cm.synthesis.eth.matrix() - cm.synthesis.embedded_h0().matrix()) * p.matrix();
    assert!(off.norm() > 0.9);
}

#[test]
fn natural_dissipation_alone_leaves_first_order_uncancelled() {
    // Without engineering, the recovery projector is P_C itself and nothing cancels.
    let m = toy6();
    let s = synthesize(&m, None).unwrap();
    let mut sys = System::new(&m, &s).unwrap();
    let pc = sys.code_superprojector();
    sys.recovery = pc.clone();
    sys.pseudo_inverse = Superoperator::zeros(sys.dim);
    let err = effective_liouvillian_h0_zero(&sys, 1.0, 10.0, 2).unwrap_err();
    assert!(matches!(err, Error::Cancellation { order: 1, .. }));
}

#[test]
fn weight_one_occupancy_falls_as_one_over_r() {
    let m = toy6();
    let s = synthesize(&m, None).unwrap();
    let sys = System::new(&m, &s).unwrap();
    let probes = probe_states(&sys.code_basis);
    let rs = [20.0, 40.0, 80.0, 160.0];
    let rec = occupancy_sweep(&sys, 1.0, &rs, &probes, 1, 20.0).unwrap();
    let fit = rec.fit.unwrap();
    assert!((fit.exponent - 1.0).abs() < 0.2, "{fit:?}");
}
