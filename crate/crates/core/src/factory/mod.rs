//! Engineered dissipation, error-transparent Hamiltonians and their projectors.

pub mod basis;
pub mod models;
pub mod variants;

use crate::error::{check_dim, Error, Result};
use crate::error_sets::ErrorSetHierarchy;
use crate::linalg::{c, CMatrix, CVector};
use crate::superop::{lindbladian, spectral_kernel_projector, Operator, Superoperator};

use basis::{gram_schmidt_error_basis, ErrorBasis, DEFAULT_RANK_TOLERANCE};
use models::CodeModel;

#[derive(Clone, Debug, PartialEq)]
pub struct EngineeredJump {
    /// "E<n>.<i>" for error-state returns, "R<q>" for residual states.
    pub label: String,
    pub op: Operator,
}

#[derive(Clone, Debug)]
pub struct SynthesisResult {
    pub order: usize,
    pub code_basis: Vec<CVector>,
    pub error_basis: ErrorBasis,
    pub engineered_jumps: Vec<EngineeredJump>,
    pub return_states: Vec<CVector>,
    pub h0_logical: CMatrix,
    pub eth: Operator,
    pub engineered_liouvillian: Superoperator,
    pub recovery_projector: Superoperator,
    pub complementary_projector: Superoperator,
    pub pseudo_inverse: Superoperator,
}

impl SynthesisResult {
    pub fn dim(&self) -> usize {
        self.error_basis.dim
    }

    pub fn code_dim(&self) -> usize {
        self.code_basis.len()
    }

    pub fn code_projector(&self) -> Operator {
        Operator::projector(self.dim(), &self.code_basis)
    }

    /// ρ ↦ P_C ρ P_C
    pub fn code_superprojector(&self) -> Superoperator {
        let p = self.code_projector();
        Superoperator::sandwich(p.matrix(), p.matrix())
    }

    /// V H₀ V† on the full space.
    pub fn embedded_h0(&self) -> Operator {
        embed_logical(&self.code_basis, &self.h0_logical)
    }

    pub fn jump_operators(&self) -> Vec<Operator> {
        self.engineered_jumps.iter().map(|j| j.op.clone()).collect()
    }
}

pub fn embed_logical(code_basis: &[CVector], h0: &CMatrix) -> Operator {
    let v = CMatrix::from_columns(code_basis);
    Operator::wrap(&v * h0 * v.adjoint())
}

/// Builds the full construction for `model` at its target order.
pub fn synthesize(model: &CodeModel, h0_logical: Option<&CMatrix>) -> Result<SynthesisResult> {
    model.validate(1e-8)?;
    let hierarchy = model.hierarchy(model.order)?;
    let basis = gram_schmidt_error_basis(&model.code_basis, &hierarchy, DEFAULT_RANK_TOLERANCE)?;
    let returns = model.return_states.clone().unwrap_or_default();
    let jumps = build_engineered_jumps(&basis, &returns)?;
    let return_states = resolve_return_states(&basis, &returns)?;
    let h0 = h0_logical.cloned().unwrap_or_else(|| model.h0_or_zero());
    let eth = build_generalized_eth(&h0, &basis)?;
    let h0_full = embed_logical(&model.code_basis, &h0);
    let transparency = eth_transparency_residual(&eth, &h0_full, &hierarchy, &model.code_basis);
    if transparency > 1e-9 * h0.norm().max(1.0) {
        return Err(Error::Inconsistent(format!(
            "constructed Hamiltonian is not error transparent (residual {transparency:.3e})"
        )));
    }
    let ops: Vec<Operator> = jumps.iter().map(|j| j.op.clone()).collect();
    let l_e = lindbladian(model.dim, &ops)?;
    let p_e = recovery_projector_explicit(&ops, &model.code_basis)?;
    let spectral = spectral_kernel_projector(&l_e)?;
    let mismatch = (&p_e - &spectral).norm();
    if mismatch > 1e-6 {
        return Err(Error::Inconsistent(format!(
            "explicit recovery projector differs from the stationary limit by {mismatch:.3e}"
        )));
    }
    let q_e = &Superoperator::identity(model.dim) - &p_e;
    let pinv = pseudo_inverse_le(&ops, &model.code_basis)?;
    let (law1, law2) = pseudo_inverse_residuals(&l_e, &pinv);
    if law1 > 1e-9 || law2 > 1e-9 {
        return Err(Error::Inconsistent(format!(
            "pseudo-inverse laws violated ({law1:.3e}, {law2:.3e})"
        )));
    }
    Ok(SynthesisResult {
        order: model.order,
        code_basis: model.code_basis.clone(),
        error_basis: basis,
        engineered_jumps: jumps,
        return_states,
        h0_logical: h0,
        eth,
        engineered_liouvillian: l_e,
        recovery_projector: p_e,
        complementary_projector: q_e,
        pseudo_inverse: pinv,
    })
}

fn resolve_return_states(basis: &ErrorBasis, given: &[CVector]) -> Result<Vec<CVector>> {
    let q_max = basis.q_max();
    let code = basis.code_basis();
    let raw: Vec<CVector> = match given.len() {
        0 => vec![code[0].clone(); q_max],
        1 => vec![given[0].clone(); q_max],
        n if n == q_max => given.to_vec(),
        n => {
            return Err(Error::InvalidInput(format!(
                "expected 1 or {q_max} return states, got {n}"
            )))
        }
    };
    let p = Operator::projector(basis.dim, &code);
    raw.into_iter()
        .enumerate()
        .map(|(q, v)| {
            check_dim(&format!("return state {q}"), basis.dim, v.len())?;
            let nrm = v.norm();
            if nrm == 0.0 || (p.matrix() * &v - &v).norm() > 1e-8 * nrm {
                return Err(Error::InvalidInput(format!(
                    "return state {q} does not lie in the code space"
                )));
            }
            Ok(v / c(nrm))
        })
        .collect()
}

/// Jumps Σ_j |μ_j⟩⟨μ_{j,i}^[n]| for every error family, then |Φ_q⟩⟨φ_q| for residual states.
/// `return_states` may be empty (first codeword), a single state, or one per residual state.
pub fn build_engineered_jumps(
    basis: &ErrorBasis,
    return_states: &[CVector],
) -> Result<Vec<EngineeredJump>> {
    let returns = resolve_return_states(basis, return_states)?;
    let dim = basis.dim;
    let mut out = Vec::new();
    for n in 1..=basis.order {
        for i in 0..basis.counts[n] {
            let mut m = CMatrix::zeros(dim, dim);
            for j in 0..basis.code_dim() {
                m += basis.state(j, 0, 0) * basis.state(j, n, i).adjoint();
            }
            out.push(EngineeredJump {
                label: format!("E{}.{}", n, i + 1),
                op: Operator::wrap(m),
            });
        }
    }
    for (q, (phi, ret)) in basis.residual.iter().zip(&returns).enumerate() {
        out.push(EngineeredJump {
            label: format!("R{}", q + 1),
            op: Operator::outer(ret, phi),
        });
    }
    Ok(out)
}

/// H = Σ ⟨μ_j|H₀|μ_k⟩ |μ_{j,i}^[n]⟩⟨μ_{k,i}^[n]| over all orders n and family indices i.
pub fn build_generalized_eth(h0_logical: &CMatrix, basis: &ErrorBasis) -> Result<Operator> {
    let dc = basis.code_dim();
    check_dim("logical Hamiltonian rows", dc, h0_logical.nrows())?;
    check_dim("logical Hamiltonian columns", dc, h0_logical.ncols())?;
    let h0 = Operator::new(h0_logical.clone())?;
    if !h0.is_hermitian(1e-10) {
        return Err(Error::NotHermitian {
            residual: h0.hermiticity_residual(),
        });
    }
    let mut h = CMatrix::zeros(basis.dim, basis.dim);
    for n in 0..=basis.order {
        for i in 0..basis.counts[n] {
            for j in 0..dc {
                for k in 0..dc {
                    let a = h0_logical[(j, k)];
                    if a != c(0.0) {
                        h += basis.state(j, n, i) * basis.state(k, n, i).adjoint() * a;
                    }
                }
            }
        }
    }
    Ok(Operator::wrap(h))
}

/// max over E of ‖H E P_C − E H₀ P_C‖ and ‖[H, E] P_C‖.
pub fn eth_transparency_residual(
    h: &Operator,
    h0_full: &Operator,
    hierarchy: &ErrorSetHierarchy,
    code_basis: &[CVector],
) -> f64 {
    let p = Operator::projector(h.dim(), code_basis);
    hierarchy
        .all()
        .map(|e| {
            let he = h.matrix() * e.op.matrix() * p.matrix();
            let a = (&he - e.op.matrix() * h0_full.matrix() * p.matrix()).norm();
            let b = (&he - e.op.matrix() * h.matrix() * p.matrix()).norm();
            a.max(b)
        })
        .fold(0.0, f64::max)
}

/// ρ ↦ P_C ρ P_C + Σ F ρ F†
pub fn recovery_projector_explicit(
    jumps: &[Operator],
    code_basis: &[CVector],
) -> Result<Superoperator> {
    let dim = code_basis
        .first()
        .map(|v| v.len())
        .ok_or_else(|| Error::InvalidInput("empty code basis".into()))?;
    let p = Operator::projector(dim, code_basis);
    let mut out = Superoperator::sandwich(p.matrix(), p.matrix());
    for (i, f) in jumps.iter().enumerate() {
        check_dim(&format!("engineered jump {i}"), dim, f.dim())?;
        out = &out + &Superoperator::sandwich(f.matrix(), &f.matrix().adjoint());
    }
    Ok(out)
}

/// ρ ↦ −2(Q ρ P + P ρ Q) − Q ρ Q + Σ F ρ F†, with P the code projector and Q = I − P.
pub fn pseudo_inverse_le(jumps: &[Operator], code_basis: &[CVector]) -> Result<Superoperator> {
    let dim = code_basis
        .first()
        .map(|v| v.len())
        .ok_or_else(|| Error::InvalidInput("empty code basis".into()))?;
    let p = Operator::projector(dim, code_basis).into_matrix();
    let q = CMatrix::identity(dim, dim) - &p;
    let off = &Superoperator::sandwich(&q, &p) + &Superoperator::sandwich(&p, &q);
    let mut out = &off.scale(c(-2.0)) - &Superoperator::sandwich(&q, &q);
    for (i, f) in jumps.iter().enumerate() {
        check_dim(&format!("engineered jump {i}"), dim, f.dim())?;
        out = &out + &Superoperator::sandwich(f.matrix(), &f.matrix().adjoint());
    }
    Ok(out)
}

/// (‖L X L − L‖, ‖X L X − X‖)
pub fn pseudo_inverse_residuals(l: &Superoperator, x: &Superoperator) -> (f64, f64) {
    let lxl = &(&(l * x) * l) - l;
    let xlx = &(&(x * l) * x) - x;
    (lxl.norm(), xlx.norm())
}
