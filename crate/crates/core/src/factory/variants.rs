//! Alternative error-transparent Hamiltonians: syndrome mixing and the doubled copy space.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{c, restricted_inverse, CMatrix, CVector};
use crate::superop::{lindbladian, spectral_kernel_projector, Operator, Superoperator};

use super::basis::ErrorBasis;
use super::models::CodeModel;
use super::{EngineeredJump, SynthesisResult};

/// ΔH = X + X† with X = Σ_k Σ_n Σ_{i,j} couplings[n][i,j] |μ_{k,i}^[n]⟩⟨μ_{k,j}^[n]|.
/// `couplings[n]` is p_n × p_n; missing orders contribute nothing.
pub fn syndrome_mixing(basis: &ErrorBasis, couplings: &[CMatrix]) -> Result<Operator> {
    let per_codeword = vec![couplings.to_vec(); basis.code_dim()];
    syndrome_mixing_per_codeword(basis, &per_codeword)
}

/// Same as [`syndrome_mixing`] but with couplings chosen separately for every codeword.
/// Codeword-dependent couplings generally break error transparency.
pub fn syndrome_mixing_per_codeword(
    basis: &ErrorBasis,
    couplings: &[Vec<CMatrix>],
) -> Result<Operator> {
    check_dim("coupling codewords", basis.code_dim(), couplings.len())?;
    let mut x = CMatrix::zeros(basis.dim, basis.dim);
    for (k, per_order) in couplings.iter().enumerate() {
        if per_order.len() > basis.order + 1 {
            return Err(Error::InvalidInput(format!(
                "couplings given for {} orders, basis has {}",
                per_order.len(),
                basis.order + 1
            )));
        }
        for (n, e) in per_order.iter().enumerate() {
            let p = basis.counts[n];
            check_dim(&format!("coupling order {n} rows"), p, e.nrows())?;
            check_dim(&format!("coupling order {n} columns"), p, e.ncols())?;
            for i in 0..p {
                for j in 0..p {
                    if e[(i, j)] != c(0.0) {
                        x += basis.state(k, n, i) * basis.state(k, n, j).adjoint() * e[(i, j)];
                    }
                }
            }
        }
    }
    Ok(Operator::wrap(&x + x.adjoint()))
}

/// The base model doubled by a copy space, with its own construction.
#[derive(Clone, Debug)]
pub struct CopySpaceModel {
    pub model: CodeModel,
    pub synthesis: SynthesisResult,
    /// 2d × d isometry placing the base space in the original half.
    pub embedding: CMatrix,
    /// 2d × d isometry placing the base space in the copy half.
    pub copy_map: CMatrix,
}

/// Doubles the Hilbert space. The Hamiltonian acts as the base ETH on both halves and swaps
/// them; engineered jumps return copy-space error states to their originals. With
/// `return_copied_code` the copied code space is also pumped back to the code space, which is
/// needed for it not to be stationary.
pub fn build_copy_space_model_with(
    base: &CodeModel,
    synth: &SynthesisResult,
    return_copied_code: bool,
) -> Result<CopySpaceModel> {
    let d = base.dim;
    check_dim("synthesis dimension", d, synth.dim())?;
    let big = 2 * d;
    let embedding = CMatrix::from_fn(big, d, |r, col| c(if r == col { 1.0 } else { 0.0 }));
    let copy_map = CMatrix::from_fn(big, d, |r, col| c(if r == col + d { 1.0 } else { 0.0 }));
    let up = |m: &CMatrix| &embedding * m * embedding.adjoint();
    let code_basis: Vec<CVector> = base.code_basis.iter().map(|v| &embedding * v).collect();
    let natural: Vec<Operator> = base
        .natural_jumps
        .iter()
        .map(|f| Operator::wrap(up(f.matrix())))
        .collect();
    let swap = &copy_map * embedding.adjoint();
    let h = up(synth.eth.matrix())
        + &copy_map * synth.eth.matrix() * copy_map.adjoint()
        + &swap
        + swap.adjoint();
    let b = &synth.error_basis;
    let mut jumps: Vec<EngineeredJump> = synth
        .engineered_jumps
        .iter()
        .map(|j| EngineeredJump {
            label: j.label.clone(),
            op: Operator::wrap(up(j.op.matrix())),
        })
        .collect();
    let first = usize::from(!return_copied_code);
    for n in first..=b.order {
        for i in 0..b.counts[n] {
            let mut m = CMatrix::zeros(big, big);
            for k in 0..b.code_dim() {
                let s = b.state(k, n, i);
                m += (&embedding * s) * (&copy_map * s).adjoint();
            }
            jumps.push(EngineeredJump {
                label: format!("C{}.{}", n, i + 1),
                op: Operator::wrap(m),
            });
        }
    }
    for (q, phi) in b.residual.iter().enumerate() {
        jumps.push(EngineeredJump {
            label: format!("CR{}", q + 1),
            op: Operator::outer(&(&embedding * phi), &(&copy_map * phi)),
        });
    }
    let ops: Vec<Operator> = jumps.iter().map(|j| j.op.clone()).collect();
    let l_e = lindbladian(big, &ops)?;
    let p_e = spectral_kernel_projector(&l_e)?;
    let q_e = &Superoperator::identity(big) - &p_e;
    let pinv = Superoperator::wrap(big, restricted_inverse(l_e.matrix(), q_e.matrix())?);
    let mut model = CodeModel::new(
        format!("{}-copy", base.name),
        big,
        code_basis.clone(),
        natural,
        base.order,
    )?;
    model.h0_logical = Some(synth.h0_logical.clone());
    let synthesis = SynthesisResult {
        order: synth.order,
        code_basis,
        error_basis: b.embedded(&embedding),
        engineered_jumps: jumps,
        return_states: synth.return_states.iter().map(|v| &embedding * v).collect(),
        h0_logical: synth.h0_logical.clone(),
        eth: Operator::wrap(h),
        engineered_liouvillian: l_e,
        recovery_projector: p_e,
        complementary_projector: q_e,
        pseudo_inverse: pinv,
    };
    Ok(CopySpaceModel {
        model,
        synthesis,
        embedding,
        copy_map,
    })
}

pub fn build_copy_space_model(base: &CodeModel, synth: &SynthesisResult) -> Result<CopySpaceModel> {
    build_copy_space_model_with(base, synth, true)
}
