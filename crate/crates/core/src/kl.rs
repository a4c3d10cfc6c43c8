//! Knill-Laflamme condition on an error-set hierarchy.

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::error_sets::{ErrorLabel, ErrorSetHierarchy};
use crate::factory::basis::ErrorBasis;
use crate::factory::models::check_orthonormal;
use crate::linalg::{c, CMatrix, CVector, C64};
use crate::superop::Operator;

pub const DEFAULT_KL_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct OffendingPair {
    pub left: ErrorLabel,
    pub right: ErrorLabel,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct KlReport {
    pub order: usize,
    pub passed: bool,
    pub tolerance: f64,
    pub labels: Vec<ErrorLabel>,
    /// Γ_{E',E}, rows and columns indexed like `labels`.
    pub gram: CMatrix,
    pub worst_residual: f64,
    /// Pairs (E', E) with E' listed no later than E, worst first.
    pub offending_pairs: Vec<OffendingPair>,
}

pub fn check_knill_laflamme(
    code_basis: &[CVector],
    hierarchy: &ErrorSetHierarchy,
    tol: f64,
) -> Result<KlReport> {
    let dim = hierarchy.dim();
    for (i, v) in code_basis.iter().enumerate() {
        check_dim(&format!("codeword {i}"), dim, v.len())?;
    }
    check_orthonormal(code_basis, 1e-10)?;
    let v = CMatrix::from_columns(code_basis);
    let dc = code_basis.len() as f64;
    let entries: Vec<_> = hierarchy.all().collect();
    let images: Vec<CMatrix> = entries.iter().map(|e| e.op.matrix() * &v).collect();
    let n = entries.len();
    let rows: Vec<Vec<(C64, f64)>> = (0..n)
        .into_par_iter()
        .map(|a| {
            (0..n)
                .map(|b| {
                    let m = images[a].adjoint() * &images[b];
                    let gamma = m.trace() / c(dc);
                    let mut r = m;
                    for i in 0..r.nrows() {
                        r[(i, i)] -= gamma;
                    }
                    (gamma, r.norm())
                })
                .collect()
        })
        .collect();
    let gram = CMatrix::from_fn(n, n, |a, b| rows[a][b].0);
    let mut worst: f64 = 0.0;
    let mut offending = Vec::new();
    for a in 0..n {
        for b in a..n {
            let r = rows[a][b].1;
            worst = worst.max(r);
            if r >= tol {
                offending.push(OffendingPair {
                    left: entries[a].label.clone(),
                    right: entries[b].label.clone(),
                    residual: r,
                });
            }
        }
    }
    offending.sort_by(|x, y| y.residual.total_cmp(&x.residual));
    Ok(KlReport {
        order: hierarchy.order,
        passed: worst < tol,
        tolerance: tol,
        labels: entries.iter().map(|e| e.label.clone()).collect(),
        gram,
        worst_residual: worst,
        offending_pairs: offending,
    })
}

#[derive(Clone, Debug)]
pub struct KlCoefficients {
    pub order: usize,
    /// Ω_i = ⟨μ_{a,i}^[n]|E|μ_a⟩, common to all codewords a.
    pub omegas: Vec<C64>,
    pub max_deviation: f64,
}

/// Expansion coefficients of E|μ_b⟩ on the order-`order` error states, with the deviation
/// from the codeword-independent form ⟨μ_{a,i}|E|μ_b⟩ = Ω_i δ_ab.
pub fn kl_coefficients(
    report: &KlReport,
    basis: &ErrorBasis,
    error: &Operator,
    order: usize,
) -> Result<KlCoefficients> {
    if !report.passed {
        return Err(Error::KnillLaflamme {
            worst: report.worst_residual,
        });
    }
    if order > basis.order {
        return Err(Error::InvalidInput(format!(
            "order {order} exceeds basis order {}",
            basis.order
        )));
    }
    check_dim("error operator", basis.dim, error.dim())?;
    let dc = basis.code_dim();
    let mut omegas = Vec::with_capacity(basis.counts[order]);
    let mut dev: f64 = 0.0;
    for i in 0..basis.counts[order] {
        let omega = basis.state(0, order, i).dotc(&(error.matrix() * basis.state(0, 0, 0)));
        for a in 0..dc {
            for b in 0..dc {
                let val = basis.state(a, order, i).dotc(&(error.matrix() * basis.state(b, 0, 0)));
                let want = if a == b { omega } else { c(0.0) };
                dev = dev.max((val - want).norm());
            }
        }
        omegas.push(omega);
    }
    Ok(KlCoefficients {
        order,
        omegas,
        max_deviation: dev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factory::models::toy6;

    #[test]
    fn order_zero_passes_trivially() {
        let m = toy6();
        let h = m.hierarchy(0).unwrap();
        let r = check_knill_laflamme(&m.code_basis, &h, DEFAULT_KL_TOLERANCE).unwrap();
        assert!(r.passed);
        assert!((r.gram[(0, 0)] - c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn toy6_first_order_passes_second_fails() {
        let m = toy6();
        let r1 = check_knill_laflamme(&m.code_basis, &m.hierarchy(1).unwrap(), 1e-9).unwrap();
        assert!(r1.passed && r1.worst_residual < 1e-12);
        let r2 = check_knill_laflamme(&m.code_basis, &m.hierarchy(2).unwrap(), 1e-9).unwrap();
        assert!(!r2.passed);
        assert!(!r2.offending_pairs.is_empty());
        assert_eq!(r2.offending_pairs[0].residual, r2.worst_residual);
    }

    #[test]
    fn non_orthonormal_basis_rejected() {
        let m = toy6();
        let mut basis = m.code_basis.clone();
        basis[1] = &basis[1] + &basis[0] * c(0.1);
        let r = check_knill_laflamme(&basis, &m.hierarchy(1).unwrap(), 1e-9);
        assert!(matches!(r, Err(Error::NotOrthonormal { .. })));
    }
}
