//! Gram-Schmidt error-state basis and residual complement.

use crate::error::{Error, Result};
use crate::error_sets::ErrorSetHierarchy;
use crate::kl::{check_knill_laflamme, DEFAULT_KL_TOLERANCE};
use crate::linalg::{c, CVector};
use crate::superop::Operator;

use super::models::basis_vector;

pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorBasis {
    pub dim: usize,
    pub order: usize,
    /// `families[j][n][i]`: i-th order-n error state of codeword j; `families[j][0] = [μ_j]`.
    pub families: Vec<Vec<Vec<CVector>>>,
    /// p_n, shared by all codewords.
    pub counts: Vec<usize>,
    pub residual: Vec<CVector>,
}

impl ErrorBasis {
    pub fn code_dim(&self) -> usize {
        self.families.len()
    }

    pub fn state(&self, codeword: usize, n: usize, i: usize) -> &CVector {
        &self.families[codeword][n][i]
    }

    pub fn code_basis(&self) -> Vec<CVector> {
        self.families.iter().map(|f| f[0][0].clone()).collect()
    }

    pub fn q_max(&self) -> usize {
        self.residual.len()
    }

    /// Projector onto all order-n error states (n = 0 is the code projector).
    pub fn weight_projector(&self, n: usize) -> Operator {
        let states: Vec<CVector> = self.families.iter().flat_map(|f| f[n].clone()).collect();
        Operator::projector(self.dim, &states)
    }

    pub fn residual_projector(&self) -> Operator {
        Operator::projector(self.dim, &self.residual)
    }

    /// Every basis state: families codeword by codeword, then the residual states.
    pub fn all_states(&self) -> Vec<CVector> {
        let mut out: Vec<CVector> = self.families.iter().flatten().flatten().cloned().collect();
        out.extend(self.residual.iter().cloned());
        out
    }

    /// Applies an isometry (rows = new dimension) to every state.
    pub fn embedded(&self, iso: &crate::linalg::CMatrix) -> Self {
        let map = |v: &CVector| iso * v;
        Self {
            dim: iso.nrows(),
            order: self.order,
            families: self
                .families
                .iter()
                .map(|f| f.iter().map(|s| s.iter().map(map).collect()).collect())
                .collect(),
            counts: self.counts.clone(),
            residual: self.residual.iter().map(map).collect(),
        }
    }
}

/// Removes the components along orthonormal `against`, twice for stability.
fn orthogonalize(v: &mut CVector, against: &[CVector]) {
    for _ in 0..2 {
        for u in against {
            let p = u.dotc(v);
            *v -= u * p;
        }
    }
}

pub fn gram_schmidt_error_basis(
    code_basis: &[CVector],
    hierarchy: &ErrorSetHierarchy,
    tol_rank: f64,
) -> Result<ErrorBasis> {
    let report = check_knill_laflamme(code_basis, hierarchy, DEFAULT_KL_TOLERANCE)?;
    if !report.passed {
        return Err(Error::KnillLaflamme {
            worst: report.worst_residual,
        });
    }
    let dim = hierarchy.dim();
    let c_order = hierarchy.order;
    let mut families = Vec::with_capacity(code_basis.len());
    for mu in code_basis {
        let mut acc = vec![mu.clone()];
        let mut fam = vec![vec![mu.clone()]];
        for n in 1..=c_order {
            let mut level = Vec::new();
            for e in &hierarchy.sets[n] {
                let mut v = e.op.matrix() * mu;
                orthogonalize(&mut v, &acc);
                let nrm = v.norm();
                if nrm < tol_rank {
                    continue;
                }
                v /= c(nrm);
                acc.push(v.clone());
                level.push(v);
            }
            fam.push(level);
        }
        families.push(fam);
    }
    let counts: Vec<usize> = families[0].iter().map(Vec::len).collect();
    for (j, fam) in families.iter().enumerate() {
        let cj: Vec<usize> = fam.iter().map(Vec::len).collect();
        if cj != counts {
            return Err(Error::Inconsistent(format!(
                "error-state counts {cj:?} of codeword {j} differ from {counts:?}; \
                 Knill-Laflamme tolerance is too loose for this model"
            )));
        }
    }
    let mut worst: f64 = 0.0;
    for a in 0..families.len() {
        for b in (a + 1)..families.len() {
            for u in families[a].iter().flatten() {
                for v in families[b].iter().flatten() {
                    worst = worst.max(u.dotc(v).norm());
                }
            }
        }
    }
    if worst > 1e-8 {
        return Err(Error::Inconsistent(format!(
            "error families of different codewords overlap ({worst:.3e})"
        )));
    }
    let mut span: Vec<CVector> = families.iter().flatten().flatten().cloned().collect();
    let q_max = dim
        .checked_sub(span.len())
        .ok_or_else(|| Error::Inconsistent("more error states than dimensions".into()))?;
    let mut residual = Vec::with_capacity(q_max);
    for _ in 0..q_max {
        let best = (0..dim)
            .map(|i| {
                let mut v = basis_vector(dim, i);
                orthogonalize(&mut v, &span);
                v
            })
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.norm().total_cmp(&b.norm()).then(ib.cmp(ia)))
            .map(|(_, v)| v)
            .expect("dimension is positive");
        let nrm = best.norm();
        if nrm < 1e-6 {
            return Err(Error::Numerical("residual complement lost rank".into()));
        }
        let v = best / c(nrm);
        span.push(v.clone());
        residual.push(v);
    }
    Ok(ErrorBasis {
        dim,
        order: c_order,
        families,
        counts,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factory::models::{lowering3, toy6};

    #[test]
    fn toy6_basis_is_the_level_basis() {
        let m = toy6();
        let b = gram_schmidt_error_basis(&m.code_basis, &m.hierarchy(1).unwrap(), 1e-8).unwrap();
        assert_eq!(b.counts, vec![1, 2]);
        assert_eq!(b.q_max(), 0);
        let expected = [[0, 2, 3], [1, 4, 5]];
        for (j, levels) in expected.iter().enumerate() {
            let got = [b.state(j, 0, 0), b.state(j, 1, 0), b.state(j, 1, 1)];
            for (v, &l) in got.iter().zip(levels) {
                assert!((*v - basis_vector(6, l)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn order_zero_basis() {
        let m = toy6();
        let b = gram_schmidt_error_basis(&m.code_basis, &m.hierarchy(0).unwrap(), 1e-8).unwrap();
        assert_eq!(b.counts, vec![1]);
        assert_eq!(b.q_max(), 4);
    }

    #[test]
    fn lowering3_counts() {
        let m = lowering3();
        let b = gram_schmidt_error_basis(&m.code_basis, &m.hierarchy(1).unwrap(), 1e-8).unwrap();
        assert_eq!(b.counts, vec![1, 1]);
        assert_eq!(b.q_max(), 1);
        assert!((b.residual[0][2].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn refuses_without_knill_laflamme() {
        let m = toy6();
        let r = gram_schmidt_error_basis(&m.code_basis, &m.hierarchy(2).unwrap(), 1e-8);
        assert!(matches!(r, Err(Error::KnillLaflamme { .. })));
    }
}
