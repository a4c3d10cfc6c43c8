//! Code models and the built-in model library.

use crate::error::{check_dim, Error, Result};
use crate::error_sets::{build_error_sets_with_extras, ErrorSetHierarchy};
use crate::linalg::{c, CMatrix, CVector};
use crate::superop::Operator;

/// Hilbert space, code subspace, natural noise and target correction order.
#[derive(Clone, Debug, PartialEq)]
pub struct CodeModel {
    pub name: String,
    pub dim: usize,
    pub code_basis: Vec<CVector>,
    pub natural_jumps: Vec<Operator>,
    pub order: usize,
    pub h0_logical: Option<CMatrix>,
    pub return_states: Option<Vec<CVector>>,
    /// Additional first-order errors (e.g. superpositions of jumps) included in the error sets
    /// but not in the natural dissipation.
    pub extra_errors: Vec<Operator>,
}

impl CodeModel {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        code_basis: Vec<CVector>,
        natural_jumps: Vec<Operator>,
        order: usize,
    ) -> Result<Self> {
        let m = Self {
            name: name.into(),
            dim,
            code_basis,
            natural_jumps,
            order,
            h0_logical: None,
            return_states: None,
            extra_errors: Vec::new(),
        };
        m.validate(1e-8)?;
        Ok(m)
    }

    pub fn validate(&self, orthonormal_tol: f64) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        if self.code_basis.is_empty() {
            return Err(Error::InvalidInput("code basis is empty".into()));
        }
        for (i, v) in self.code_basis.iter().enumerate() {
            check_dim(&format!("code_basis[{i}]"), self.dim, v.len())?;
        }
        for (i, f) in self.natural_jumps.iter().enumerate() {
            check_dim(&format!("natural_jumps[{i}]"), self.dim, f.dim())?;
        }
        for (i, f) in self.extra_errors.iter().enumerate() {
            check_dim(&format!("extra_errors[{i}]"), self.dim, f.dim())?;
        }
        if let Some(h0) = &self.h0_logical {
            check_dim("h0_logical rows", self.code_dim(), h0.nrows())?;
            check_dim("h0_logical columns", self.code_dim(), h0.ncols())?;
        }
        if let Some(rs) = &self.return_states {
            for (i, v) in rs.iter().enumerate() {
                check_dim(&format!("return_states[{i}]"), self.dim, v.len())?;
            }
        }
        check_orthonormal(&self.code_basis, orthonormal_tol)
    }

    pub fn code_dim(&self) -> usize {
        self.code_basis.len()
    }

    /// d_H × d_C matrix whose columns are the codewords.
    pub fn code_matrix(&self) -> CMatrix {
        CMatrix::from_columns(&self.code_basis)
    }

    pub fn code_projector(&self) -> Operator {
        Operator::projector(self.dim, &self.code_basis)
    }

    pub fn hierarchy(&self, order: usize) -> Result<ErrorSetHierarchy> {
        build_error_sets_with_extras(self.dim, &self.natural_jumps, &self.extra_errors, order)
    }

    /// Logical Hamiltonian, zero when unset.
    pub fn h0_or_zero(&self) -> CMatrix {
        self.h0_logical
            .clone()
            .unwrap_or_else(|| CMatrix::zeros(self.code_dim(), self.code_dim()))
    }
}

/// max |⟨v_i|v_j⟩ − δ_ij| over the list.
pub fn orthonormality_residual(states: &[CVector]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in states.iter().enumerate() {
        for (j, b) in states.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((a.dotc(b) - c(target)).norm());
        }
    }
    worst
}

pub fn check_orthonormal(states: &[CVector], tol: f64) -> Result<()> {
    let residual = orthonormality_residual(states);
    if residual > tol {
        Err(Error::NotOrthonormal { residual })
    } else {
        Ok(())
    }
}

pub(crate) fn basis_vector(dim: usize, i: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    v[i] = c(1.0);
    v
}

fn ket_bra(dim: usize, pairs: &[(usize, usize, f64)]) -> Operator {
    let mut m = CMatrix::zeros(dim, dim);
    for &(i, j, a) in pairs {
        m[(i, j)] += c(a);
    }
    Operator::wrap(m)
}

pub const BUILTIN_NAMES: [&str; 2] = ["toy6", "lowering3"];

/// Six-level model: codewords μ, ν (levels 0, 1); error states μ₁, μ₂, ν₁, ν₂ (levels 2..5).
pub fn toy6() -> CodeModel {
    let (mu, nu) = (0, 1);
    let jump = |mu_a: usize, nu_a: usize| {
        ket_bra(
            6,
            &[(mu_a, mu, 1.0), (nu_a, nu, 1.0), (mu_a, nu_a, 1.0), (nu_a, mu_a, 1.0)],
        )
    };
    CodeModel::new(
        "toy6",
        6,
        vec![basis_vector(6, mu), basis_vector(6, nu)],
        vec![jump(2, 4), jump(3, 5)],
        1,
    )
    .expect("toy6 is well formed")
}

/// Three-level ladder decaying from the code level 0 down through 1 to 2.
pub fn lowering3() -> CodeModel {
    let f = ket_bra(3, &[(1, 0, 2f64.sqrt()), (2, 1, 1.0)]);
    CodeModel::new("lowering3", 3, vec![basis_vector(3, 0)], vec![f], 1)
        .expect("lowering3 is well formed")
}

pub fn builtin_model(name: &str) -> Result<CodeModel> {
    match name {
        "toy6" => Ok(toy6()),
        "lowering3" => Ok(lowering3()),
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

/// Pauli matrices on a two-dimensional logical space.
pub fn pauli(axis: char) -> Result<CMatrix> {
    use crate::linalg::I;
    let z = c(0.0);
    let o = c(1.0);
    match axis {
        'x' => Ok(CMatrix::from_row_slice(2, 2, &[z, o, o, z])),
        'y' => Ok(CMatrix::from_row_slice(2, 2, &[z, -I, I, z])),
        'z' => Ok(CMatrix::from_row_slice(2, 2, &[o, z, z, -o])),
        other => Err(Error::InvalidInput(format!("unknown Pauli axis '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy6_shape() {
        let m = builtin_model("toy6").unwrap();
        assert_eq!((m.dim, m.code_dim(), m.natural_jumps.len()), (6, 2, 2));
    }

    #[test]
    fn toy6_jumps_are_not_self_adjoint() {
        // F_a maps codewords into error states but not back, so F_a ≠ F_a†.
        for f in &toy6().natural_jumps {
            assert!((f.hermiticity_residual() - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lowering3_shape() {
        let m = lowering3();
        assert_eq!((m.dim, m.code_dim(), m.natural_jumps.len()), (3, 1, 1));
    }

    #[test]
    fn unknown_name_rejected() {
        assert!(matches!(builtin_model("steane"), Err(Error::UnknownModel(_))));
    }

    #[test]
    fn jump_dimension_checked() {
        let r = CodeModel::new("bad", 3, vec![basis_vector(3, 0)], vec![Operator::identity(2)], 1);
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
        let r = CodeModel::new("bad", 2, vec![basis_vector(2, 0), basis_vector(2, 0)], vec![], 0);
        assert!(matches!(r, Err(Error::NotOrthonormal { .. })));
    }
}
