//! Operators, superoperators and density matrices in the column-stacking convention.

use std::ops::{Add, Deref, Mul, Neg, Sub};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, c, CMatrix, CVector, C64};

/// Square complex matrix on a Hilbert space.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator(CMatrix);

impl Operator {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidInput(format!(
                "operator must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if !linalg::is_finite(&m) {
            return Err(Error::InvalidInput("operator has non-finite entries".into()));
        }
        Ok(Self(m))
    }

    pub(crate) fn wrap(m: CMatrix) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        Self(m)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(CMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(CMatrix::identity(dim, dim))
    }

    /// |ket⟩⟨bra|
    pub fn outer(ket: &CVector, bra: &CVector) -> Self {
        Self(ket * bra.adjoint())
    }

    /// Orthogonal projector onto the span of orthonormal `states`.
    pub fn projector(dim: usize, states: &[CVector]) -> Self {
        let mut p = CMatrix::zeros(dim, dim);
        for s in states {
            p += s * s.adjoint();
        }
        Self(p)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        (&self.0 - self.0.adjoint()).norm()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_residual() <= tol * self.norm().max(1.0)
    }

    pub fn scale(&self, z: C64) -> Self {
        Self(&self.0 * z)
    }

    pub fn expm(&self, t: f64) -> Result<Self> {
        linalg::expm(&self.0, t).map(Self)
    }
}

impl Deref for Operator {
    type Target = CMatrix;
    fn deref(&self) -> &CMatrix {
        &self.0
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator(&self.0 * &rhs.0)
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator(&self.0 + &rhs.0)
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator(&self.0 - &rhs.0)
    }
}

/// Linear map on vectorized operators, stored as a d²×d² matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Superoperator {
    dim: usize,
    mat: CMatrix,
}

impl Superoperator {
    pub fn new(dim: usize, mat: CMatrix) -> Result<Self> {
        check_dim("superoperator rows", dim * dim, mat.nrows())?;
        check_dim("superoperator columns", dim * dim, mat.ncols())?;
        if !linalg::is_finite(&mat) {
            return Err(Error::InvalidInput(
                "superoperator has non-finite entries".into(),
            ));
        }
        Ok(Self { dim, mat })
    }

    pub(crate) fn wrap(dim: usize, mat: CMatrix) -> Self {
        debug_assert_eq!(mat.nrows(), dim * dim);
        Self { dim, mat }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::wrap(dim, CMatrix::zeros(dim * dim, dim * dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self::wrap(dim, CMatrix::identity(dim * dim, dim * dim))
    }

    /// ρ ↦ a ρ b
    pub fn sandwich(a: &CMatrix, b: &CMatrix) -> Self {
        Self::wrap(a.nrows(), b.transpose().kronecker(a))
    }

    /// Hilbert-space dimension the map acts on.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn norm(&self) -> f64 {
        self.mat.norm()
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let v = CVector::from_column_slice(rho.as_slice());
        let out = &self.mat * v;
        CMatrix::from_column_slice(self.dim, self.dim, out.as_slice())
    }

    pub fn scale(&self, z: C64) -> Self {
        Self::wrap(self.dim, &self.mat * z)
    }

    pub fn expm(&self, t: f64) -> Result<Self> {
        linalg::expm(&self.mat, t).map(|m| Self::wrap(self.dim, m))
    }

    pub fn expm_eig(&self, t: f64) -> Result<Self> {
        linalg::expm_eig(&self.mat, t).map(|m| Self::wrap(self.dim, m))
    }

    pub fn power(&self, k: usize) -> Self {
        let mut out = Self::identity(self.dim);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }
}

impl Mul for &Superoperator {
    type Output = Superoperator;
    fn mul(self, rhs: &Superoperator) -> Superoperator {
        Superoperator::wrap(self.dim, &self.mat * &rhs.mat)
    }
}

impl Add for &Superoperator {
    type Output = Superoperator;
    fn add(self, rhs: &Superoperator) -> Superoperator {
        Superoperator::wrap(self.dim, &self.mat + &rhs.mat)
    }
}

impl Sub for &Superoperator {
    type Output = Superoperator;
    fn sub(self, rhs: &Superoperator) -> Superoperator {
        Superoperator::wrap(self.dim, &self.mat - &rhs.mat)
    }
}

impl Neg for &Superoperator {
    type Output = Superoperator;
    fn neg(self) -> Superoperator {
        Superoperator::wrap(self.dim, -&self.mat)
    }
}

/// Validated density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        Self::with_tolerance(m, 1e-10, 1e-9)
    }

    /// Checks with explicit Hermiticity/trace tolerance and eigenvalue floor.
    pub fn with_tolerance(m: CMatrix, tol: f64, eig_floor: f64) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidDensityMatrix("not square".into()));
        }
        let herm = (&m - m.adjoint()).norm();
        if herm > tol {
            return Err(Error::InvalidDensityMatrix(format!(
                "Hermiticity residual {herm:.3e}"
            )));
        }
        let tr = m.trace();
        if (tr - c(1.0)).norm() > tol {
            return Err(Error::InvalidDensityMatrix(format!("trace {tr}")));
        }
        let h = (&m + m.adjoint()) * c(0.5);
        let min = h
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min < -eig_floor {
            return Err(Error::InvalidDensityMatrix(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        Ok(Self(m))
    }

    pub fn pure(psi: &CVector) -> Result<Self> {
        let n = psi.norm();
        if !(n > 0.0) {
            return Err(Error::InvalidDensityMatrix("zero state vector".into()));
        }
        let v = psi / c(n);
        Ok(Self(&v * v.adjoint()))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.0 + self.0.adjoint()) * c(0.5);
        h.symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn vectorize(a: &CMatrix) -> CVector {
    CVector::from_column_slice(a.as_slice())
}

pub fn devectorize(v: &CVector) -> Result<Operator> {
    let d = (v.len() as f64).sqrt().round() as usize;
    if d * d != v.len() || d == 0 {
        return Err(Error::InvalidInput(format!(
            "vector length {} is not a positive perfect square",
            v.len()
        )));
    }
    Operator::new(CMatrix::from_column_slice(d, d, v.as_slice()))
}

/// D[a]ρ = aρa† − ½{a†a, ρ}
pub fn dissipator_superop(a: &Operator) -> Superoperator {
    let d = a.dim();
    let id = CMatrix::identity(d, d);
    let ada = a.matrix().adjoint() * a.matrix();
    let m = a.map(|z| z.conj()).kronecker(a.matrix())
        - id.kronecker(&ada) * c(0.5)
        - ada.transpose().kronecker(&id) * c(0.5);
    Superoperator::wrap(d, m)
}

/// Sum of dissipators; the zero map for an empty list.
pub fn lindbladian(dim: usize, jumps: &[Operator]) -> Result<Superoperator> {
    let mut out = Superoperator::zeros(dim);
    for (i, f) in jumps.iter().enumerate() {
        check_dim(&format!("jump {i}"), dim, f.dim())?;
        out = &out + &dissipator_superop(f);
    }
    Ok(out)
}

/// ρ ↦ [H, ρ]; H must be Hermitian.
pub fn hamiltonian_superop(h: &Operator) -> Result<Superoperator> {
    if !h.is_hermitian(1e-10) {
        return Err(Error::NotHermitian {
            residual: h.hermiticity_residual(),
        });
    }
    let d = h.dim();
    let id = CMatrix::identity(d, d);
    let m = id.kronecker(h.matrix()) - h.transpose().kronecker(&id);
    Ok(Superoperator::wrap(d, m))
}

/// lim_{u→∞} e^{L u}, evaluated as e^{L T*} with T* fifty slowest relaxation times.
pub fn spectral_kernel_projector(l: &Superoperator) -> Result<Superoperator> {
    let scale = l.norm().max(1.0);
    let eig = linalg::eigenvalues(l.matrix())?;
    let max_re = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if max_re > 1e-9 * scale {
        return Err(Error::InvalidLindbladian { real_part: max_re });
    }
    let p = match linalg::slowest_decay_rate(l.matrix())? {
        None if l.norm() < 1e-14 => Superoperator::identity(l.dim()),
        None => {
            return Err(Error::Numerical(
                "generator has no relaxing modes; stationary limit does not exist".into(),
            ))
        }
        Some(rate) => l.expm(50.0 / rate)?,
    };
    let idem = (&(&p * &p) - &p).norm();
    if idem >= 1e-8 {
        return Err(Error::Numerical(format!(
            "stationary limit is not idempotent (residual {idem:.3e})"
        )));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sigma_minus() -> Operator {
        Operator::new(CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)])).unwrap()
    }

    #[test]
    fn vectorize_identity() {
        let v = vectorize(&CMatrix::identity(2, 2));
        assert_eq!(v.as_slice(), &[c(1.0), c(0.0), c(0.0), c(1.0)]);
    }

    #[test]
    fn devectorize_rejects_bad_length() {
        assert!(devectorize(&CVector::zeros(3)).is_err());
    }

    #[test]
    fn decay_generator_on_excited_state() {
        let d = dissipator_superop(&sigma_minus());
        let rho = CMatrix::from_row_slice(2, 2, &[c(0.0), c(0.0), c(0.0), c(1.0)]);
        let out = d.apply(&rho);
        let want = CMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)]);
        assert!((out - want).norm() < 1e-15);
    }

    #[test]
    fn zero_jump_gives_zero_map() {
        assert_eq!(dissipator_superop(&Operator::zeros(3)).norm(), 0.0);
    }

    #[test]
    fn identity_hamiltonian_commutes() {
        let h = hamiltonian_superop(&Operator::identity(3)).unwrap();
        assert_eq!(h.norm(), 0.0);
    }

    #[test]
    fn sigma_z_on_plus_state() {
        let z = Operator::new(CMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)]))
            .unwrap();
        let plus = CMatrix::from_element(2, 2, c(0.5));
        let out = hamiltonian_superop(&z).unwrap().apply(&plus);
        let want = CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(-1.0), c(0.0)]);
        assert!((out - want).norm() < 1e-15);
    }

    #[test]
    fn non_hermitian_hamiltonian_rejected() {
        assert!(matches!(
            hamiltonian_superop(&sigma_minus()),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn stationary_limit_of_decay() {
        let p = spectral_kernel_projector(&dissipator_superop(&sigma_minus())).unwrap();
        let rho = CMatrix::from_row_slice(2, 2, &[c(0.3), C64::new(0.1, 0.2), C64::new(0.1, -0.2), c(0.7)]);
        let out = p.apply(&rho);
        let want = CMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(0.0)]);
        assert!((out - want).norm() < 1e-10);
    }

    #[test]
    fn stationary_limit_of_zero_generator() {
        let p = spectral_kernel_projector(&Superoperator::zeros(2)).unwrap();
        assert_eq!(p, Superoperator::identity(2));
    }

    #[test]
    fn growing_generator_rejected() {
        let l = Superoperator::identity(2);
        assert!(matches!(
            spectral_kernel_projector(&l),
            Err(Error::InvalidLindbladian { .. })
        ));
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::new(CMatrix::identity(2, 2)).is_err());
        assert!(DensityMatrix::new(CMatrix::identity(2, 2) * c(0.5)).is_ok());
        let bad = CMatrix::from_row_slice(2, 2, &[c(1.5), c(0.0), c(0.0), c(-0.5)]);
        assert!(DensityMatrix::new(bad).is_err());
    }
}
