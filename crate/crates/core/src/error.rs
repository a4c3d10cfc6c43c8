use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("{0}")]
    InvalidInput(String),
    #[error("operator is not Hermitian (residual {residual:.3e})")]
    NotHermitian { residual: f64 },
    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),
    #[error("code basis is not orthonormal (residual {residual:.3e})")]
    NotOrthonormal { residual: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("not a valid Lindbladian: eigenvalue with real part {real_part:.3e}")]
    InvalidLindbladian { real_part: f64 },
    #[error("Knill-Laflamme condition not satisfied (worst residual {worst:.3e})")]
    KnillLaflamme { worst: f64 },
    #[error("construction inconsistency: {0}")]
    Inconsistent(String),
    #[error("symmetrized product degree {degree} exceeds cap {cap}")]
    DegreeCap { degree: usize, cap: usize },
    #[error("fit refused: {0}")]
    Fit(String),
    #[error("near-singular restricted generator (condition number {condition:.3e}); coupling too large")]
    Singular { condition: f64 },
    #[error("series diverges (term ratio {ratio:.3}); R too small")]
    Divergent { ratio: f64 },
    #[error("lower-order term k={order} did not cancel (norm {norm:.3e})")]
    Cancellation { order: usize, norm: f64 },
    #[error("engineered dissipator is gapless (gap {gap:.3e})")]
    Gapless { gap: f64 },
    #[error("unknown model '{0}'")]
    UnknownModel(String),
    #[error("propagation lost accuracy; retry with at least {suggested_substeps} substeps")]
    Stiffness { suggested_substeps: usize },
}

pub(crate) fn check_dim(context: &str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context: context.to_string(),
            expected,
            found,
        })
    }
}
