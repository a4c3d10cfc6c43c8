//! Construction, verification and simulation of autonomously error-corrected open quantum
//! systems described by Lindblad master equations.

pub mod error;
pub mod dynamics;
pub mod effective;
pub mod error_sets;
pub mod factory;
pub mod kl;
pub mod linalg;
pub mod superop;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, C64};
pub use superop::{DensityMatrix, Operator, Superoperator};
